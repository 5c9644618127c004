#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rdrom/rdrom.h"

namespace fs = std::filesystem;

namespace {

struct Str {
  char* p = nullptr;
  ~Str() { rdrom_string_free(p); }
  std::string view() const { return p ? p : ""; }
};

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rdrom_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kSpec = R"({"K": 16, "T": 30, "pulses": [{"shape": "gaussian", "x0": 2.0, "speed": 0.5}]})";

}  // namespace

TEST(CApi, VersionAndNames) {
  EXPECT_STREQ(rdrom_version(), "1.0.0");
  EXPECT_STREQ(rdrom_status_name(RDROM_OK), "ok");
  EXPECT_STREQ(rdrom_status_name(RDROM_UNDEFINED_METRIC), "undefined_metric");
  Str stages;
  ASSERT_EQ(rdrom_pipeline_stages(&stages.p), RDROM_OK);
  EXPECT_EQ(stages.view().substr(0, 24), "track,untwist-preprocess");
}

TEST(CApi, FieldRoundTrip) {
  const std::vector<double> values{1, 2, 3, 4, 5, 6};
  rdrom_field* f = nullptr;
  ASSERT_EQ(rdrom_field_create(values.data(), 2, 3, 0.5, &f), RDROM_OK);
  size_t t = 0, k = 0;
  double dt = 0;
  ASSERT_EQ(rdrom_field_dims(f, &t, &k, &dt), RDROM_OK);
  EXPECT_EQ(t, 2u);
  EXPECT_EQ(k, 3u);
  EXPECT_EQ(dt, 0.5);

  const fs::path dir = scratch("roundtrip");
  const std::string path = (dir / "f.csv").string();
  ASSERT_EQ(rdrom_field_save(f, path.c_str()), RDROM_OK);
  rdrom_field* g = nullptr;
  ASSERT_EQ(rdrom_field_load(path.c_str(), &g), RDROM_OK);
  std::vector<double> back(6);
  ASSERT_EQ(rdrom_field_data(g, back.data(), back.size()), RDROM_OK);
  EXPECT_EQ(back, values);
  EXPECT_EQ(rdrom_field_data(g, back.data(), 5), RDROM_INVALID_ARGUMENT);
  EXPECT_NE(std::string(rdrom_last_error()).find("need 6"), std::string::npos);

  double ve = 0;
  ASSERT_EQ(rdrom_variance_explained(f, g, &ve), RDROM_OK);
  EXPECT_EQ(ve, 1.0);
  EXPECT_STREQ(rdrom_last_error(), "");
  rdrom_field_free(f);
  rdrom_field_free(g);
  rdrom_field_free(nullptr);
  fs::remove_all(dir);
}

TEST(CApi, ErrorStatuses) {
  rdrom_field* f = nullptr;
  EXPECT_EQ(rdrom_field_create(nullptr, 1, 1, 1.0, &f), RDROM_INVALID_ARGUMENT);
  EXPECT_NE(std::string(rdrom_last_error()).find("values"), std::string::npos);
  EXPECT_EQ(rdrom_field_load("/nonexistent/field.csv", &f), RDROM_IO);
  EXPECT_EQ(f, nullptr);

  const fs::path dir = scratch("errors");
  {
    std::FILE* fp = std::fopen((dir / "bad.csv").c_str(), "w");
    std::fputs("1,2\n3,x\n", fp);
    std::fclose(fp);
  }
  EXPECT_EQ(rdrom_field_load((dir / "bad.csv").c_str(), &f), RDROM_PARSE);

  const double c[4] = {2, 2, 2, 2};
  rdrom_field* flat = nullptr;
  ASSERT_EQ(rdrom_field_create(c, 2, 2, 1.0, &flat), RDROM_OK);
  double ve = 0;
  EXPECT_EQ(rdrom_variance_explained(flat, flat, &ve), RDROM_UNDEFINED_METRIC);
  rdrom_field_free(flat);

  EXPECT_EQ(rdrom_pipeline_validate("{\"stages\": []}"), RDROM_CONFIG);
  EXPECT_EQ(rdrom_field_synth("{\"K\": 0}", nullptr, &f), RDROM_INVALID_ARGUMENT);
  fs::remove_all(dir);
}

TEST(CApi, SynthAndModels) {
  const fs::path dir = scratch("models");
  const std::string truth = (dir / "truth.csv").string();
  rdrom_field* f = nullptr;
  ASSERT_EQ(rdrom_field_synth(kSpec, truth.c_str(), &f), RDROM_OK) << rdrom_last_error();
  size_t t = 0, k = 0;
  rdrom_field_dims(f, &t, &k, nullptr);
  EXPECT_EQ(t, 30u);
  EXPECT_EQ(k, 16u);
  EXPECT_TRUE(fs::exists(truth));
  rdrom_field_free(f);

  std::vector<double> x(600);
  for (int i = 0; i < 600; ++i) x[i] = 18.38 * std::exp(0.0011 * i) * std::cos(0.0837 * i);
  Str osc;
  ASSERT_EQ(rdrom_fit_oscillator(x.data(), x.size(), 1.0, &osc.p), RDROM_OK);
  EXPECT_NE(osc.view().find("\"growth\""), std::string::npos);
  EXPECT_EQ(rdrom_fit_oscillator(x.data(), 3, 1.0, &osc.p), RDROM_INVALID_ARGUMENT);

  std::vector<double> y(1001), z(1001);
  ASSERT_EQ(rdrom_lv_simulate(0.07, 0.13, 0.10, 0.05, 1.0, 0.5, 1000, 1.0, y.data(), z.data()), RDROM_OK);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(z[0], 0.5);
  EXPECT_EQ(rdrom_lv_simulate(-1, 0.13, 0.10, 0.05, 1.0, 0.5, 10, 1.0, y.data(), z.data()), RDROM_INVALID_ARGUMENT);
  ASSERT_EQ(rdrom_lv_simulate(0.07, 0.13, 0.10, 0.05, 1.0, 0.5, 1000, 1.0, y.data(), z.data()), RDROM_OK);
  Str lv;
  ASSERT_EQ(rdrom_lv_fit(y.data(), z.data(), y.size(), 500, 1.0, &lv.p), RDROM_OK);
  EXPECT_NE(lv.view().find("0.07"), std::string::npos);
  fs::remove_all(dir);
}

TEST(CApi, PipelineRunReturnsManifestOnFailure) {
  const fs::path dir = scratch("pipeline");
  const std::string ok = std::string(R"({"output": ")") + (dir / "ok").string() +
                         R"(", "input": {"synth": )" + kSpec + R"(}, "stages": ["pod"]})";
  EXPECT_EQ(rdrom_pipeline_validate(ok.c_str()), RDROM_OK);
  Str manifest;
  ASSERT_EQ(rdrom_pipeline_run(ok.c_str(), &manifest.p), RDROM_OK) << rdrom_last_error();
  EXPECT_NE(manifest.view().find("\"status\": \"ok\""), std::string::npos);

  const std::string bad = std::string(R"({"output": ")") + (dir / "bad").string() +
                          R"(", "input": {"synth": )" + kSpec + R"(}, "stages": ["track", {"stage": "lv", "waves": [0, 3]}]})";
  Str failed;
  EXPECT_EQ(rdrom_pipeline_run(bad.c_str(), &failed.p), RDROM_INVALID_ARGUMENT);
  EXPECT_NE(failed.view().find("\"failed\""), std::string::npos);
  EXPECT_NE(std::string(rdrom_last_error()).find("stage 'lv'"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "bad" / "FAILED"));
  fs::remove_all(dir);
}

// rdrom command-line front end. Every analysis subcommand assembles a
// pipeline config and hands it to the C API, so the CLI and `pipeline`
// share one code path and one artifact layout.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rdrom/rdrom.h"

using nlohmann::json;

namespace {

constexpr int kUsageError = 1;

// Two Gaussian waves near 4 px/step, the first with a sinusoidal speed
// perturbation. Used when neither --input nor --synth is given.
const char* kDemoSpec = R"({
  "K": 180, "T": 2000, "dt": 1.0, "noise_sigma": 0.01,
  "pulses": [
    {"shape": "gaussian", "amplitude": 1.0, "width": 3.0, "x0": 20.0,
     "speed": [{"kind": "constant", "value": 4.0},
               {"kind": "sine", "amplitude": 0.0628318530717959, "frequency": 0.0125663706143592}]},
    {"shape": "gaussian", "amplitude": 0.25, "width": 3.0, "x0": 110.0, "speed": 4.2}
  ]
})";

struct CliError {
  int code;
  std::string message;
};

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CliError{RDROM_IO, "cannot read " + path};
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw CliError{RDROM_CONFIG, what + " is not valid JSON: " + e.what()};
  }
}

std::vector<int> parse_pair(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw CliError{kUsageError, "--waves expects two comma-separated integers, got '" + s + "'"};
    }
  }
  if (out.size() != 2) throw CliError{kUsageError, "--waves expects two comma-separated integers, got '" + s + "'"};
  return out;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
  std::string input;
  std::string synth;
  std::optional<int> n_waves;
};

// Base document: --config if given, then global flags on top.
json base_config(const Globals& g) {
  json doc = g.config.empty() ? json::object() : parse_json(read_file(g.config), g.config);
  if (!doc.is_object()) throw CliError{RDROM_CONFIG, "config must be a JSON object"};
  if (!g.input.empty()) doc["input"] = {{"path", g.input}};
  if (!g.synth.empty()) doc["input"] = {{"synth", parse_json(read_file(g.synth), g.synth)}};
  if (!doc.contains("input")) doc["input"] = {{"synth", json::parse(kDemoSpec)}};
  if (!g.out.empty()) doc["output"] = g.out;
  if (!doc.contains("output")) doc["output"] = "rdrom_out";
  if (g.seed) doc["seed"] = *g.seed;
  return doc;
}

// Stage entry named `name`, starting from the matching entry in the config
// file (if any) and overridden by `flags`.
json stage(const json& doc, const Globals& g, const std::string& name, const json& flags = json::object()) {
  json entry = {{"stage", name}};
  if (doc.contains("stages") && doc.at("stages").is_array())
    for (const auto& s : doc.at("stages"))
      if (s.is_object() && s.value("stage", "") == name) entry = s;
  if (g.n_waves && (name == "track" || name.rfind("untwist-", 0) == 0)) entry["n_waves"] = *g.n_waves;
  for (const auto& [k, v] : flags.items()) entry[k] = v;
  return entry;
}

int run(json doc) {
  const std::string text = doc.dump();
  char* manifest = nullptr;
  const rdrom_status status = rdrom_pipeline_run(text.c_str(), &manifest);
  if (manifest) {
    const json m = json::parse(manifest);
    rdrom_string_free(manifest);
    std::size_t files = 0;
    for (const auto& s : m.at("stages")) {
      std::cout << s.at("stage").get<std::string>() << ": " << s.at("status").get<std::string>() << '\n';
      for (const auto& a : s.at("artifacts")) std::cout << "  " << a.at("path").get<std::string>() << '\n';
      files += s.at("artifacts").size();
    }
    std::cout << files << " artifacts in " << doc.at("output").get<std::string>() << '\n';
  }
  if (status != RDROM_OK) {
    std::cerr << "error (" << rdrom_status_name(status) << "): " << rdrom_last_error() << '\n';
    return status;
  }
  return 0;
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traveling-wave frame discovery and reduced-order models for periodic 1D fields"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_version_flag("--version", std::string(rdrom_version()));

  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every stochastic step")->check(CLI::NonNegativeNumber);
  app.add_option("--out", g.out, "Output directory (file for synth)");
  app.add_option("--config", g.config, "JSON pipeline config; flags override its fields")->check(CLI::ExistingFile);
  app.add_option("--input", g.input, "Field CSV to analyse")->check(CLI::ExistingFile);
  app.add_option("--synth", g.synth, "Synthetic field spec (JSON) to analyse")->check(CLI::ExistingFile);
  app.add_option("--n-waves", g.n_waves, "Number of waves for every tracking step")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic field and its ground-truth tracks");
  std::string spec_path, truth_path;
  synth->add_option("--spec", spec_path, "Synthetic field spec (JSON); default is the two-wave demo")
      ->check(CLI::ExistingFile);
  synth->add_option("--truth", truth_path, "Where to write the ground-truth tracks CSV");

  // track
  auto* track = app.add_subcommand("track", "Detect ridges and group them into wave tracks");
  std::optional<int> track_window;
  track->add_option("--window", track_window, "Rows used to seed the clustering")->check(CLI::PositiveNumber);

  // untwist
  auto* untwist = app.add_subcommand("untwist", "Two-stage shift into a co-moving frame");
  std::optional<int> uw_window, uw_wave;
  std::optional<double> uw_lambda, uw_zeta;
  std::optional<std::string> uw_reg;
  std::vector<std::string> uw_kinds;
  std::vector<double> uw_sine;
  bool uw_pre_only = false;
  untwist->add_option("--window", uw_window, "Rows used by the preprocessing fit")->check(CLI::PositiveNumber);
  untwist->add_option("--wave", uw_wave, "Track label of the wave to follow in the refine stage");
  untwist->add_option("--lambda", uw_lambda, "Sparsity weight")->check(CLI::NonNegativeNumber);
  untwist->add_option("--zeta", uw_zeta, "Relaxation weight")->check(CLI::PositiveNumber);
  untwist->add_option("--reg", uw_reg, "Regulariser")->check(CLI::IsMember({"l1", "l0"}));
  untwist->add_option("--library", uw_kinds, "Refine library terms")
      ->check(CLI::IsMember({"constant", "linear", "polynomial", "sine", "exp"}));
  untwist->add_option("--sine-freq", uw_sine, "Angular frequencies of the sine terms");
  untwist->add_flag("--preprocess-only", uw_pre_only, "Stop after the mean-speed shift");

  auto add_straighten = [](CLI::App* sub, bool& flag) {
    sub->add_flag("--straighten", flag, "Run untwist preprocess + refine first and use the refined frame");
  };

  // pod
  auto* podc = app.add_subcommand("pod", "Proper orthogonal decomposition");
  std::optional<int> pod_rank;
  bool pod_straighten = false;
  podc->add_option("--rank", pod_rank, "Number of modes kept")->check(CLI::PositiveNumber);
  add_straighten(podc, pod_straighten);

  // rpca
  auto* rpcac = app.add_subcommand("rpca", "Robust PCA (low rank + sparse)");
  std::optional<double> rpca_lambda;
  bool rpca_straighten = false;
  rpcac->add_option("--lambda", rpca_lambda, "Sparse weight; default 1/sqrt(max(K,T))")->check(CLI::PositiveNumber);
  add_straighten(rpcac, rpca_straighten);

  // dmd
  auto* dmdc = app.add_subcommand("dmd", "Exact DMD, optionally with a damped-oscillator fit of a wave separation");
  std::optional<int> dmd_rank;
  bool dmd_straighten = false, dmd_osc = false;
  std::string dmd_waves = "0,1";
  dmdc->add_option("--rank", dmd_rank, "SVD truncation rank")->check(CLI::PositiveNumber);
  dmdc->add_flag("--oscillator", dmd_osc, "Also track the waves and fit the separation oscillator");
  dmdc->add_option("--waves", dmd_waves, "Track labels a,b for the oscillator fit");
  add_straighten(dmdc, dmd_straighten);

  // lv
  auto* lvc = app.add_subcommand("lv", "Lotka-Volterra fit of two wave positions");
  std::string lv_waves = "0,1";
  std::optional<int> lv_train;
  lvc->add_option("--waves", lv_waves, "Track labels a,b");
  lvc->add_option("--train-len", lv_train, "Training steps")->check(CLI::PositiveNumber);

  // koopman
  auto* koop = app.add_subcommand("koopman", "Koopman forecast or modal decomposition");
  std::string variant = "forecast";
  std::optional<int> k_epochs, k_n, k_rows, k_first, k_stride;
  koop->add_option("--variant", variant, "forecast or modal")->check(CLI::IsMember({"forecast", "modal"}));
  koop->add_option("--epochs", k_epochs, "Training epochs")->check(CLI::PositiveNumber);
  koop->add_option("--n", k_n, "Frequencies (forecast) or modes (modal)")->check(CLI::PositiveNumber);
  koop->add_option("--rows", k_rows, "Number of rows used")->check(CLI::PositiveNumber);
  koop->add_option("--first-row", k_first, "First row used")->check(CLI::NonNegativeNumber);
  koop->add_option("--stride-x", k_stride, "Keep every n-th column")->check(CLI::PositiveNumber);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run every stage listed in --config");
  bool validate_only = false;
  pipe->add_flag("--validate", validate_only, "Check the config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*synth) {
      std::string spec = spec_path.empty() ? std::string(kDemoSpec) : read_file(spec_path);
      json j = parse_json(spec, "spec");
      if (g.seed) j["seed"] = *g.seed;
      const std::string out = g.out.empty() ? "field.csv" : g.out;
      rdrom_field* field = nullptr;
      rdrom_status s = rdrom_field_synth(j.dump().c_str(), truth_path.empty() ? nullptr : truth_path.c_str(), &field);
      if (s == RDROM_OK) s = rdrom_field_save(field, out.c_str());
      size_t t = 0, k = 0;
      if (s == RDROM_OK) s = rdrom_field_dims(field, &t, &k, nullptr);
      rdrom_field_free(field);
      if (s != RDROM_OK) throw CliError{s, rdrom_last_error()};
      std::cout << "wrote " << out << " (T=" << t << ", K=" << k << ")\n";
      return 0;
    }

    if (*pipe) {
      if (g.config.empty()) throw CliError{kUsageError, "pipeline requires --config"};
      json doc = base_config(g);
      if (validate_only) {
        const rdrom_status s = rdrom_pipeline_validate(doc.dump().c_str());
        if (s != RDROM_OK) throw CliError{s, rdrom_last_error()};
        std::cout << "config ok\n";
        return 0;
      }
      return run(doc);
    }

    json doc = base_config(g);
    json stages = json::array();
    auto straighten = [&] {
      stages.push_back(stage(doc, g, "untwist-preprocess"));
      stages.push_back(stage(doc, g, "untwist-refine"));
    };

    if (*track) {
      json f;
      put(f, "window", track_window);
      stages.push_back(stage(doc, g, "track", f));
    } else if (*untwist) {
      json pre, ref;
      put(pre, "window", uw_window);
      for (json* j : {&pre, &ref}) {
        put(*j, "lambda", uw_lambda);
        put(*j, "zeta", uw_zeta);
        put(*j, "reg", uw_reg);
      }
      put(ref, "wave", uw_wave);
      if (!uw_kinds.empty() || !uw_sine.empty()) {
        json lib = {{"kinds", uw_kinds.empty() ? std::vector<std::string>{"linear", "sine"} : uw_kinds}};
        if (!uw_sine.empty()) lib["sine_frequencies"] = uw_sine;
        ref["library"] = lib;
      }
      stages.push_back(stage(doc, g, "untwist-preprocess", pre));
      if (!uw_pre_only) stages.push_back(stage(doc, g, "untwist-refine", ref));
    } else if (*podc) {
      if (pod_straighten) straighten();
      json f;
      put(f, "rank", pod_rank);
      stages.push_back(stage(doc, g, "pod", f));
    } else if (*rpcac) {
      if (rpca_straighten) straighten();
      json f;
      put(f, "lambda", rpca_lambda);
      stages.push_back(stage(doc, g, "rpca", f));
    } else if (*dmdc) {
      if (dmd_straighten) straighten();
      json f;
      put(f, "rank", dmd_rank);
      stages.push_back(stage(doc, g, "dmd", f));
      if (dmd_osc) {
        stages.push_back(stage(doc, g, "track", g.n_waves ? json::object() : json{{"n_waves", 2}}));
        stages.push_back(stage(doc, g, "oscillator", {{"waves", parse_pair(dmd_waves)}}));
      }
    } else if (*lvc) {
      json f = {{"waves", parse_pair(lv_waves)}};
      put(f, "train_len", lv_train);
      stages.push_back(stage(doc, g, "track", g.n_waves ? json::object() : json{{"n_waves", 2}}));
      stages.push_back(stage(doc, g, "lv", f));
    } else if (*koop) {
      json f;
      put(f, "epochs", k_epochs);
      put(f, variant == "modal" ? "n_modes" : "n_freq", k_n);
      put(f, "rows", k_rows);
      put(f, "first_row", k_first);
      put(f, "stride_x", k_stride);
      stages.push_back(stage(doc, g, "koopman-" + variant, f));
    }
    doc["stages"] = stages;
    return run(doc);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  }
}

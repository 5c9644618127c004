#include "rdrom/rdrom.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "rdrom/error.hpp"
#include "rdrom/field.hpp"
#include "rdrom/linear_models.hpp"
#include "rdrom/lotka_volterra.hpp"
#include "rdrom/pipeline.hpp"
#include "rdrom/tracking.hpp"

struct rdrom_field {
  rdrom::Field field;
};

namespace {

thread_local std::string g_last_error;

rdrom_status set_error(rdrom_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class F>
rdrom_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return RDROM_OK;
  } catch (const rdrom::Error& e) {
    return set_error(static_cast<rdrom_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(RDROM_NUMERICAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(RDROM_STAGE_FAILURE, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* name) {
  if (!p) rdrom::fail(rdrom::ErrorCode::InvalidArgument, std::string(name) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* rdrom_version(void) { return "1.0.0"; }

const char* rdrom_last_error(void) { return g_last_error.c_str(); }

const char* rdrom_status_name(rdrom_status status) {
  if (status == RDROM_OK) return "ok";
  return rdrom::error_code_name(static_cast<rdrom::ErrorCode>(status));
}

void rdrom_string_free(char* s) { std::free(s); }

rdrom_status rdrom_field_create(const double* values, size_t time_steps, size_t space_points, double dt,
                                rdrom_field** out) {
  return guarded([&] {
    need(values, "values");
    need(out, "out");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(time_steps), static_cast<Eigen::Index>(space_points));
    for (size_t t = 0; t < time_steps; ++t)
      for (size_t x = 0; x < space_points; ++x)
        m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(x)) = values[t * space_points + x];
    *out = new rdrom_field{rdrom::Field(std::move(m), dt)};
  });
}

rdrom_status rdrom_field_load(const char* path, rdrom_field** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new rdrom_field{rdrom::load_field(path)};
  });
}

rdrom_status rdrom_field_save(const rdrom_field* field, const char* path) {
  return guarded([&] {
    need(field, "field");
    need(path, "path");
    rdrom::save_field(field->field, path);
  });
}

rdrom_status rdrom_field_synth(const char* spec_json, const char* truth_path, rdrom_field** out) {
  return guarded([&] {
    need(spec_json, "spec_json");
    need(out, "out");
    rdrom::SynthResult r = rdrom::synth_field(rdrom::synth_spec_from_json(spec_json));
    if (truth_path) rdrom::save_tracks(r.truth, truth_path);
    *out = new rdrom_field{std::move(r.field)};
  });
}

rdrom_status rdrom_field_dims(const rdrom_field* field, size_t* time_steps, size_t* space_points, double* dt) {
  return guarded([&] {
    need(field, "field");
    if (time_steps) *time_steps = static_cast<size_t>(field->field.time_steps());
    if (space_points) *space_points = static_cast<size_t>(field->field.space_points());
    if (dt) *dt = field->field.dt();
  });
}

rdrom_status rdrom_field_data(const rdrom_field* field, double* out, size_t capacity) {
  return guarded([&] {
    need(field, "field");
    need(out, "out");
    const auto& v = field->field.values();
    const size_t n = static_cast<size_t>(v.size());
    rdrom::require(capacity >= n, "output buffer holds " + std::to_string(capacity) + " values, need " +
                                      std::to_string(n));
    const size_t k = static_cast<size_t>(v.cols());
    for (Eigen::Index t = 0; t < v.rows(); ++t)
      for (Eigen::Index x = 0; x < v.cols(); ++x) out[static_cast<size_t>(t) * k + static_cast<size_t>(x)] = v(t, x);
  });
}

void rdrom_field_free(rdrom_field* field) { delete field; }

rdrom_status rdrom_variance_explained(const rdrom_field* truth, const rdrom_field* prediction, double* out) {
  return guarded([&] {
    need(truth, "truth");
    need(prediction, "prediction");
    need(out, "out");
    *out = rdrom::variance_explained(truth->field, prediction->field);
  });
}

rdrom_status rdrom_fit_oscillator(const double* x, size_t n, double dt, char** json_out) {
  return guarded([&] {
    need(x, "x");
    need(json_out, "json_out");
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(x, static_cast<Eigen::Index>(n));
    *json_out = dup_string(rdrom::oscillator_fit_to_json(rdrom::fit_oscillator(v, dt)));
  });
}

rdrom_status rdrom_lv_simulate(double alpha, double beta, double delta, double gamma, double y0, double z0,
                               int n_steps, double h, double* y_out, double* z_out) {
  return guarded([&] {
    need(y_out, "y_out");
    need(z_out, "z_out");
    const rdrom::LvTrajectory traj = rdrom::lv_simulate({alpha, beta, delta, gamma}, y0, z0, n_steps, h);
    std::copy(traj.y.begin(), traj.y.end(), y_out);
    std::copy(traj.z.begin(), traj.z.end(), z_out);
  });
}

rdrom_status rdrom_lv_fit(const double* y, const double* z, size_t n, int train_len, double dt, char** json_out) {
  return guarded([&] {
    need(y, "y");
    need(z, "z");
    need(json_out, "json_out");
    const rdrom::LvFit fit = rdrom::lv_fit_sweep({y, y + n}, {z, z + n}, train_len, dt);
    *json_out = dup_string(rdrom::lv_fit_to_json(fit));
  });
}

rdrom_status rdrom_pipeline_validate(const char* config_json) {
  return guarded([&] {
    need(config_json, "config_json");
    rdrom::validate_pipeline_config(config_json);
  });
}

rdrom_status rdrom_pipeline_run(const char* config_json, char** manifest_out) {
  rdrom::PipelineReport report;
  const rdrom_status status = guarded([&] {
    need(config_json, "config_json");
    report = rdrom::run_pipeline(config_json);
    if (manifest_out) *manifest_out = dup_string(report.manifest_json);
  });
  if (status != RDROM_OK) return status;
  if (!report.ok)
    return set_error(static_cast<rdrom_status>(report.error_code),
                     "stage '" + report.failed_stage + "' failed: " + report.error_message);
  return RDROM_OK;
}

rdrom_status rdrom_pipeline_stages(char** out) {
  return guarded([&] {
    need(out, "out");
    std::string s;
    for (const auto& name : rdrom::pipeline_stage_names()) s += (s.empty() ? "" : ",") + name;
    *out = dup_string(s);
  });
}

}  // extern "C"

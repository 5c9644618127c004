#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rdrom/wave_track.hpp"

namespace rdrom {

/// Real-valued u(x, t) sampled on a spatially periodic domain.
///
/// Rows are time snapshots and columns are spatial samples, so `values()` is
/// T x K. Spatial indices are taken modulo K. The domain length equals K in
/// normalized pixel units. Instances are immutable.
class Field {
 public:
  Field(Eigen::MatrixXd values, double dt);

  Eigen::Index time_steps() const { return values_.rows(); }
  Eigen::Index space_points() const { return values_.cols(); }
  double dt() const { return dt_; }
  double domain_length() const { return static_cast<double>(values_.cols()); }

  const Eigen::MatrixXd& values() const { return values_; }
  double operator()(Eigen::Index t, Eigen::Index x) const { return values_(t, x); }

  /// Rows [first, first + count) as a new field with the same dt.
  Field rows(Eigen::Index first, Eigen::Index count) const;

 private:
  Eigen::MatrixXd values_;
  double dt_;
};

// ---------------------------------------------------------------------------
// CSV storage
//
//   # K=<int> T=<int> dt=<float>
//   v(0,0),v(0,1),...,v(0,K-1)
//   ...
//
// Numbers are written in shortest round-trip form, so save/load is bit-exact.

Field load_field(const std::filesystem::path& path);
void save_field(const Field& field, const std::filesystem::path& path);

Field parse_field_csv(const std::string& text);
std::string format_field_csv(const Field& field);

// ---------------------------------------------------------------------------
// Synthetic ground truth

enum class PulseShape { Gaussian, Sawtooth };

/// One additive term of a pulse speed function v(t), in px per unit time.
struct SpeedTerm {
  enum class Kind { Constant, Linear, Sine, Exponential };
  Kind kind = Kind::Constant;
  double value = 0.0;      // constant: v; linear: slope s (v = s t);
                           // sine: amplitude a; exponential: amplitude a
  double frequency = 0.0;  // sine: v = a sin(frequency t + phase)
  double phase = 0.0;
  double rate = 0.0;       // exponential: v = a exp(rate t)
};

struct PulseSpec {
  PulseShape shape = PulseShape::Gaussian;
  double amplitude = 1.0;
  double width = 3.0;
  double x0 = 0.0;
  std::vector<SpeedTerm> speed;

  /// Unwrapped center x0 + integral of the speed from 0 to t.
  double center(double t) const;
};

struct SynthSpec {
  int space_points = 180;
  int time_steps = 200;
  double dt = 1.0;
  std::vector<PulseSpec> pulses;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  Field field;
  std::vector<WaveTrack> truth;  // exact centers, one track per pulse
};

SynthResult synth_field(const SynthSpec& spec);

/// Noiseless field containing only pulse `index`.
Field synth_component(const SynthSpec& spec, std::size_t index);

/// Value of one pulse profile at column x given its (unwrapped) center.
double pulse_value(const PulseSpec& pulse, double x, double center, double domain_length);

SynthSpec synth_spec_from_json(const std::string& json_text);
std::string synth_spec_to_json(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// Metrics

/// 1 - SSE / SST with SST taken about the mean of `truth`. Throws
/// ErrorCode::UndefinedMetric when truth is constant.
double variance_explained(const Eigen::Ref<const Eigen::MatrixXd>& truth,
                          const Eigen::Ref<const Eigen::MatrixXd>& prediction);
double variance_explained(const Field& truth, const Field& prediction);

/// Column index of the maximum of every row.
std::vector<int> row_argmax(const Field& field);

}  // namespace rdrom

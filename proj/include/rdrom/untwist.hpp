#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rdrom/field.hpp"
#include "rdrom/tracking.hpp"

namespace rdrom {

// ---------------------------------------------------------------------------
// Candidate function library

enum class TermKind { Constant, Linear, Polynomial, Sine, Exponential };

struct LibraryTerm {
  std::string name;
  TermKind kind = TermKind::Constant;
  std::vector<double> params;
  std::function<double(double)> f;
};

class FunctionLibrary {
 public:
  explicit FunctionLibrary(std::vector<LibraryTerm> terms);

  std::size_t size() const { return terms_.size(); }
  const std::vector<LibraryTerm>& terms() const { return terms_; }
  const LibraryTerm& operator[](std::size_t i) const { return terms_[i]; }
  std::vector<std::string> names() const;

  /// Row of term values at time t.
  Eigen::RowVectorXd evaluate(double t) const;

 private:
  std::vector<LibraryTerm> terms_;
};

/// Which term families to include. `linear` yields {1, t}; `polynomial`
/// yields {1, t, t^2 .. t^degree}; each sine frequency w contributes
/// sin(w t) and cos(w t); each exponential rate r contributes exp(r t).
/// Terms appear in that order with duplicates removed.
struct LibraryRequest {
  std::vector<TermKind> kinds;
  int polynomial_degree = 2;
  std::vector<double> sine_frequencies;
  std::vector<double> exp_rates;
};

FunctionLibrary build_library(const LibraryRequest& request);

/// The {1, t} library used by the preprocessing shift.
FunctionLibrary linear_library();

// ---------------------------------------------------------------------------
// Sparse relaxed regularized regression

enum class Regularizer { L1, L0 };

struct Sr3Options {
  /// Penalty weight on the sparse auxiliary matrix. When unset it defaults
  /// to 1e-3 * max |T^T x| computed with unit-norm library columns.
  std::optional<double> lambda;
  double zeta = 1.0;
  Regularizer regularizer = Regularizer::L1;
  int max_iter = 500;
  double tol = 1e-8;
};

/// Result of fitting wave-position models x_w(t) = sum_j C(j, w) f_j(t).
///
/// The solver works with library columns scaled to unit norm; C and B are
/// reported in the original (unscaled) term units, and `objective` plus
/// `objective_history` hold the cost evaluated in the scaled problem.
/// `debiased` refits each wave by least squares restricted to the support of
/// its column of B, which removes the shrinkage that the penalty puts on C.
struct SpeedModel {
  std::vector<std::string> term_names;
  Eigen::MatrixXd C;  // n_terms x n_waves
  Eigen::MatrixXd B;  // n_terms x n_waves, sparse
  Eigen::MatrixXd W;  // n_points x n_waves, 0/1 assignment mask
  Eigen::MatrixXd debiased;  // n_terms x n_waves, zero off the support of B
  double lambda = 0.0;
  double zeta = 1.0;
  Regularizer regularizer = Regularizer::L1;
  double objective = 0.0;
  std::vector<double> objective_history;
  int iterations = 0;
  bool converged = false;

  /// Indices of the nonzero entries of column `wave` of B.
  std::vector<int> active_terms(int wave) const;
};

/// Minimises
///   1/2 ||W o (X - T C)||^2 + lambda R(B) + 1/(2 zeta) ||C - B||^2
/// by alternating the closed-form ridge solve for C with the proximal map of
/// lambda R for B (soft threshold for L1, hard threshold for L0).
/// X holds the unwrapped track positions and T the library evaluated at
/// t_index * dt; W is fixed by the track assignment.
SpeedModel fit_sr3(const std::vector<WaveTrack>& tracks, const FunctionLibrary& library,
                   double dt, const Sr3Options& options = {});

/// Model position of `wave` at time t using the debiased coefficients.
double model_position(const SpeedModel& model, const FunctionLibrary& library, int wave,
                      double t);

std::string speed_model_to_json(const SpeedModel& model, const FunctionLibrary& library);

// ---------------------------------------------------------------------------
// Frame shifting

enum class Interpolation { Nearest, Linear };

struct ShiftSpec {
  std::vector<double> offsets;  // px, one per time row
  Interpolation interpolation = Interpolation::Linear;
};

/// Row r becomes the circular translation of the input row by -offsets[r]:
/// out(r, x) = in(r, x + offsets[r]) with periodic wrap.
Field shift_field(const Field& field, const ShiftSpec& spec);

struct TrackingParams {
  double min_prominence = 0.1;
  int min_separation = 5;
  int n_waves = 1;
  double kernel_scale = 10.0;
  ClusterOptions cluster;
};

struct PreprocessOptions {
  int window = 10;
  TrackingParams tracking;
  Sr3Options sr3;
};

struct PreprocessResult {
  Field shifted;
  double mean_speed = 0.0;  // px per unit time
  std::vector<WaveTrack> tracks;
  SpeedModel model;
  ShiftSpec shift;
};

/// Detects and clusters peaks in the first `window` rows, fits a linear
/// model per wave, and shifts the whole field by mean_speed * r * dt.
PreprocessResult preprocess_shift(const Field& field, const PreprocessOptions& options = {});

struct RefineOptions {
  /// Rows used to seed the tracks by spectral clustering.
  int seed_window = 10;
  TrackingParams tracking;
  LinkOptions link;
  Sr3Options sr3;
};

struct RefineResult {
  Field shifted;
  std::vector<WaveTrack> tracks;
  SpeedModel model;
  ShiftSpec shift;
};

/// Re-detects peaks over the whole (already preprocessed) field, seeds the
/// tracks from the first rows and links them forward, fits every wave over
/// `library`, and shifts by the fitted trajectory of `wave_index` so that
/// wave becomes stationary.
RefineResult refine_shift(const Field& preprocessed, const FunctionLibrary& library,
                          int wave_index, const RefineOptions& options = {});

}  // namespace rdrom

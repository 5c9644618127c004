#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "rdrom/field.hpp"
#include "rdrom/network.hpp"

namespace rdrom {

/// [cos(w_1 t) .. cos(w_n t), sin(w_1 t) .. sin(w_n t)].
Eigen::VectorXd oscillator_features(const Eigen::VectorXd& omegas, double t);

/// Column j holds the features at times(j).
Eigen::MatrixXd oscillator_features(const Eigen::VectorXd& omegas, const Eigen::VectorXd& times);

// ---------------------------------------------------------------------------
// Global frequency search

struct FreqSearchOptions {
  /// Samples of each local loss over one period of its phase.
  int samples_per_period = 8;
  /// Aggregate grid step is pi / (grid_factor * T).
  int grid_factor = 8;
  double omega_min = 0.0;
  double omega_max = std::numbers::pi;
};

struct FreqSearchResult {
  double omega = 0.0;
  double value = 0.0;
  Eigen::VectorXd grid;
  Eigen::VectorXd aggregate;
};

/// Every local loss L_t(w) depends on w only through the phase w t, so it
/// is periodic in w with period 2 pi / t. Each L_t is sampled at the S
/// phases 2 pi s / S (its first period), extended to the whole dense grid by
/// trigonometric interpolation of those samples, and the sum over t is
/// minimised over the grid. Interpolation is exact when every L_t, as a
/// function of phase, has no harmonics above S/2 - 1.
///
/// `loss(t, w)` is evaluated for t = 0 .. time_steps - 1.
FreqSearchResult global_freq_search(const std::function<double(int, double)>& loss, int time_steps,
                                    const FreqSearchOptions& options = {});

/// The aggregation step on its own. samples(j, s) is the loss of time
/// times(j) at phase 2 pi s / S. The grid step uses `horizon` as T.
FreqSearchResult aggregate_phase_samples(const Eigen::MatrixXd& samples,
                                         const Eigen::VectorXd& times, int horizon,
                                         const FreqSearchOptions& options = {});

// ---------------------------------------------------------------------------
// Training schedule shared by both models

/// Full-batch gradient descent with momentum and a step-decay learning
/// rate. A step that would raise the loss is rejected: the velocity is reset
/// and a backoff factor on the rate is halved (it recovers by 5% per accepted
/// step, up to 1). The recorded loss is therefore non-increasing.
struct TrainSchedule {
  int epochs = 3000;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int decay_every = 1000;
  double decay = 0.5;
  /// Epochs between coordinate-wise frequency updates.
  int freq_every = 250;
};

// ---------------------------------------------------------------------------
// Koopman forecast: u(t) ~ decoder(Omega(w t))

struct KoopmanForecastOptions {
  int n_freq = 1;
  std::vector<int> hidden = {32, 32};
  TrainSchedule schedule;
  FreqSearchOptions search;
  /// Leading fraction of rows used for training; the rest is held out.
  double train_fraction = 6.0 / 7.0;
  std::uint64_t seed = 0;
};

struct KoopmanForecastModel {
  Eigen::VectorXd omegas;  // rad per time step, in [0, pi)
  FeedForwardNet decoder;  // 2n -> hidden -> K
  double offset = 0.0;     // data = offset + scale * decoder output
  double scale = 1.0;
  double dt = 1.0;
  int train_steps = 0;
  int total_steps = 0;
  std::vector<double> loss_history;  // per epoch, standardised mean squared error
  std::optional<double> train_variance_explained;
  std::optional<double> test_variance_explained;
};

KoopmanForecastModel fit_koopman_forecast(const Field& field, const KoopmanForecastOptions& options = {});

/// Rows offset + scale * f(Omega(w t)) for t = first .. first + count - 1
/// (row indices), count x K.
Eigen::MatrixXd forecast(const KoopmanForecastModel& model, int first, int count);

std::string koopman_forecast_to_json(const KoopmanForecastModel& model);

// ---------------------------------------------------------------------------
// Modal Koopman: u(x, t) ~ sum_i m_i(2 pi x / K - w_i t)

struct ModalKoopmanOptions {
  int n_modes = 1;
  std::vector<int> hidden = {32, 32};
  TrainSchedule schedule = {1000, 0.05, 0.9, 1000, 0.5, 50};
  FreqSearchOptions search = {32, 8, -std::numbers::pi, std::numbers::pi};
  std::uint64_t seed = 0;
};

/// Mode i is m_i(theta) = g_i([sin theta, cos theta]) evaluated at
/// theta = 2 pi x / K - w_i t, so positive w_i moves toward increasing x at
/// w_i K / (2 pi) px per step. Each mode field carries offset / N so that
/// the modes sum to the full prediction.
struct ModalKoopmanModel {
  int space_points = 0;
  Eigen::VectorXd omegas;  // rad per time step, signed
  std::vector<FeedForwardNet> mode_nets;  // each 2 -> hidden -> 1
  double offset = 0.0;
  double scale = 1.0;
  double dt = 1.0;
  std::vector<double> loss_history;
  std::optional<double> variance_explained;

  int n_modes() const { return static_cast<int>(mode_nets.size()); }
  /// Translation speed of mode i in px per time step.
  double speed(int mode) const;
  /// Value of mode i at (possibly fractional) position x and time t.
  double mode_value(int mode, double x, double t) const;
};

ModalKoopmanModel fit_modal_koopman(const Field& field, const ModalKoopmanOptions& options = {});

struct ModalFields {
  std::vector<Eigen::MatrixXd> modes;  // each count x K
  Eigen::MatrixXd aggregate;           // sum of `modes`
};

ModalFields decompose_modes(const ModalKoopmanModel& model, int first, int count);

std::string modal_koopman_to_json(const ModalKoopmanModel& model);

}  // namespace rdrom

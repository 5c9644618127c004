#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "rdrom/field.hpp"
#include "rdrom/wave_track.hpp"

namespace rdrom {

// ---------------------------------------------------------------------------
// Exact DMD

struct DmdModel {
  Eigen::VectorXcd eigenvalues;  // discrete-time lambda_j
  Eigen::MatrixXcd modes;        // n x r, exact DMD modes phi_j
  Eigen::VectorXcd amplitudes;   // b_j, least-squares coordinates of u_0
  double dt = 1.0;

  Eigen::Index rank() const { return eigenvalues.size(); }
  /// omega_j = log(lambda_j) / dt (principal branch).
  Eigen::VectorXcd continuous_eigenvalues() const;
  /// Real part of Phi Lambda^k b.
  Eigen::VectorXd state(int k) const;
};

/// Exact DMD of a state matrix whose columns are consecutive snapshots.
/// Uses the rank-r truncated SVD of X = data[:, 0..T-2]; singular values
/// below 1e-12 * sigma_1 are dropped, so the returned rank can be smaller
/// than requested. Unset rank means min(n, T-1).
DmdModel exact_dmd(const Eigen::MatrixXd& snapshots, double dt,
                   std::optional<Eigen::Index> rank = std::nullopt);

/// DMD of a field with snapshots as columns (state dimension K).
DmdModel exact_dmd(const Field& field, std::optional<Eigen::Index> rank = std::nullopt);

/// DMD of a scalar series through a `delays`-row Hankel embedding.
DmdModel exact_dmd_series(const Eigen::VectorXd& series, double dt, int delays,
                          std::optional<Eigen::Index> rank = std::nullopt);

/// Columns k = 0..k_max of Re(Phi Lambda^k b).
Eigen::MatrixXd dmd_forecast(const DmdModel& model, int k_max);

std::string dmd_model_to_json(const DmdModel& model);

// ---------------------------------------------------------------------------
// Damped oscillator fit

/// x(t) = amplitude * exp(growth t) * cos(frequency t + phase).
struct OscillatorFit {
  double amplitude = 0.0;
  double growth = 0.0;     // per unit time
  double frequency = 0.0;  // rad per unit time, >= 0
  double phase = 0.0;      // rad, in (-pi, pi]
  double residual = 0.0;   // root-mean-square residual
  int iterations = 0;
  bool converged = false;

  double operator()(double t) const;
};

struct OscillatorOptions {
  int max_iter = 200;
  double tol = 1e-14;  // relative decrease of the residual sum of squares
};

/// Nonlinear least squares (Levenberg-Marquardt) of the four-parameter
/// model on samples x[k] at t = k dt. Frequency starts from the zero-padded
/// FFT peak, growth from the slope of the log envelope, and amplitude and
/// phase from a linear least-squares solve with those two fixed.
OscillatorFit fit_oscillator(const Eigen::VectorXd& x, double dt,
                             const OscillatorOptions& options = {});

std::string oscillator_fit_to_json(const OscillatorFit& fit);

/// Separation between two unwrapped tracks, minus its mean, sampled at every
/// integer time index in the overlap of the two tracks (linear
/// interpolation fills coasted gaps).
struct SeparationSeries {
  int first_t = 0;
  Eigen::VectorXd values;
  double mean = 0.0;  // removed offset
};

SeparationSeries wave_separation(const WaveTrack& a, const WaveTrack& b);

/// Central differences in the interior, one-sided at the ends.
Eigen::VectorXd finite_difference(const Eigen::VectorXd& x, double dt);

}  // namespace rdrom

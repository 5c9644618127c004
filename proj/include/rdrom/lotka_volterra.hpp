#pragma once

#include <string>
#include <vector>

namespace rdrom {

/// dy/dt = alpha y - beta y z,  dz/dt = delta y z - gamma z.
struct LvParams {
  double alpha = 0.0;
  double beta = 0.0;
  double delta = 0.0;
  double gamma = 0.0;

  void validate() const;  // all strictly positive and finite
  bool operator==(const LvParams&) const = default;
};

struct LvTrajectory {
  std::vector<double> t;
  std::vector<double> y;
  std::vector<double> z;
};

/// Classical fixed-step RK4 from (y0, z0); returns n_steps + 1 samples.
/// Throws ErrorCode::Numerical naming the step where a state overflows.
LvTrajectory lv_simulate(const LvParams& params, double y0, double z0, int n_steps, double h);

/// First integral V = delta y - gamma ln y + beta z - alpha ln z per sample.
std::vector<double> lv_conserved(const LvParams& params, const LvTrajectory& trajectory);

/// Values min, min + step, ... up to max (inclusive within 1e-9 steps), each
/// rounded to 12 significant digits so 0.07 on the grid equals the literal.
std::vector<double> grid_range(double min, double max, double step);

struct LvGrids {
  std::vector<double> alpha = grid_range(0.01, 0.30, 0.01);
  std::vector<double> beta = grid_range(0.01, 0.30, 0.01);
  std::vector<double> delta = grid_range(0.01, 0.30, 0.01);
  std::vector<double> gamma = grid_range(0.01, 0.30, 0.01);
};

struct LvFit {
  LvParams params;
  double train_error = 0.0;  // Frobenius norm over the training window
  long long candidates = 0;  // grid points scored
  long long overflowed = 0;  // grid points skipped because the simulation overflowed
};

/// Exhaustive grid search. Every candidate is simulated from (y[0], z[0])
/// with h = dt over the first train_len samples and scored by
/// ||[y_hat - y, z_hat - z]||_F. Ties keep the first candidate in
/// (alpha, beta, delta, gamma) lexicographic grid order.
LvFit lv_fit_sweep(const std::vector<double>& y, const std::vector<double>& z, int train_len,
                   double dt, const LvGrids& grids = {});

std::string lv_fit_to_json(const LvFit& fit);

}  // namespace rdrom

#include "rdrom/lotka_volterra.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <nlohmann/json.hpp>

#include "rdrom/error.hpp"

namespace rdrom {

void LvParams::validate() const {
  for (double v : {alpha, beta, delta, gamma})
    require(std::isfinite(v) && v > 0.0, "Lotka-Volterra parameters must be finite and > 0");
}

namespace {

constexpr double kOverflow = 1e150;

struct Rk4 {
  double a, b, d, g, h;

  void step(double& y, double& z) const {
    auto fy = [&](double yy, double zz) { return a * yy - b * yy * zz; };
    auto fz = [&](double yy, double zz) { return d * yy * zz - g * zz; };
    const double k1y = fy(y, z), k1z = fz(y, z);
    const double y2 = y + 0.5 * h * k1y, z2 = z + 0.5 * h * k1z;
    const double k2y = fy(y2, z2), k2z = fz(y2, z2);
    const double y3 = y + 0.5 * h * k2y, z3 = z + 0.5 * h * k2z;
    const double k3y = fy(y3, z3), k3z = fz(y3, z3);
    const double y4 = y + h * k3y, z4 = z + h * k3z;
    const double k4y = fy(y4, z4), k4z = fz(y4, z4);
    y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
  }
};

bool blown_up(double y, double z) {
  return !std::isfinite(y) || !std::isfinite(z) || std::abs(y) > kOverflow || std::abs(z) > kOverflow;
}

}  // namespace

LvTrajectory lv_simulate(const LvParams& params, double y0, double z0, int n_steps, double h) {
  params.validate();
  require(std::isfinite(y0) && std::isfinite(z0) && y0 >= 0.0 && z0 >= 0.0,
          "lv_simulate: initial conditions must be finite and >= 0");
  require(n_steps >= 0, "lv_simulate: n_steps must be >= 0");
  require(std::isfinite(h) && h > 0.0, "lv_simulate: h must be > 0");
  const Rk4 rk{params.alpha, params.beta, params.delta, params.gamma, h};
  LvTrajectory out;
  out.t.reserve(static_cast<std::size_t>(n_steps) + 1);
  out.y.reserve(out.t.capacity());
  out.z.reserve(out.t.capacity());
  double y = y0, z = z0;
  for (int k = 0;; ++k) {
    out.t.push_back(k * h);
    out.y.push_back(y);
    out.z.push_back(z);
    if (k == n_steps) break;
    rk.step(y, z);
    if (blown_up(y, z))
      fail(ErrorCode::Numerical, "lv_simulate: state overflowed at step " + std::to_string(k + 1));
  }
  return out;
}

std::vector<double> lv_conserved(const LvParams& params, const LvTrajectory& trajectory) {
  params.validate();
  require(trajectory.y.size() == trajectory.z.size(), "lv_conserved: y and z lengths differ");
  std::vector<double> v;
  v.reserve(trajectory.y.size());
  for (std::size_t i = 0; i < trajectory.y.size(); ++i) {
    const double y = trajectory.y[i], z = trajectory.z[i];
    if (!(y > 0.0) || !(z > 0.0))
      fail(ErrorCode::InvalidArgument,
           "lv_conserved: y and z must be > 0 (sample " + std::to_string(i) + ")");
    v.push_back(params.delta * y - params.gamma * std::log(y) + params.beta * z -
                params.alpha * std::log(z));
  }
  return v;
}

std::vector<double> grid_range(double min, double max, double step) {
  require(std::isfinite(min) && std::isfinite(max) && std::isfinite(step), "grid_range: non-finite bound");
  require(step > 0.0, "grid_range: step must be > 0");
  require(max >= min, "grid_range: max < min");
  const auto count = static_cast<long long>(std::floor((max - min) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (long long i = 0; i < count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", min + static_cast<double>(i) * step);
    out.push_back(std::strtod(buf, nullptr));
  }
  return out;
}

LvFit lv_fit_sweep(const std::vector<double>& y, const std::vector<double>& z, int train_len,
                   double dt, const LvGrids& grids) {
  require(y.size() == z.size(), "lv_fit_sweep: y and z lengths differ");
  require(train_len >= 2, "lv_fit_sweep: train_len must be >= 2");
  require(static_cast<std::size_t>(train_len) <= y.size(), "lv_fit_sweep: train_len exceeds the series");
  require(dt > 0.0, "lv_fit_sweep: dt must be > 0");
  require(!grids.alpha.empty() && !grids.beta.empty() && !grids.delta.empty() && !grids.gamma.empty(),
          "lv_fit_sweep: every parameter grid must be non-empty");
  for (const auto* g : {&grids.alpha, &grids.beta, &grids.delta, &grids.gamma})
    for (double v : *g) require(std::isfinite(v) && v > 0.0, "lv_fit_sweep: grid values must be > 0");
  require(y[0] >= 0.0 && z[0] >= 0.0, "lv_fit_sweep: initial values must be >= 0");

  LvFit best;
  double best_sse = std::numeric_limits<double>::infinity();
  bool found = false;
  for (double a : grids.alpha)
    for (double b : grids.beta)
      for (double d : grids.delta)
        for (double g : grids.gamma) {
          ++best.candidates;
          const Rk4 rk{a, b, d, g, dt};
          double yy = y[0], zz = z[0];
          double sse = 0.0;
          bool overflow = false;
          for (int k = 1; k < train_len; ++k) {
            rk.step(yy, zz);
            if (blown_up(yy, zz)) {
              overflow = true;
              break;
            }
            const double ey = yy - y[static_cast<std::size_t>(k)];
            const double ez = zz - z[static_cast<std::size_t>(k)];
            sse += ey * ey + ez * ez;
            if (sse > best_sse) break;  // cannot win; keeps ties intact
          }
          if (overflow) {
            ++best.overflowed;
            continue;
          }
          if (sse < best_sse) {
            best_sse = sse;
            best.params = {a, b, d, g};
            found = true;
          }
        }
  if (!found) fail(ErrorCode::Numerical, "lv_fit_sweep: every candidate overflowed");
  best.train_error = std::sqrt(best_sse);
  return best;
}

std::string lv_fit_to_json(const LvFit& fit) {
  nlohmann::json j = {{"alpha", fit.params.alpha},   {"beta", fit.params.beta},
                      {"delta", fit.params.delta},   {"gamma", fit.params.gamma},
                      {"train_error", fit.train_error}, {"candidates", fit.candidates},
                      {"overflowed", fit.overflowed}};
  return j.dump(2);
}

}  // namespace rdrom

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "rdrom/error.hpp"
#include "rdrom/lotka_volterra.hpp"
#include "rdrom/spectrum.hpp"

using namespace rdrom;

namespace {

const LvParams kReference{0.07, 0.13, 0.10, 0.05};

double max_drift(const std::vector<double>& v) {
  double d = 0.0;
  for (double x : v) d = std::max(d, std::abs(x - v.front()) / std::abs(v.front()));
  return d;
}

double dominant(const std::vector<double>& y, double dt) {
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return dominant_frequency(v, dt);
}

}  // namespace

TEST(LvSimulate, DecoupledExponentials) {
  const LvTrajectory prey = lv_simulate(kReference, 1.5, 0.0, 1000, 0.01);
  ASSERT_EQ(prey.y.size(), 1001u);
  for (std::size_t k = 0; k < prey.y.size(); ++k) {
    EXPECT_NEAR(prey.y[k], 1.5 * std::exp(0.07 * prey.t[k]), 1e-8 * prey.y[k]);
    EXPECT_EQ(prey.z[k], 0.0);
  }
  const LvTrajectory pred = lv_simulate(kReference, 0.0, 2.0, 1000, 0.01);
  for (std::size_t k = 0; k < pred.z.size(); ++k)
    EXPECT_NEAR(pred.z[k], 2.0 * std::exp(-0.05 * pred.t[k]), 1e-8 * pred.z[k]);
}

TEST(LvSimulate, FixedPoint) {
  const double y0 = kReference.gamma / kReference.delta, z0 = kReference.alpha / kReference.beta;
  const LvTrajectory tr = lv_simulate(kReference, y0, z0, 2000, 0.5);
  for (std::size_t k = 0; k < tr.y.size(); ++k) {
    EXPECT_NEAR(tr.y[k], y0, 1e-10);
    EXPECT_NEAR(tr.z[k], z0, 1e-10);
  }
  const auto v = lv_conserved(kReference, tr);
  EXPECT_TRUE(std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); }));
}

TEST(LvSimulate, ConservesFirstIntegralAtFourthOrder) {
  const LvParams p{0.9, 0.4, 0.3, 0.8};
  const LvTrajectory coarse = lv_simulate(p, 1.0, 0.5, 10000, 0.01);
  const double d1 = max_drift(lv_conserved(p, coarse));
  EXPECT_LE(d1, 1e-6);
  // Same horizon with h/2; the drift should shrink by about 2^4.
  const LvTrajectory fine = lv_simulate(p, 1.0, 0.5, 20000, 0.005);
  const double ratio = d1 / max_drift(lv_conserved(p, fine));
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(LvSimulate, PositiveAndPeriodic) {
  const LvTrajectory tr = lv_simulate(kReference, 1.0, 0.5, 20000, 0.1);
  EXPECT_TRUE(std::all_of(tr.y.begin(), tr.y.end(), [](double v) { return v > 0; }));
  EXPECT_TRUE(std::all_of(tr.z.begin(), tr.z.end(), [](double v) { return v > 0; }));
  // Period from the first return of y to y0 while rising, refined linearly.
  double period = 0.0;
  for (std::size_t k = 10; k + 1 < tr.y.size(); ++k)
    if (tr.y[k] <= 1.0 && tr.y[k + 1] > 1.0 && tr.z[k] < 0.5) {
      period = tr.t[k] + 0.1 * (1.0 - tr.y[k]) / (tr.y[k + 1] - tr.y[k]);
      break;
    }
  ASSERT_GT(period, 0.0);
  const int steps = static_cast<int>(std::lround(period / 0.001));
  const LvTrajectory one = lv_simulate(kReference, 1.0, 0.5, steps, period / steps);
  EXPECT_NEAR(one.y.back(), 1.0, 1e-3);
  EXPECT_NEAR(one.z.back(), 0.5, 1e-3);
}

TEST(LvSimulate, Errors) {
  EXPECT_THROW(lv_simulate({0.0, 0.1, 0.1, 0.1}, 1, 1, 10, 0.1), Error);
  EXPECT_THROW(lv_simulate(kReference, -1, 1, 10, 0.1), Error);
  EXPECT_THROW(lv_simulate(kReference, 1, 1, 10, 0.0), Error);
  try {
    lv_simulate({5.0, 0.1, 0.1, 0.1}, 1.0, 0.0, 100000, 1.0);
    FAIL() << "expected overflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Numerical);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
  LvTrajectory bad = lv_simulate(kReference, 1.0, 1.0, 3, 0.1);
  bad.z[2] = 0.0;
  EXPECT_THROW(lv_conserved(kReference, bad), Error);
}

TEST(LvSweep, RecoversReferenceParametersExactly) {
  const LvTrajectory truth = lv_simulate(kReference, 1.0, 0.5, 999, 1.0);
  const LvFit fit = lv_fit_sweep(truth.y, truth.z, 500, 1.0);
  EXPECT_EQ(fit.params, kReference);
  EXPECT_NEAR(fit.train_error, 0.0, 1e-12);
  EXPECT_EQ(fit.candidates, 30LL * 30 * 30 * 30);
  EXPECT_EQ(grid_range(0.01, 0.30, 0.01)[6], 0.07);

  // Extrapolating the fit to 1000 steps keeps the oscillation frequency.
  const LvTrajectory ext = lv_simulate(fit.params, truth.y[0], truth.z[0], 999, 1.0);
  const double f_truth = dominant(truth.y, 1.0), f_fit = dominant(ext.y, 1.0);
  EXPECT_LE(std::abs(f_fit - f_truth), 0.02 * f_truth);

  const auto j = nlohmann::json::parse(lv_fit_to_json(fit));
  EXPECT_DOUBLE_EQ(j.at("alpha").get<double>(), 0.07);
}

TEST(LvSweep, TruthMinimisesErrorOnPerturbedGrid) {
  const LvParams p{0.12, 0.05, 0.08, 0.2};
  const LvTrajectory truth = lv_simulate(p, 2.0, 1.0, 300, 0.5);
  LvGrids g;
  g.alpha = grid_range(0.10, 0.14, 0.01);
  g.beta = grid_range(0.03, 0.07, 0.01);
  g.delta = grid_range(0.06, 0.10, 0.01);
  g.gamma = grid_range(0.18, 0.22, 0.01);
  const LvFit fit = lv_fit_sweep(truth.y, truth.z, 301, 0.5, g);
  EXPECT_EQ(fit.params, p);
}

TEST(LvSweep, SingleCandidateAndErrors) {
  const LvTrajectory truth = lv_simulate(kReference, 1.0, 0.5, 99, 1.0);
  LvGrids g;
  g.alpha = {0.2};
  g.beta = {0.02};
  g.delta = {0.3};
  g.gamma = {0.01};
  const LvFit fit = lv_fit_sweep(truth.y, truth.z, 100, 1.0, g);
  EXPECT_EQ(fit.params, (LvParams{0.2, 0.02, 0.3, 0.01}));
  EXPECT_EQ(fit.candidates, 1);
  EXPECT_GT(fit.train_error, 0.0);

  EXPECT_THROW(lv_fit_sweep(truth.y, truth.z, 101, 1.0, g), Error);
  g.alpha.clear();
  EXPECT_THROW(lv_fit_sweep(truth.y, truth.z, 100, 1.0, g), Error);

  // Growth so fast every candidate blows up.
  LvGrids wild;
  wild.alpha = {50.0};
  wild.beta = {1e-9};
  wild.delta = {1e-9};
  wild.gamma = {0.1};
  try {
    lv_fit_sweep(truth.y, truth.z, 100, 1.0, wild);
    FAIL() << "expected every candidate to overflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Numerical);
  }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <random>

#include "rdrom/error.hpp"
#include "rdrom/untwist.hpp"
#include "test_util.hpp"

using namespace rdrom;
using test::gaussian;

namespace {

WaveTrack track_from(const std::function<double(double)>& x, int n, int label = 0, int first = 0) {
  WaveTrack t;
  t.label = label;
  for (int i = 0; i < n; ++i) {
    const double v = x(first + i);
    t.points.push_back({first + i, std::fmod(std::fmod(v, 1e9) + 1e9, 1e9), 1.0});
    t.unwrapped_x.push_back(v);
  }
  return t;
}

LibraryRequest request(std::vector<TermKind> kinds) {
  LibraryRequest r;
  r.kinds = std::move(kinds);
  return r;
}

// Least-squares oracle in original term units.
Eigen::VectorXd lstsq(const WaveTrack& t, const FunctionLibrary& lib, double dt) {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(t.points.size()), static_cast<Eigen::Index>(lib.size()));
  Eigen::VectorXd b(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    A.row(i) = lib.evaluate(t.points[static_cast<std::size_t>(i)].t_index * dt);
    b(i) = t.unwrapped_x[static_cast<std::size_t>(i)];
  }
  return A.completeOrthogonalDecomposition().solve(b);
}

double max_dev_from_median(const std::vector<int>& v) {
  std::vector<int> s = v;
  std::nth_element(s.begin(), s.begin() + static_cast<long>(s.size() / 2), s.end());
  const int med = s[s.size() / 2];
  int worst = 0;
  for (int x : v) worst = std::max(worst, std::abs(x - med));
  return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// Library

TEST(Library, Enumeration) {
  EXPECT_EQ(build_library(request({TermKind::Linear})).names(), (std::vector<std::string>{"1", "t"}));
  EXPECT_EQ(linear_library().names(), (std::vector<std::string>{"1", "t"}));
  LibraryRequest r = request({TermKind::Linear, TermKind::Sine});
  r.sine_frequencies = {0.1};
  const FunctionLibrary lib = build_library(r);
  EXPECT_EQ(lib.names(), (std::vector<std::string>{"1", "t", "sin(0.1t)", "cos(0.1t)"}));
  EXPECT_NEAR(lib.evaluate(2.0)(2), std::sin(0.2), 1e-15);
  LibraryRequest p = request({TermKind::Linear, TermKind::Polynomial});
  p.polynomial_degree = 2;
  EXPECT_EQ(build_library(p).names(), (std::vector<std::string>{"1", "t", "t^2"}));
  LibraryRequest e = request({TermKind::Exponential});
  e.exp_rates = {-0.5};
  EXPECT_NEAR(build_library(e).evaluate(2.0)(0), std::exp(-1.0), 1e-15);
}

TEST(Library, Errors) {
  EXPECT_THROW(build_library(request({})), Error);
  EXPECT_THROW(build_library(request({TermKind::Sine})), Error);
  EXPECT_THROW(build_library(request({TermKind::Exponential})), Error);
}

// ---------------------------------------------------------------------------
// SR3

TEST(Sr3, LambdaZeroMatchesLeastSquares) {
  LibraryRequest r = request({TermKind::Linear, TermKind::Sine});
  r.sine_frequencies = {0.05};
  const FunctionLibrary lib = build_library(r);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<WaveTrack> tracks = {
      track_from([&](double t) { return 5 + 2.5 * t + 3 * std::sin(0.05 * t) + n(rng); }, 120, 0),
      track_from([&](double t) { return 40 - 1.0 * t + n(rng); }, 80, 1, 10)};
  Sr3Options o;
  o.lambda = 0.0;
  o.zeta = 1e8;
  o.max_iter = 2000;
  o.tol = 1e-14;
  const SpeedModel m = fit_sr3(tracks, lib, 0.5, o);
  for (int w = 0; w < 2; ++w) {
    const Eigen::VectorXd ref = lstsq(tracks[static_cast<std::size_t>(w)], lib, 0.5);
    for (Eigen::Index j = 0; j < ref.size(); ++j)
      EXPECT_NEAR(m.C(j, w), ref(j), 1e-6 * std::max(1.0, std::abs(ref(j)))) << w << "," << j;
  }
}

TEST(Sr3, LambdaZeroSatisfiesNormalEquations) {
  const FunctionLibrary lib = build_library(request({TermKind::Polynomial}));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto t = track_from([&](double s) { return 0.01 * s * s + u(rng); }, 60);
  Sr3Options o;
  o.lambda = 0.0;
  o.zeta = 1e8;
  o.tol = 1e-15;
  o.max_iter = 5000;
  const SpeedModel m = fit_sr3({t}, lib, 1.0, o);
  Eigen::MatrixXd A(60, 3);
  Eigen::VectorXd b(60);
  for (int i = 0; i < 60; ++i) {
    A.row(i) = lib.evaluate(i);
    b(i) = t.unwrapped_x[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd res = A.transpose() * (A * m.C.col(0) - b);
  EXPECT_LE(res.norm() / (A.transpose() * b).norm(), 1e-8);
}

TEST(Sr3, SparseRecoveryOfLinearMotion) {
  LibraryRequest r = request({TermKind::Polynomial, TermKind::Sine});
  r.polynomial_degree = 2;
  r.sine_frequencies = {1.0};
  const FunctionLibrary lib = build_library(r);  // 1, t, t^2, sin t, cos t
  const auto track = track_from([](double t) { return 3.0 * t; }, 100);
  // The 1, t, t^2 columns are nearly collinear, so the alternation needs more
  // than the default 500 iterations to settle.
  for (double lambda : {0.1, 0.3, 1.0}) {
    for (Regularizer reg : {Regularizer::L1, Regularizer::L0}) {
      Sr3Options o;
      o.lambda = lambda;
      o.regularizer = reg;
      o.max_iter = 5000;
      const SpeedModel m = fit_sr3({track}, lib, 1.0, o);
      ASSERT_EQ(m.active_terms(0), std::vector<int>{1}) << lambda;
      EXPECT_NEAR(m.B(1, 0), 3.0, 0.01) << lambda;
      EXPECT_NEAR(m.debiased(1, 0), 3.0, 1e-9);
      EXPECT_TRUE(m.converged);
    }
  }
}

TEST(Sr3, ObjectiveNonIncreasingOnRandomInstances) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> len(20, 80), waves(1, 3);
  for (int instance = 0; instance < 100; ++instance) {
    LibraryRequest r = request({TermKind::Polynomial, TermKind::Sine, TermKind::Exponential});
    r.polynomial_degree = 2;
    r.sine_frequencies = {0.1 + 0.2 * std::abs(u(rng))};
    r.exp_rates = {-0.05 * std::abs(u(rng))};
    const FunctionLibrary lib = build_library(r);
    std::vector<WaveTrack> tracks;
    const int nw = waves(rng);
    for (int w = 0; w < nw; ++w) {
      const double a = 10 * u(rng), b = 4 * u(rng), c = 0.02 * u(rng), s = 3 * u(rng);
      tracks.push_back(track_from([&](double t) { return a + b * t + c * t * t + s * std::sin(t) + u(rng); },
                                  len(rng), w));
    }
    Sr3Options o;
    o.regularizer = instance % 2 ? Regularizer::L0 : Regularizer::L1;
    o.lambda = std::pow(10.0, 3 * u(rng));
    o.zeta = std::pow(10.0, 2 * u(rng));
    o.max_iter = 300;
    const SpeedModel m = fit_sr3(tracks, lib, 1.0, o);
    for (std::size_t k = 1; k < m.objective_history.size(); ++k)
      ASSERT_LE(m.objective_history[k], m.objective_history[k - 1] * (1 + 1e-12) + 1e-12)
          << "instance " << instance << " iteration " << k;
    EXPECT_EQ(m.C.cols(), nw);
    EXPECT_TRUE(m.C.allFinite());
  }
}

TEST(Sr3, HardThresholdKeepsLargeCoefficientsUnshrunk) {
  const auto track = track_from([](double t) { return 7.0 + 2.0 * t; }, 50);
  Sr3Options o;
  o.lambda = 1e-2;
  o.regularizer = Regularizer::L0;
  const SpeedModel m = fit_sr3({track}, linear_library(), 1.0, o);
  EXPECT_EQ(m.B(0, 0), m.C(0, 0));
  EXPECT_EQ(m.B(1, 0), m.C(1, 0));
}

TEST(Sr3, Errors) {
  const auto track = track_from([](double t) { return t; }, 20);
  LibraryRequest r = request({TermKind::Linear, TermKind::Exponential});
  r.exp_rates = {0.0};  // exp(0 t) duplicates the constant term
  Sr3Options o;
  o.zeta = 1e13;
  try {
    fit_sr3({track}, build_library(r), 1.0, o);
    FAIL() << "expected rank-deficiency error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("zeta"), std::string::npos);
  }
  o.zeta = 1.0;
  EXPECT_NO_THROW(fit_sr3({track}, build_library(r), 1.0, o));
  EXPECT_THROW(fit_sr3({track_from([](double t) { return t; }, 1)}, linear_library(), 1.0), Error);
  EXPECT_THROW(fit_sr3({}, linear_library(), 1.0), Error);
  Sr3Options neg;
  neg.lambda = -1.0;
  EXPECT_THROW(fit_sr3({track}, linear_library(), 1.0, neg), Error);
}

TEST(Sr3, NonConvergenceIsFlagged) {
  const auto track = track_from([](double t) { return 1.0 + 0.5 * t; }, 40);
  Sr3Options o;
  o.max_iter = 1;
  o.zeta = 1e-3;
  o.lambda = 1e-3;
  const SpeedModel m = fit_sr3({track}, linear_library(), 1.0, o);
  EXPECT_FALSE(m.converged);
  EXPECT_EQ(m.iterations, 1);
}

TEST(Sr3, ModelJson) {
  const auto track = track_from([](double t) { return 3.0 * t; }, 30);
  const FunctionLibrary lib = linear_library();
  const auto j = nlohmann::json::parse(speed_model_to_json(fit_sr3({track}, lib, 1.0), lib));
  EXPECT_EQ(j.at("terms").size(), 2u);
  EXPECT_EQ(j.at("active_terms")[0], std::vector<std::string>{"t"});
  for (const char* key : {"C", "B", "objective", "lambda", "zeta", "regularizer", "converged"})
    EXPECT_TRUE(j.contains(key)) << key;
}

// ---------------------------------------------------------------------------
// Shifting

TEST(Shift, IdentityAndFullPeriod) {
  const Field f = synth_field(test::spec(40, 6, {gaussian(3, 1.3)}, 0.1, 1)).field;
  ShiftSpec zero{std::vector<double>(6, 0.0)}, period{std::vector<double>(6, 40.0)};
  EXPECT_EQ(shift_field(f, zero).values(), f.values());
  EXPECT_EQ(shift_field(f, period).values(), f.values());
  period.interpolation = Interpolation::Nearest;
  EXPECT_EQ(shift_field(f, period).values(), f.values());
}

TEST(Shift, StraightensConstantSpeedPulse) {
  const Field f = synth_field(test::spec(180, 100, {gaussian(30, 2.0)})).field;
  ShiftSpec s;
  for (int r = 0; r < 100; ++r) s.offsets.push_back(2.0 * r);
  const auto am = row_argmax(shift_field(f, s));
  for (int a : am) EXPECT_EQ(a, am[0]);
}

TEST(Shift, RowSumsPreserved) {
  const Field f = synth_field(test::spec(64, 20, {gaussian(3, 1.7)}, 0.2, 8)).field;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-200, 200);
  ShiftSpec lin, near;
  for (int r = 0; r < 20; ++r) lin.offsets.push_back(u(rng));
  near = lin;
  near.interpolation = Interpolation::Nearest;
  const Field a = shift_field(f, lin), b = shift_field(f, near);
  for (int r = 0; r < 20; ++r) {
    EXPECT_NEAR(a.values().row(r).sum(), f.values().row(r).sum(), 1e-9);
    Eigen::RowVectorXd x = b.values().row(r), y = f.values().row(r);
    std::sort(x.data(), x.data() + x.size());
    std::sort(y.data(), y.data() + y.size());
    EXPECT_EQ(x, y);
  }
}

TEST(Shift, RoundTripAndComposition) {
  const Field f = synth_field(test::spec(120, 30, {gaussian(10, 1.1, 1.0, 6.0)})).field;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-50, 50);
  ShiftSpec s, minus, s2, sum;
  for (int r = 0; r < 30; ++r) {
    s.offsets.push_back(std::round(u(rng)));
    s2.offsets.push_back(u(rng));
  }
  for (int r = 0; r < 30; ++r) minus.offsets.push_back(-s.offsets[static_cast<std::size_t>(r)]);
  s.interpolation = minus.interpolation = Interpolation::Nearest;
  EXPECT_LE((shift_field(shift_field(f, s), minus).values() - f.values()).cwiseAbs().maxCoeff(), 1e-6);

  ShiftSpec lin = s2, back = s2;
  for (auto& o : back.offsets) o = -o;
  const double scale = f.values().cwiseAbs().maxCoeff();
  EXPECT_LE((shift_field(shift_field(f, lin), back).values() - f.values()).cwiseAbs().maxCoeff(), 1e-2 * scale);

  for (int r = 0; r < 30; ++r)
    sum.offsets.push_back(std::fmod(s.offsets[static_cast<std::size_t>(r)] + s2.offsets[static_cast<std::size_t>(r)], 120.0));
  ShiftSpec s_lin = s;
  s_lin.interpolation = Interpolation::Linear;
  EXPECT_LE((shift_field(shift_field(f, s_lin), s2).values() - shift_field(f, sum).values()).cwiseAbs().maxCoeff(),
            1e-9);
}

TEST(Shift, RejectsWrongLength) {
  const Field f(Eigen::MatrixXd::Zero(3, 4), 1.0);
  EXPECT_THROW(shift_field(f, ShiftSpec{{0.0, 1.0}}), Error);
}

// ---------------------------------------------------------------------------
// Two-stage workflow

TEST(Preprocess, SinglePulseSpeedFour) {
  const Field clean = synth_field(test::spec(180, 300, {gaussian(20, 4.0)})).field;
  const PreprocessResult r = preprocess_shift(clean);
  EXPECT_NEAR(r.mean_speed, 4.0, 1e-6);
  EXPECT_EQ(max_dev_from_median(row_argmax(r.shifted)), 0);
  const Field noisy = synth_field(test::spec(180, 300, {gaussian(20.5, 4.0)}, 0.01, 1)).field;
  EXPECT_NEAR(preprocess_shift(noisy).mean_speed, 4.0, 0.1);
}

TEST(Preprocess, TwoPulsesMeanSpeed) {
  const Field f = synth_field(test::spec(180, 200, {gaussian(20, 4.0), gaussian(110, 4.2, 0.5)}, 0.01, 1)).field;
  PreprocessOptions o;
  o.tracking.n_waves = 2;
  const PreprocessResult r = preprocess_shift(f, o);
  EXPECT_NEAR(r.mean_speed, 4.1, 0.1);
  ASSERT_EQ(r.model.C.cols(), 2);
  EXPECT_NEAR(r.model.debiased(1, 0) - r.mean_speed, -0.1, 0.1);
  EXPECT_NEAR(r.model.debiased(1, 1) - r.mean_speed, 0.1, 0.1);
}

TEST(Preprocess, StationaryPulseUnchanged) {
  const Field f = synth_field(test::spec(90, 50, {gaussian(20.4, 0.0)})).field;
  const PreprocessResult r = preprocess_shift(f);
  EXPECT_NEAR(r.mean_speed, 0.0, 1e-9);
  EXPECT_LE((r.shifted.values() - f.values()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Preprocess, NoPeaksIsAnError) {
  const Field f(Eigen::MatrixXd::Zero(20, 30), 1.0);
  try {
    preprocess_shift(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Numerical);
  }
}

TEST(Refine, RemovesSinusoidalDrift) {
  const double w = 2 * std::numbers::pi / 200;
  PulseSpec p = gaussian(20, 3.0);
  p.speed.push_back({SpeedTerm::Kind::Sine, 6 * w, w, 0.0});  // +-6 px around the mean motion
  const Field f = synth_field(test::spec(180, 600, {p}, 0.01, 4)).field;
  const PreprocessResult pre = preprocess_shift(f);
  LibraryRequest r = request({TermKind::Linear, TermKind::Sine});
  r.sine_frequencies = {w};
  const RefineResult ref = refine_shift(pre.shifted, build_library(r), 0);
  EXPECT_GT(max_dev_from_median(row_argmax(pre.shifted)), 3);
  EXPECT_LE(max_dev_from_median(row_argmax(ref.shifted)), 1);
}

TEST(Refine, StationaryWaveGetsZeroOffsets) {
  const Field f = synth_field(test::spec(90, 80, {gaussian(40.3, 0.0)})).field;
  const RefineResult ref = refine_shift(preprocess_shift(f).shifted, linear_library(), 0);
  for (double o : ref.shift.offsets) EXPECT_LE(std::abs(o), 1e-6);
}

TEST(Refine, EachWaveCanBeMadeStationary) {
  const Field f = synth_field(test::spec(180, 300, {gaussian(20, 4.0), gaussian(110, 4.2, 0.5)}, 0.01, 3)).field;
  PreprocessOptions po;
  po.tracking.n_waves = 2;
  const PreprocessResult pre = preprocess_shift(f, po);
  RefineOptions ro;
  ro.tracking.n_waves = 2;
  for (int wave : {0, 1}) {
    const RefineResult ref = refine_shift(pre.shifted, linear_library(), wave, ro);
    // Mask the other wave: measure the chosen wave inside a window around its start.
    const double x0 = ref.tracks[static_cast<std::size_t>(wave)].points.front().x_index;
    std::vector<int> am;
    for (Eigen::Index r = 0; r < ref.shifted.time_steps(); ++r) {
      int best = 0;
      double v = -1e300;
      for (int dx = -20; dx <= 20; ++dx) {
        const int x = static_cast<int>(std::lround(x0 + dx + 180)) % 180;
        if (ref.shifted(r, x) > v) {
          v = ref.shifted(r, x);
          best = dx;
        }
      }
      am.push_back(best);
    }
    EXPECT_LT(test::stddev(am), 1.0) << wave;
  }
}

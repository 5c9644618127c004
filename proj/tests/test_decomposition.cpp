#include <gtest/gtest.h>

#include <random>

#include "rdrom/decomposition.hpp"
#include "rdrom/error.hpp"
#include "rdrom/untwist.hpp"
#include "test_util.hpp"

using namespace rdrom;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST(Pod, RankOneOuterProduct) {
  Eigen::VectorXd a(5), b(7);
  a << 1, -2, 3, 0.5, 4;
  b << 2, 1, 0, -1, 3, 2, 1;
  const ModalDecomposition d = pod(Eigen::MatrixXd(a * b.transpose()));
  EXPECT_NEAR(d.singular_values(0), a.norm() * b.norm(), 1e-10);
  for (Eigen::Index i = 1; i < d.rank(); ++i) EXPECT_LE(d.singular_values(i), 1e-10);
  EXPECT_LE((d.modes.col(0) - a / a.norm()).cwiseAbs().maxCoeff(), 1e-12);  // largest entry made positive
  EXPECT_NEAR(d.first_mode_energy(), 1.0, 1e-12);
}

TEST(Pod, OrthonormalAndMatchesFullSvd) {
  const Eigen::MatrixXd m = random_matrix(30, 45, 1);
  const ModalDecomposition d = pod(m, 10);
  EXPECT_LE((d.modes.transpose() * d.modes - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_NEAR(d.singular_values(i), sv(i), 1e-10);
  for (Eigen::Index i = 1; i < 10; ++i) EXPECT_LE(d.singular_values(i), d.singular_values(i - 1));
  EXPECT_NEAR(d.total_energy, m.squaredNorm(), 1e-9 * m.squaredNorm());
}

TEST(Pod, ReconstructionErrorIsTailEnergy) {
  const Eigen::MatrixXd m = random_matrix(20, 25, 2);
  const ModalDecomposition full = pod(m);
  EXPECT_LE((full.reconstruct(full.rank()) - m).norm() / m.norm(), 1e-8);
  for (Eigen::Index r : {1, 5, 12}) {
    const double tail = full.singular_values.tail(full.rank() - r).squaredNorm();
    EXPECT_NEAR((full.reconstruct(r) - m).squaredNorm(), tail, 1e-8 * m.squaredNorm());
  }
}

TEST(Pod, RankOutOfRange) {
  const Eigen::MatrixXd m = random_matrix(4, 6, 3);
  EXPECT_THROW(pod(m, 0), Error);
  EXPECT_THROW(pod(m, 5), Error);
  EXPECT_NO_THROW(pod(m, 4));
}

TEST(Pod, StraighteningConcentratesEnergy) {
  const Field f = synth_field(test::spec(180, 400, {test::gaussian(20, 3.7)}, 0.01, 5)).field;
  ShiftSpec s;
  for (int r = 0; r < 400; ++r) s.offsets.push_back(3.7 * r);
  EXPECT_LT(pod(f).first_mode_energy(), 0.5);
  EXPECT_GE(pod(shift_field(f, s)).first_mode_energy(), 0.9);
}

TEST(Rpca, ZeroMatrix) {
  const RpcaResult r = rpca(Eigen::MatrixXd::Zero(6, 8));
  EXPECT_EQ(r.low_rank.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.sparse.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Rpca, PlantedLowRankPlusSparse) {
  const Eigen::Index n = 100, m = 120;
  const Eigen::MatrixXd L0 = random_matrix(n, 2, 10) * random_matrix(2, m, 11);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<Eigen::Index> ri(0, n - 1), ci(0, m - 1);
  std::uniform_real_distribution<double> mag(-20, 20);
  Eigen::MatrixXd S0 = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index k = 0; k < n * m / 100; ++k) S0(ri(rng), ci(rng)) = mag(rng);
  const Eigen::MatrixXd D = L0 + S0;
  const RpcaResult r = rpca(D);
  EXPECT_TRUE(r.converged);
  EXPECT_LE((r.low_rank - L0).norm() / L0.norm(), 1e-4);
  EXPECT_LE((r.low_rank + r.sparse - D).cwiseAbs().maxCoeff(), 1e-6);
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(r.low_rank).singularValues();
  for (Eigen::Index i = 2; i < sv.size(); ++i) EXPECT_LT(sv(i), 1e-6 * sv(0));
}

TEST(Rpca, FeasibleOnArbitraryInput) {
  for (std::uint64_t seed : {20u, 21u, 22u}) {
    const Eigen::MatrixXd D = random_matrix(15 + static_cast<Eigen::Index>(seed), 30, seed);
    const RpcaResult r = rpca(D);
    EXPECT_LE((r.low_rank + r.sparse - D).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Rpca, NonConvergenceIsFlagged) {
  RpcaOptions o;
  o.max_iter = 2;
  const RpcaResult r = rpca(random_matrix(20, 20, 5), o);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2);
}

TEST(Rpca, RejectsBadParameters) {
  RpcaOptions o;
  o.lambda = -1.0;
  EXPECT_THROW(rpca(random_matrix(3, 3, 1), o), Error);
  RpcaOptions p;
  p.mu = 0.0;
  EXPECT_THROW(rpca(random_matrix(3, 3, 1), p), Error);
}

TEST(Modes, CsvHasOneColumnPerMode) {
  test::TempDir dir("modes");
  const ModalDecomposition d = pod(random_matrix(6, 9, 4), 3);
  save_modes(d, dir / "m.csv");
  const std::string text = test::slurp(dir / "m.csv");
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  EXPECT_EQ(lines, 7u);  // header + 6 rows
  EXPECT_EQ(text.substr(0, text.find('\n')), "mode_0,mode_1,mode_2");
}

#include "rdrom/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rdrom/error.hpp"
#include "rdrom/numfmt.hpp"

namespace rdrom {

double ModalDecomposition::first_mode_energy() const {
  if (total_energy <= 0.0 || singular_values.size() == 0) return 0.0;
  return singular_values(0) * singular_values(0) / total_energy;
}

Eigen::MatrixXd ModalDecomposition::reconstruct(Eigen::Index r) const {
  require(r >= 0 && r <= rank(), "reconstruct: rank out of range");
  return modes.leftCols(r) * time_coeffs.topRows(r);
}

Eigen::MatrixXd snapshot_matrix(const Field& field) { return field.values().transpose(); }

ModalDecomposition pod(const Eigen::MatrixXd& snapshots, std::optional<Eigen::Index> rank) {
  require(snapshots.size() > 0, "pod: empty snapshot matrix");
  const Eigen::Index limit = std::min(snapshots.rows(), snapshots.cols());
  if (rank && (*rank < 1 || *rank > limit))
    fail(ErrorCode::InvalidArgument, "pod: rank " + std::to_string(*rank) + " outside [1, " +
                                         std::to_string(limit) + "]");
  if (!snapshots.allFinite()) fail(ErrorCode::Numerical, "pod: snapshot matrix is not finite");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(snapshots, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index r = rank.value_or(limit);
  ModalDecomposition out;
  out.total_energy = svd.singularValues().squaredNorm();
  out.modes = svd.matrixU().leftCols(r);
  out.singular_values = svd.singularValues().head(r);
  out.time_coeffs = out.singular_values.asDiagonal() * svd.matrixV().leftCols(r).transpose();
  // Sign convention: largest-magnitude entry of each mode is positive.
  for (Eigen::Index i = 0; i < r; ++i) {
    Eigen::Index idx = 0;
    out.modes.col(i).cwiseAbs().maxCoeff(&idx);
    if (out.modes(idx, i) < 0.0) {
      out.modes.col(i) *= -1.0;
      out.time_coeffs.row(i) *= -1.0;
    }
  }
  return out;
}

ModalDecomposition pod(const Field& field, std::optional<Eigen::Index> rank) {
  return pod(snapshot_matrix(field), rank);
}

namespace {

Eigen::MatrixXd shrink(const Eigen::MatrixXd& m, double tau) {
  return m.unaryExpr([tau](double v) {
    const double a = std::abs(v) - tau;
    return a > 0.0 ? std::copysign(a, v) : 0.0;
  });
}

}  // namespace

RpcaResult rpca(const Eigen::MatrixXd& data, const RpcaOptions& options) {
  require(data.size() > 0, "rpca: empty matrix");
  require(options.tol > 0.0 && options.max_iter >= 1, "rpca: invalid stopping options");
  if (!data.allFinite()) fail(ErrorCode::Numerical, "rpca: input is not finite");
  const auto rows = data.rows(), cols = data.cols();
  RpcaResult out;
  out.low_rank = Eigen::MatrixXd::Zero(rows, cols);
  out.sparse = Eigen::MatrixXd::Zero(rows, cols);
  const double norm_fro = data.norm();
  if (norm_fro == 0.0) {
    out.converged = true;
    return out;
  }
  const double lambda =
      options.lambda ? *options.lambda : 1.0 / std::sqrt(static_cast<double>(std::max(rows, cols)));
  require(lambda > 0.0, "rpca: lambda must be > 0");

  Eigen::BDCSVD<Eigen::MatrixXd> top(data);
  const double norm_two = top.singularValues()(0);
  const double dual = std::max(norm_two, data.cwiseAbs().maxCoeff() / lambda);
  Eigen::MatrixXd Y = data / dual;
  require(!options.mu || *options.mu > 0.0, "rpca: mu must be > 0");
  double mu = options.mu.value_or(1.25 / norm_two);
  const double mu_max = mu * 1e7;
  const double rho = 1.5;

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(data - out.sparse + Y / mu,
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = (svd.singularValues().array() - 1.0 / mu).max(0.0);
    Eigen::Index keep = 0;
    while (keep < s.size() && s(keep) > 0.0) ++keep;
    out.low_rank = svd.matrixU().leftCols(keep) * s.head(keep).asDiagonal() *
                   svd.matrixV().leftCols(keep).transpose();
    out.sparse = shrink(data - out.low_rank + Y / mu, lambda / mu);
    const Eigen::MatrixXd residual = data - out.low_rank - out.sparse;
    Y += mu * residual;
    mu = std::min(mu * rho, mu_max);
    out.iterations = iter;
    if (residual.norm() <= options.tol * norm_fro) {
      out.converged = true;
      break;
    }
  }
  return out;
}

void save_modes(const ModalDecomposition& decomposition, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::Io, "cannot write modes to " + path.string());
  for (Eigen::Index i = 0; i < decomposition.modes.cols(); ++i) os << (i ? "," : "") << "mode_" << i;
  os << '\n';
  for (Eigen::Index x = 0; x < decomposition.modes.rows(); ++x) {
    for (Eigen::Index i = 0; i < decomposition.modes.cols(); ++i)
      os << (i ? "," : "") << format_double(decomposition.modes(x, i));
    os << '\n';
  }
  if (!os) fail(ErrorCode::Io, "failed writing " + path.string());
}

}  // namespace rdrom

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>

#include "rdrom/field.hpp"

namespace rdrom {

/// Spatial modes and temporal coefficients of a K x T snapshot matrix
/// (columns are time snapshots), ordered by decreasing singular value.
struct ModalDecomposition {
  Eigen::MatrixXd modes;            // K x r, orthonormal columns
  Eigen::VectorXd singular_values;  // r, non-increasing
  Eigen::MatrixXd time_coeffs;      // r x T, row i is sigma_i v_i^T
  double total_energy = 0.0;        // sum of all squared singular values

  Eigen::Index rank() const { return singular_values.size(); }
  /// sigma_0^2 / total energy; 0 for an all-zero field.
  double first_mode_energy() const;
  /// Rank-r reconstruction, K x T.
  Eigen::MatrixXd reconstruct(Eigen::Index r) const;
};

/// Proper orthogonal decomposition via thin SVD of the K x T snapshot matrix.
/// Unset `rank` keeps min(K, T) modes; otherwise 1 <= rank <= min(K, T).
/// Each mode is signed so its largest-magnitude entry is positive.
ModalDecomposition pod(const Eigen::MatrixXd& snapshots,
                       std::optional<Eigen::Index> rank = std::nullopt);
ModalDecomposition pod(const Field& field, std::optional<Eigen::Index> rank = std::nullopt);

struct RpcaOptions {
  /// Sparse penalty; unset means 1 / sqrt(max(K, T)).
  std::optional<double> lambda;
  /// Initial augmented-Lagrangian weight; unset means 1.25 / ||D||_2.
  std::optional<double> mu;
  double tol = 1e-9;
  int max_iter = 1000;
};

struct RpcaResult {
  Eigen::MatrixXd low_rank;
  Eigen::MatrixXd sparse;
  int iterations = 0;
  bool converged = false;
};

/// Principal component pursuit D = L + S by the inexact augmented Lagrange
/// multiplier method. Stops when ||D - L - S||_F <= tol ||D||_F; otherwise
/// returns the last iterate with `converged` false.
RpcaResult rpca(const Eigen::MatrixXd& data, const RpcaOptions& options = {});

/// Snapshot matrix K x T of a field (its values transposed).
Eigen::MatrixXd snapshot_matrix(const Field& field);

/// CSV with a mode_0,mode_1,... header, then one row per spatial sample.
void save_modes(const ModalDecomposition& decomposition, const std::filesystem::path& path);

}  // namespace rdrom

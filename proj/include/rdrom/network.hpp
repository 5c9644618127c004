#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace rdrom {

/// Fully connected network with tanh hidden layers and an identity output.
/// Inputs and outputs are batched column-wise: a D_in x N matrix maps to a
/// D_out x N matrix.
class FeedForwardNet {
 public:
  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  FeedForwardNet(std::vector<int> layer_sizes, std::uint64_t seed);
  FeedForwardNet(std::vector<Eigen::MatrixXd> weights, std::vector<Eigen::VectorXd> biases);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  const Eigen::MatrixXd& weight(std::size_t layer) const { return weights_[layer]; }
  const Eigen::VectorXd& bias(std::size_t layer) const { return biases_[layer]; }

  /// Parameters flattened layer by layer: W (column-major) then b.
  Eigen::Index parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;

  /// Activations of every layer from one forward pass; activations[0] is the
  /// input and activations.back() the output.
  struct Trace {
    std::vector<Eigen::MatrixXd> activations;
  };
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Trace& trace) const;

  struct Gradients {
    Eigen::VectorXd parameters;  // same layout as parameters()
    Eigen::MatrixXd input;       // D_in x N
  };
  /// Back-propagates dL/d(output) (D_out x N) through the traced pass.
  Gradients backward(const Trace& trace, const Eigen::MatrixXd& output_grad) const;

 private:
  void check_input(const Eigen::MatrixXd& input) const;

  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;  // out x in
  std::vector<Eigen::VectorXd> biases_;
};

}  // namespace rdrom

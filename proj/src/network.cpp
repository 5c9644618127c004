#include "rdrom/network.hpp"

#include <cmath>
#include <random>

#include "rdrom/error.hpp"

namespace rdrom {

namespace {

// tanh through exp, which Eigen vectorizes for doubles (its tanh does not).
void tanh_inplace(Eigen::MatrixXd& z) {
  z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
}

}  // namespace

FeedForwardNet::FeedForwardNet(std::vector<int> layer_sizes, std::uint64_t seed)
    : sizes_(std::move(layer_sizes)) {
  require(sizes_.size() >= 2, "FeedForwardNet: need at least an input and an output layer");
  for (int s : sizes_) require(s >= 1, "FeedForwardNet: layer sizes must be >= 1");
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(out));
  }
}

FeedForwardNet::FeedForwardNet(std::vector<Eigen::MatrixXd> weights, std::vector<Eigen::VectorXd> biases)
    : weights_(std::move(weights)), biases_(std::move(biases)) {
  require(!weights_.empty(), "FeedForwardNet: no layers");
  require(weights_.size() == biases_.size(), "FeedForwardNet: weight and bias counts differ");
  sizes_.push_back(static_cast<int>(weights_.front().cols()));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    require(weights_[l].cols() == sizes_.back(),
            "FeedForwardNet: layer " + std::to_string(l) + " input dimension mismatch");
    require(biases_[l].size() == weights_[l].rows(),
            "FeedForwardNet: layer " + std::to_string(l) + " bias dimension mismatch");
    require(weights_[l].allFinite() && biases_[l].allFinite(), "FeedForwardNet: parameters must be finite");
    sizes_.push_back(static_cast<int>(weights_[l].rows()));
  }
}

Eigen::Index FeedForwardNet::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Eigen::VectorXd FeedForwardNet::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    flat.segment(at, weights_[l].size()) = weights_[l].reshaped();
    at += weights_[l].size();
    flat.segment(at, biases_[l].size()) = biases_[l];
    at += biases_[l].size();
  }
  return flat;
}

void FeedForwardNet::set_parameters(const Eigen::VectorXd& flat) {
  require(flat.size() == parameter_count(), "FeedForwardNet: parameter vector has the wrong length");
  require(flat.allFinite(), "FeedForwardNet: parameters must be finite");
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l].reshaped() = flat.segment(at, weights_[l].size());
    at += weights_[l].size();
    biases_[l] = flat.segment(at, biases_[l].size());
    at += biases_[l].size();
  }
}

void FeedForwardNet::check_input(const Eigen::MatrixXd& input) const {
  if (input.rows() != sizes_.front())
    fail(ErrorCode::InvalidArgument, "FeedForwardNet: input has " + std::to_string(input.rows()) +
                                         " rows, expected " + std::to_string(sizes_.front()));
}

Eigen::MatrixXd FeedForwardNet::forward(const Eigen::MatrixXd& input) const {
  check_input(input);
  Eigen::MatrixXd a = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    if (l + 1 < weights_.size()) tanh_inplace(z);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd FeedForwardNet::forward(const Eigen::MatrixXd& input, Trace& trace) const {
  check_input(input);
  trace.activations.clear();
  trace.activations.push_back(input);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * trace.activations.back();
    z.colwise() += biases_[l];
    if (l + 1 < weights_.size()) tanh_inplace(z);
    trace.activations.push_back(std::move(z));
  }
  return trace.activations.back();
}

FeedForwardNet::Gradients FeedForwardNet::backward(const Trace& trace,
                                                   const Eigen::MatrixXd& output_grad) const {
  require(trace.activations.size() == weights_.size() + 1, "FeedForwardNet: trace does not match the net");
  require(output_grad.rows() == sizes_.back() && output_grad.cols() == trace.activations.back().cols(),
          "FeedForwardNet: output gradient has the wrong shape");
  Gradients g;
  g.parameters.resize(parameter_count());
  // Offsets of each layer's block in the flat layout.
  std::vector<Eigen::Index> offset(weights_.size());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    offset[l] = at;
    at += weights_[l].size() + biases_[l].size();
  }
  Eigen::MatrixXd delta = output_grad;  // dL/dz for the current layer
  for (std::size_t l = weights_.size(); l-- > 0;) {
    const Eigen::MatrixXd& in = trace.activations[l];
    const Eigen::MatrixXd dw = delta * in.transpose();
    g.parameters.segment(offset[l], dw.size()) = dw.reshaped();
    g.parameters.segment(offset[l] + dw.size(), biases_[l].size()) = delta.rowwise().sum();
    Eigen::MatrixXd back = weights_[l].transpose() * delta;
    if (l > 0) back.array() *= 1.0 - in.array().square();  // tanh' via its output
    delta = std::move(back);
  }
  g.input = std::move(delta);
  return g;
}

}  // namespace rdrom

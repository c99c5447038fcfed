#pragma once

// Dense feed-forward network with softplus hidden activations and a linear output layer,
// evaluated on column batches (one example per column), with hand-written backprop and Adam.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "skindiff/rng.hpp"

namespace skindiff {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Element-wise softplus and its derivative on whole matrices (vectorized by Eigen).
inline Matrix softplus(const Matrix& z) {
  return (z.array().max(0.0) + (1.0 + (-z.array().abs()).exp()).log()).matrix();
}
inline Matrix softplus_derivative(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

class Mlp {
 public:
  Mlp() = default;

  /// dims = [input, hidden..., output]; dims.size() - 1 weight layers.
  explicit Mlp(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp: need at least one layer");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      if (dims_[l] == 0 || dims_[l + 1] == 0) throw std::invalid_argument("Mlp: zero-width layer");
      weights_.push_back(Matrix::Zero(static_cast<Eigen::Index>(dims_[l + 1]), static_cast<Eigen::Index>(dims_[l])));
      biases_.push_back(Vector::Zero(static_cast<Eigen::Index>(dims_[l + 1])));
    }
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void initialize(Rng& rng) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
      for (Eigen::Index i = 0; i < weights_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < weights_[l].cols(); ++j) weights_[l](i, j) = uniform(rng, -bound, bound);
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l](i) = uniform(rng, -bound, bound);
    }
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t n_layers() const { return weights_.size(); }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }

  Matrix& weight(std::size_t l) { return weights_[l]; }
  const Matrix& weight(std::size_t l) const { return weights_[l]; }
  Vector& bias(std::size_t l) { return biases_[l]; }
  const Vector& bias(std::size_t l) const { return biases_[l]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
      n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
  }

  /// Flat layout: per layer, the weight matrix row-major (out x in), then the bias.
  std::vector<double> parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < weights_[l].cols(); ++j) out.push_back(weights_[l](i, j));
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) out.push_back(biases_[l](i));
    }
    return out;
  }

  void set_parameters(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("Mlp: parameter count mismatch");
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < weights_[l].cols(); ++j) weights_[l](i, j) = flat[k++];
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l](i) = flat[k++];
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    return true;
  }

  /// Activations of every layer, kept for backprop. pre[l] is the pre-activation of layer l,
  /// post[0] is the input and post[l + 1] the output of layer l.
  struct Trace {
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
  };

  Matrix forward(const Matrix& x) const {
    Matrix a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * a;
      z.colwise() += biases_[l];
      if (l + 1 < weights_.size()) z = softplus(z);
      a = std::move(z);
    }
    return a;
  }

  Matrix forward(const Matrix& x, Trace& trace) const {
    trace.pre.clear();
    trace.post.clear();
    trace.post.push_back(x);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * trace.post.back();
      z.colwise() += biases_[l];
      trace.pre.push_back(z);
      if (l + 1 < weights_.size()) z = softplus(z);
      trace.post.push_back(std::move(z));
    }
    return trace.post.back();
  }

  struct Gradient {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Matrix input;
  };

  /// Backpropagates dL/d(output) through a recorded forward pass.
  Gradient backward(const Trace& trace, const Matrix& d_output) const {
    Gradient g;
    g.weights.resize(weights_.size());
    g.biases.resize(weights_.size());
    Matrix delta = d_output;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      if (l + 1 < weights_.size())
        delta.array() *= softplus_derivative(trace.pre[l]).array();
      g.weights[l].noalias() = delta * trace.post[l].transpose();
      g.biases[l] = delta.rowwise().sum();
      Matrix prev = weights_[l].transpose() * delta;
      delta = std::move(prev);
    }
    g.input = std::move(delta);
    return g;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Adaptive-moment gradient descent over all parameters of an Mlp.
class Adam {
 public:
  explicit Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
      mw_.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
      vw_.push_back(mw_.back());
      mb_.push_back(Vector::Zero(net.bias(l).size()));
      vb_.push_back(mb_.back());
    }
  }

  void step(Mlp& net, const Mlp::Gradient& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double step = lr_ * std::sqrt(c2) / c1;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
      mw_[l] = beta1_ * mw_[l] + (1.0 - beta1_) * g.weights[l];
      vw_[l] = beta2_ * vw_[l] + (1.0 - beta2_) * g.weights[l].cwiseAbs2();
      net.weight(l).array() -= step * mw_[l].array() / (vw_[l].array().sqrt() + eps_);
      mb_[l] = beta1_ * mb_[l] + (1.0 - beta1_) * g.biases[l];
      vb_[l] = beta2_ * vb_[l] + (1.0 - beta2_) * g.biases[l].cwiseAbs2();
      net.bias(l).array() -= step * mb_[l].array() / (vb_[l].array().sqrt() + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> mw_, vw_;
  std::vector<Vector> mb_, vb_;
};

}  // namespace skindiff

// Fully connected network with SiLU hidden activations and a linear output,
// evaluated on batches stored column-wise. Provides reverse-mode parameter
// gradients, forward-mode input derivatives (for Jacobian traces) and Adam.

#ifndef POLYFLOW_MLP_HPP
#define POLYFLOW_MLP_HPP

#include "polyflow/core.hpp"
#include "polyflow/random.hpp"

#include <vector>

namespace polyflow {

namespace detail {

/// silu(x) = x sigmoid(x), applied in place; returns silu'(x) in deriv.
inline void silu_inplace(Matrix& Z, Matrix* deriv) {
  const Eigen::ArrayXXd s = (1.0 + (-Z.array()).exp()).inverse();
  if (deriv) *deriv = (s * (1.0 + Z.array() * (1.0 - s))).matrix();
  Z.array() *= s;
}

}  // namespace detail

class MLP {
 public:
  MLP() = default;

  /// sizes = {input, hidden..., output}. Kaiming-uniform initialization
  /// (bound 1/sqrt(fan_in) for weights and biases). With zero_output the last
  /// layer starts at zero, so the network is identically zero.
  MLP(const std::vector<Index>& sizes, RandomStream rng, bool zero_output = false) {
    require(sizes.size() >= 2, "MLP: need at least input and output sizes");
    for (Index s : sizes) require(s >= 1, "MLP: layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
      Matrix W(sizes[l + 1], sizes[l]);
      Vector b(sizes[l + 1]);
      for (Index j = 0; j < W.cols(); ++j)
        for (Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-bound, bound);
      for (Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-bound, bound);
      W_.push_back(std::move(W));
      b_.push_back(std::move(b));
    }
    if (zero_output) {
      W_.back().setZero();
      b_.back().setZero();
    }
  }

  Index input_dim() const { return W_.front().cols(); }
  Index output_dim() const { return W_.back().rows(); }
  std::size_t num_layers() const { return W_.size(); }
  std::vector<Index> sizes() const {
    std::vector<Index> out{input_dim()};
    for (const Matrix& W : W_) out.push_back(W.rows());
    return out;
  }
  Index num_parameters() const {
    Index n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
    return n;
  }

  std::vector<Matrix>& weights() { return W_; }
  std::vector<Vector>& biases() { return b_; }
  const std::vector<Matrix>& weights() const { return W_; }
  const std::vector<Vector>& biases() const { return b_; }

  /// Flat parameter vector: W_0 (column-major), b_0, W_1, b_1, ...
  Vector parameters() const {
    Vector p(num_parameters());
    Index o = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      p.segment(o, W_[l].size()) = W_[l].reshaped();
      o += W_[l].size();
      p.segment(o, b_[l].size()) = b_[l];
      o += b_[l].size();
    }
    return p;
  }

  void set_parameters(const Eigen::Ref<const Vector>& p) {
    require(p.size() == num_parameters(), "MLP: wrong parameter count");
    Index o = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      W_[l].reshaped() = p.segment(o, W_[l].size());
      o += W_[l].size();
      b_[l] = p.segment(o, b_[l].size());
      o += b_[l].size();
    }
  }

  Matrix forward(const Matrix& X) const {
    require(X.rows() == input_dim(), "MLP::forward: wrong input dimension");
    Matrix A = X;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix Z = W_[l] * A;
      Z.colwise() += b_[l];
      if (l + 1 < W_.size()) detail::silu_inplace(Z, nullptr);
      A = std::move(Z);
    }
    return A;
  }

  struct Tape {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> deriv;   // silu'(pre-activation) of each hidden layer
  };

  Matrix forward(const Matrix& X, Tape& tape) const {
    require(X.rows() == input_dim(), "MLP::forward: wrong input dimension");
    tape.inputs.assign(1, X);
    tape.deriv.clear();
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix Z = W_[l] * tape.inputs.back();
      Z.colwise() += b_[l];
      if (l + 1 == W_.size()) return Z;
      Matrix d;
      detail::silu_inplace(Z, &d);
      tape.deriv.push_back(std::move(d));
      tape.inputs.push_back(std::move(Z));
    }
    return {};
  }

  struct Gradient {
    std::vector<Matrix> W;
    std::vector<Vector> b;
  };

  /// Parameter gradient of sum_ij dY_ij * Y_ij, given the tape of forward().
  Gradient backward(const Tape& tape, Matrix dY) const {
    Gradient g;
    g.W.resize(W_.size());
    g.b.resize(W_.size());
    for (std::size_t l = W_.size(); l-- > 0;) {
      g.W[l].noalias() = dY * tape.inputs[l].transpose();
      g.b[l] = dY.rowwise().sum();
      if (l == 0) break;
      Matrix dA = W_[l].transpose() * dY;
      dY = dA.cwiseProduct(tape.deriv[l - 1]);
    }
    return g;
  }

  /// Directional derivative J(X) dX of the outputs for each column.
  Matrix jvp(const Tape& tape, const Matrix& dX) const {
    Matrix dA = dX;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix dZ = W_[l] * dA;
      if (l + 1 == W_.size()) return dZ;
      dA = dZ.cwiseProduct(tape.deriv[l]);
    }
    return dA;
  }

 private:
  std::vector<Matrix> W_;
  std::vector<Vector> b_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const MLP& net, AdamOptions opt) : opt_(opt) {
    for (const Matrix& W : net.weights()) {
      mW_.push_back(Matrix::Zero(W.rows(), W.cols()));
      vW_.push_back(Matrix::Zero(W.rows(), W.cols()));
    }
    for (const Vector& b : net.biases()) {
      mb_.push_back(Vector::Zero(b.size()));
      vb_.push_back(Vector::Zero(b.size()));
    }
  }

  void step(MLP& net, const MLP::Gradient& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    auto update = [&](auto& p, const auto& grad, auto& m, auto& v) {
      m = opt_.beta1 * m + (1.0 - opt_.beta1) * grad;
      v = opt_.beta2 * v + (1.0 - opt_.beta2) * grad.cwiseProduct(grad);
      p.array() -= opt_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt_.eps);
    };
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      update(net.weights()[l], g.W[l], mW_[l], vW_[l]);
      update(net.biases()[l], g.b[l], mb_[l], vb_[l]);
    }
  }

  long steps() const { return t_; }
  AdamOptions& options() { return opt_; }

 private:
  AdamOptions opt_;
  long t_ = 0;
  std::vector<Matrix> mW_, vW_;
  std::vector<Vector> mb_, vb_;
};

}  // namespace polyflow

#endif  // POLYFLOW_MLP_HPP

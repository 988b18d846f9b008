#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace nerp::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Weights are stored input-major: W is (in x out) row-major so y = x W + b.
// Per-point affine map with a fixed accumulation order, independent of how
// many points are evaluated together.
inline void affine(std::span<const double> x, const double* weight, const double* bias, int out,
                   double* y) {
  for (int o = 0; o < out; ++o) y[o] = bias[o];
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    const double* row = weight + k * static_cast<std::size_t>(out);
    for (int o = 0; o < out; ++o) y[o] += xk * row[o];
  }
}

// Applies `f` to aligned blocks of eight so every element takes the same SIMD
// path whatever its position or address.
template <typename F>
inline void blockwise(const double* in, double* out, Eigen::Index n, F f) {
  constexpr int kBlock = 8;
  alignas(64) double buf[kBlock];
  for (Eigen::Index b = 0; b < n; b += kBlock) {
    const int m = static_cast<int>(std::min<Eigen::Index>(kBlock, n - b));
    std::copy_n(in + b, m, buf);
    std::fill(buf + m, buf + kBlock, 0.0);
    Eigen::Map<Eigen::Array<double, kBlock, 1>, Eigen::Aligned64> a(buf);
    a = f(a);
    std::copy_n(buf, m, out + b);
  }
}

// Vectorized softplus; elementwise results are bitwise independent of n and alignment.
inline void softplus_array(const double* in, double* out, Eigen::Index n) {
  blockwise(in, out, n, [](const auto& a) {
    return (a.max(0.0) + (1.0 + (-a.abs()).exp()).log()).eval();
  });
}

inline void softplus_inplace(double* v, int n) { softplus_array(v, v, n); }

// Batched dense layer on row-major activations.
inline void dense_forward(const RowMatrix& x, const double* weight, const double* bias, int out,
                          RowMatrix& y) {
  ConstRowMap w(weight, x.cols(), out);
  ConstVecMap b(bias, out);
  y.noalias() = x * w;
  y.rowwise() += b;
}

// Accumulates dW, db and, when dx is non-null, writes dx.
inline void dense_backward(const RowMatrix& x, const RowMatrix& dy, const double* weight, double* d_weight,
                           double* d_bias, RowMatrix* dx) {
  const auto in = x.cols();
  const auto out = dy.cols();
  RowMap dw(d_weight, in, out);
  VecMap db(d_bias, out);
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  if (dx != nullptr) {
    ConstRowMap w(weight, in, out);
    dx->noalias() = dy * w.transpose();
  }
}

// Elementwise softplus; `pre` keeps the pre-activation for the backward pass.
inline void softplus_forward(const RowMatrix& pre, RowMatrix& post) {
  post.resize(pre.rows(), pre.cols());
  softplus_array(pre.data(), post.data(), pre.size());
}

inline void softplus_backward(const RowMatrix& pre, RowMatrix& grad) {
  std::vector<double> slope(pre.size());
  blockwise(pre.data(), slope.data(), pre.size(), [](const auto& a) { return (1.0 / (1.0 + (-a).exp())).eval(); });
  for (Eigen::Index i = 0; i < grad.size(); ++i) grad.data()[i] *= slope[i];
}

}  // namespace nerp::nn

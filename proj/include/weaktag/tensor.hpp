#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "weaktag/error.hpp"
#include "weaktag/random.hpp"

namespace weaktag {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s + "]";
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array. Float storage for models, double for the
/// finite-difference shadow copies used in gradient checks.
template <class T>
class BasicTensor {
 public:
  using Scalar = T;
  using MatrixMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(shape_size(shape_) == data_.size(), Errc::shape_mismatch,
            "data length " + std::to_string(data_.size()) + " vs shape " + shape_string(shape_));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return rank() < 2 ? 1 : size() / std::max<std::size_t>(rows(), 1); }

  /// Rank-1 tensors view as a single row.
  MatrixMap matrix() {
    const auto r = rank() == 1 ? 1 : rows();
    const auto c = rank() == 1 ? size() : cols();
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  ConstMatrixMap matrix() const {
    const auto r = rank() == 1 ? 1 : rows();
    const auto c = rank() == 1 ? size() : cols();
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

enum class Mode { train, eval };

template <class T>
void require_rank2(const BasicTensor<T>& t, const char* what) {
  require(t.rank() == 2, Errc::shape_mismatch,
          std::string(what) + " must be rank 2, got " + shape_string(t.shape()));
}

/// out = x W + b for x (n x d_in), W (d_in x d_out), b (d_out).
template <class T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                             const BasicTensor<T>& bias) {
  require_rank2(x, "dense input");
  require_rank2(weight, "dense weight");
  require(x.cols() == weight.rows() && bias.size() == weight.cols(), Errc::shape_mismatch,
          "dense " + shape_string(x.shape()) + " * " + shape_string(weight.shape()) + " + " +
              shape_string(bias.shape()));
  BasicTensor<T> out({x.rows(), weight.cols()});
  auto o = out.matrix();
  o.noalias() = x.matrix() * weight.matrix();
  o.rowwise() += bias.matrix().row(0);
  return out;
}

template <class T>
struct DenseGrad {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

/// Given dL/d(out), returns dL/dx, dL/dW, dL/db. The input gradient is
/// skipped when `need_input` is false (first layer).
template <class T>
DenseGrad<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                            const BasicTensor<T>& grad_out, bool need_input = true) {
  require(grad_out.rows() == x.rows() && grad_out.cols() == weight.cols(), Errc::shape_mismatch,
          "dense backward gradient " + shape_string(grad_out.shape()));
  DenseGrad<T> g;
  g.weight = BasicTensor<T>(weight.shape());
  g.weight.matrix().noalias() = x.matrix().transpose() * grad_out.matrix();
  g.bias = BasicTensor<T>({weight.cols()});
  g.bias.matrix() = grad_out.matrix().colwise().sum();
  if (need_input) {
    g.input = BasicTensor<T>(x.shape());
    g.input.matrix().noalias() = grad_out.matrix() * weight.matrix().transpose();
  }
  return g;
}

enum class Activation { relu, sigmoid };

template <class T>
T sigmoid(T x) {
  // Branching keeps exp() from overflowing for large |x|.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind) {
  BasicTensor<T> out(x.shape());
  auto in = x.data();
  auto o = out.data();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  } else {
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = sigmoid(in[i]);
  }
  return out;
}

/// dL/dx from dL/dy, where y = activation(x); uses the forward output y.
template <class T>
BasicTensor<T> activation_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out,
                                   Activation kind) {
  require(y.shape() == grad_out.shape(), Errc::shape_mismatch, "activation backward");
  BasicTensor<T> g(y.shape());
  auto out = y.data();
  auto go = grad_out.data();
  auto gi = g.data();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = out[i] > T(0) ? go[i] : T(0);
  } else {
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = go[i] * out[i] * (T(1) - out[i]);
  }
  return g;
}

/// Inverted dropout. Returns the output and writes the per-element scale
/// (0 or 1/(1-p)) into `mask` so the backward pass can replay it.
template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double p, Mode mode, Rng& rng,
                       BasicTensor<T>* mask = nullptr) {
  require(p >= 0.0 && p < 1.0, Errc::invalid_argument,
          "dropout probability must be in [0, 1), got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0) {
    if (mask) *mask = BasicTensor<T>(x.shape(), T(1));
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  BasicTensor<T> out(x.shape());
  BasicTensor<T> m(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = rng.bernoulli(p) ? T(0) : keep_scale;
    out[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return out;
}

/// Mean over the time (row) axis of an L x B block.
template <class T>
BasicTensor<T> mean_pool_time(std::span<const T> block, std::size_t frames, std::size_t bins) {
  require(frames >= 1 && bins >= 1, Errc::invalid_argument, "mean pool over an empty block");
  require(block.size() == frames * bins, Errc::shape_mismatch, "mean pool block size");
  BasicTensor<T> out({bins});
  for (std::size_t b = 0; b < bins; ++b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < frames; ++t) acc += static_cast<double>(block[t * bins + b]);
    out[b] = static_cast<T>(acc / static_cast<double>(frames));
  }
  return out;
}

template <class T>
BasicTensor<T> mean_pool_time(const BasicTensor<T>& x) {
  require_rank2(x, "mean pool input");
  return mean_pool_time<T>(x.data(), x.rows(), x.cols());
}

}  // namespace weaktag

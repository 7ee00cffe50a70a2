#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lbn/rng.hpp"

namespace lbn {

/// Dense row-major array of 64-bit floats. Tensors are plain values:
/// operations take const inputs and return fresh results. Every public
/// operation checks its output for NaN/Inf and throws instead of
/// letting non-finite values propagate.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
  static Tensor scalar(double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at3(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at3(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Throws std::runtime_error if any element is NaN or Inf.
void check_finite(const Tensor& t, const char* op);

// ---- linear algebra ----

/// Matrix product [m x k] * [k x n] -> [m x n]. Accumulation runs over
/// the inner index in ascending order, so results are reproducible and
/// match a naive triple loop.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Matrix-vector product [m x n] * [n] -> [m], same accumulation order.
Tensor matvec(const Tensor& w, const Tensor& v);

/// v^T * M for a [m x n] matrix and [m] vector -> [n] (used by backprop).
Tensor matvec_t(const Tensor& w, const Tensor& v);

/// Outer product [m] x [n] -> [m x n].
Tensor outer(const Tensor& a, const Tensor& b);

// ---- convolution ----

enum class Padding { same, valid };

/// 2-D cross-correlation (no kernel flip) of input [c_in x h x w] with
/// kernels [c_out x c_in x kh x kw] and zero padding. `same` preserves
/// the spatial extent and requires odd kernel sides.
Tensor conv2d(const Tensor& input, const Tensor& kernels, Padding padding);

/// Gradient of conv2d w.r.t. its input, given d(out) of shape
/// [c_out x h' x w'].
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& kernels,
                         std::size_t in_h, std::size_t in_w, Padding padding);

/// Gradient of conv2d w.r.t. the kernels.
Tensor conv2d_grad_kernels(const Tensor& input, const Tensor& grad_out,
                           std::size_t kh, std::size_t kw, Padding padding);

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double s);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);

/// In-place a += b (shape-checked); keeps gradient accumulation cheap.
void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, double s);

// ---- reductions ----

double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
/// Squared Euclidean distance between two same-shape tensors.
double sq_dist(const Tensor& a, const Tensor& b);

/// max(v) + log(sum(exp(v - max))). Exact for a single element; never
/// overflows for large-magnitude inputs. Empty input is an error.
double logsumexp(const std::vector<double>& values);
double logsumexp(const Tensor& values);

// ---- sampling ----

Tensor sample_uniform(Rng& rng, std::vector<std::size_t> shape);
Tensor sample_normal(Rng& rng, std::vector<std::size_t> shape, double mean,
                     double stddev);
/// Bernoulli draw per element with a shared rate.
Tensor sample_bernoulli(Rng& rng, std::vector<std::size_t> shape, double rate);
/// Bernoulli draw per element with per-element rates; output entries are
/// exactly 0.0 or 1.0.
Tensor sample_bernoulli(Rng& rng, const Tensor& rates);

}  // namespace lbn

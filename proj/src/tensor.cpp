#include "lbn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lbn {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require(bool ok, const char* msg) {
  if (!ok) fail(msg);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape_product(shape) != values.size())
    fail("Tensor::from: shape does not match value count");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

void check_finite(const Tensor& t, const char* op) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]))
      throw std::runtime_error(std::string(op) + ": non-finite value in result");
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: operands must be rank 2");
  if (a.extent(1) != b.extent(0))
    fail("matmul: inner dimensions disagree, " + a.shape_str() + " vs " + b.shape_str());
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = out.data() + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double aval = a[i * k + l];
      const double* b_row = b.data() + l * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aval * b_row[j];
    }
  }
  check_finite(out, "matmul");
  return out;
}

Tensor matvec(const Tensor& w, const Tensor& v) {
  require(w.rank() == 2 && v.rank() == 1, "matvec: expects matrix and vector");
  if (w.extent(1) != v.extent(0))
    fail("matvec: dimensions disagree, " + w.shape_str() + " vs " + v.shape_str());
  const std::size_t m = w.extent(0), n = w.extent(1);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = w.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j];
    out[i] = acc;
  }
  check_finite(out, "matvec");
  return out;
}

Tensor matvec_t(const Tensor& w, const Tensor& v) {
  require(w.rank() == 2 && v.rank() == 1, "matvec_t: expects matrix and vector");
  if (w.extent(0) != v.extent(0))
    fail("matvec_t: dimensions disagree, " + w.shape_str() + " vs " + v.shape_str());
  const std::size_t m = w.extent(0), n = w.extent(1);
  Tensor out({n});
  for (std::size_t i = 0; i < m; ++i) {
    const double vi = v[i];
    const double* row = w.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += vi * row[j];
  }
  check_finite(out, "matvec_t");
  return out;
}

Tensor outer(const Tensor& a, const Tensor& b) {
  require(a.rank() == 1 && b.rank() == 1, "outer: expects two vectors");
  const std::size_t m = a.extent(0), n = b.extent(0);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i] * b[j];
  check_finite(out, "outer");
  return out;
}

namespace {

struct ConvGeom {
  std::size_t c_in, h, w, c_out, kh, kw, out_h, out_w;
  long pad_y, pad_x;
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& kernels, Padding padding) {
  require(input.rank() == 3, "conv2d: input must be [c_in x h x w]");
  require(kernels.rank() == 4, "conv2d: kernels must be [c_out x c_in x kh x kw]");
  ConvGeom g{};
  g.c_in = input.extent(0);
  g.h = input.extent(1);
  g.w = input.extent(2);
  g.c_out = kernels.extent(0);
  g.kh = kernels.extent(2);
  g.kw = kernels.extent(3);
  if (kernels.extent(1) != g.c_in)
    fail("conv2d: kernel input channels " + kernels.shape_str() +
         " disagree with input " + input.shape_str());
  if (padding == Padding::same) {
    if (g.kh % 2 == 0 || g.kw % 2 == 0)
      fail("conv2d: `same` padding requires odd kernel sides");
    g.out_h = g.h;
    g.out_w = g.w;
    g.pad_y = static_cast<long>(g.kh - 1) / 2;
    g.pad_x = static_cast<long>(g.kw - 1) / 2;
  } else {
    if (g.kh > g.h || g.kw > g.w)
      fail("conv2d: kernel larger than input under `valid` padding");
    g.out_h = g.h - g.kh + 1;
    g.out_w = g.w - g.kw + 1;
    g.pad_y = 0;
    g.pad_x = 0;
  }
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, Padding padding) {
  const ConvGeom g = conv_geometry(input, kernels, padding);
  Tensor out({g.c_out, g.out_h, g.out_w});
  for (std::size_t co = 0; co < g.c_out; ++co) {
    double* out_plane = out.data() + co * g.out_h * g.out_w;
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const double* in_plane = input.data() + ci * g.h * g.w;
      const double* kbase = kernels.data() + (co * g.c_in + ci) * g.kh * g.kw;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const double kval = kbase[ky * g.kw + kx];
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long iy = static_cast<long>(oy + ky) - g.pad_y;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            // Clamp the ox range so ix stays inside [0, w).
            const long ox_lo = std::max<long>(0, g.pad_x - static_cast<long>(kx));
            const long ox_hi = std::min<long>(static_cast<long>(g.out_w),
                                              static_cast<long>(g.w) + g.pad_x -
                                                  static_cast<long>(kx));
            const double* in_row = in_plane + iy * g.w + (ox_lo + kx - g.pad_x);
            double* out_row = out_plane + oy * g.out_w;
            for (long ox = ox_lo; ox < ox_hi; ++ox)
              out_row[ox] += kval * in_row[ox - ox_lo];
          }
        }
      }
    }
  }
  check_finite(out, "conv2d");
  return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& kernels,
                         std::size_t in_h, std::size_t in_w, Padding padding) {
  require(grad_out.rank() == 3, "conv2d_grad_input: grad must be rank 3");
  require(kernels.rank() == 4, "conv2d_grad_input: kernels must be rank 4");
  const std::size_t c_out = kernels.extent(0), c_in = kernels.extent(1);
  const std::size_t kh = kernels.extent(2), kw = kernels.extent(3);
  if (grad_out.extent(0) != c_out)
    fail("conv2d_grad_input: channel mismatch");
  const std::size_t out_h = grad_out.extent(1), out_w = grad_out.extent(2);
  const long pad_y = padding == Padding::same ? static_cast<long>(kh - 1) / 2 : 0;
  const long pad_x = padding == Padding::same ? static_cast<long>(kw - 1) / 2 : 0;
  Tensor gin({c_in, in_h, in_w});
  for (std::size_t co = 0; co < c_out; ++co) {
    const double* go_plane = grad_out.data() + co * out_h * out_w;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      double* gin_plane = gin.data() + ci * in_h * in_w;
      const double* kbase = kernels.data() + (co * c_in + ci) * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double kval = kbase[ky * kw + kx];
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const long iy = static_cast<long>(oy + ky) - pad_y;
            if (iy < 0 || iy >= static_cast<long>(in_h)) continue;
            const long ox_lo = std::max<long>(0, pad_x - static_cast<long>(kx));
            const long ox_hi = std::min<long>(static_cast<long>(out_w),
                                              static_cast<long>(in_w) + pad_x -
                                                  static_cast<long>(kx));
            const double* go_row = go_plane + oy * out_w;
            double* gin_row = gin_plane + iy * in_w + (ox_lo + kx - pad_x);
            for (long ox = ox_lo; ox < ox_hi; ++ox)
              gin_row[ox - ox_lo] += kval * go_row[ox];
          }
        }
      }
    }
  }
  check_finite(gin, "conv2d_grad_input");
  return gin;
}

Tensor conv2d_grad_kernels(const Tensor& input, const Tensor& grad_out,
                           std::size_t kh, std::size_t kw, Padding padding) {
  require(input.rank() == 3 && grad_out.rank() == 3,
          "conv2d_grad_kernels: operands must be rank 3");
  const std::size_t c_in = input.extent(0), h = input.extent(1), w = input.extent(2);
  const std::size_t c_out = grad_out.extent(0);
  const std::size_t out_h = grad_out.extent(1), out_w = grad_out.extent(2);
  const long pad_y = padding == Padding::same ? static_cast<long>(kh - 1) / 2 : 0;
  const long pad_x = padding == Padding::same ? static_cast<long>(kw - 1) / 2 : 0;
  Tensor gk({c_out, c_in, kh, kw});
  for (std::size_t co = 0; co < c_out; ++co) {
    const double* go_plane = grad_out.data() + co * out_h * out_w;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* in_plane = input.data() + ci * h * w;
      double* gk_base = gk.data() + (co * c_in + ci) * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const long iy = static_cast<long>(oy + ky) - pad_y;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const long ox_lo = std::max<long>(0, pad_x - static_cast<long>(kx));
            const long ox_hi = std::min<long>(static_cast<long>(out_w),
                                              static_cast<long>(w) + pad_x -
                                                  static_cast<long>(kx));
            const double* go_row = go_plane + oy * out_w;
            const double* in_row = in_plane + iy * w + (ox_lo + kx - pad_x);
            for (long ox = ox_lo; ox < ox_hi; ++ox)
              acc += go_row[ox] * in_row[ox - ox_lo];
          }
          gk_base[ky * kw + kx] = acc;
        }
      }
    }
  }
  check_finite(gk, "conv2d_grad_kernels");
  return gk;
}

namespace {

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  if (!a.same_shape(b))
    fail(std::string(op) + ": shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  check_finite(out, op);
  return out;
}

template <typename F>
Tensor map(const Tensor& a, const char* op, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  check_finite(out, op);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor add(const Tensor& a, double s) {
  return map(a, "add", [s](double x) { return x + s; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor mul(const Tensor& a, double s) {
  return map(a, "mul", [s](double x) { return x * s; });
}

Tensor sigmoid(const Tensor& a) {
  return map(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor exp(const Tensor& a) {
  return map(a, "exp", [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] > 0.0)) fail("log: input must be strictly positive");
  return map(a, "log", [](double x) { return std::log(x); });
}

Tensor relu(const Tensor& a) {
  return map(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; });
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail("add_inplace: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void scale_inplace(Tensor& a, double s) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= s;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
  return acc;
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) fail("dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sq_dist(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail("sq_dist: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double logsumexp(const std::vector<double>& values) {
  if (values.empty()) fail("logsumexp: empty input");
  double m = values[0];
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) {
    // All -inf collapses to -inf; a NaN or +inf input is an error upstream.
    if (m == -std::numeric_limits<double>::infinity()) return m;
    throw std::runtime_error("logsumexp: non-finite input");
  }
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double logsumexp(const Tensor& values) {
  if (values.rank() != 1) fail("logsumexp: expects a rank-1 tensor");
  return logsumexp(std::vector<double>(values.data(), values.data() + values.size()));
}

Tensor sample_uniform(Rng& rng, std::vector<std::size_t> shape) {
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.uniform();
  return out;
}

Tensor sample_normal(Rng& rng, std::vector<std::size_t> shape, double mean,
                     double stddev) {
  if (stddev < 0.0) fail("sample_normal: stddev must be >= 0");
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.normal(mean, stddev);
  return out;
}

Tensor sample_bernoulli(Rng& rng, std::vector<std::size_t> shape, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) fail("sample_bernoulli: rate outside [0, 1]");
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.bernoulli(rate);
  return out;
}

Tensor sample_bernoulli(Rng& rng, const Tensor& rates) {
  Tensor out(rates.shape());
  for (std::size_t i = 0; i < rates.size(); ++i) out[i] = rng.bernoulli(rates[i]);
  return out;
}

}  // namespace lbn

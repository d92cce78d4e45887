// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(fmt::format("{}: expected a matrix, got shape {}", op, shape_string(t.shape())));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, shape_string(a.shape()),
                                 shape_string(b.shape())));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError(fmt::format("tensor: shape {} needs {} values, got {}", shape_string(shape_),
                                 shape_product(shape_), data_.size()));
  }
  check_finite(data_, "tensor");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  Tensor t({rows, cols});
  std::fill(t.data_.begin(), t.data_.end(), fill);
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
  return data_.size() / shape_[0];
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(i * c, c);
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(i * c, c);
}

std::span<const double> Tensor::row_block(std::size_t begin, std::size_t count) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(begin * c, count * c);
}

std::span<double> Tensor::row_block(std::size_t begin, std::size_t count) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(begin * c, count * c);
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  return fmt::format("[{}]", fmt::join(shape, "x"));
}

void check_finite(std::span<const double> values, const char* where) {
  // v * 0 is 0 for finite v and NaN otherwise, so one sum covers the span.
  double probe = 0.0;
  for (double v : values) probe += v * 0.0;
  if (probe != 0.0) {
    const auto bad = std::find_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); });
    throw NonFiniteError(fmt::format("{}: non-finite value at index {}", where, bad - values.begin()));
  }
}

namespace {

// Four lanes of double. GCC and Clang lower this to whatever SIMD width the
// target offers, or to scalar code; lane arithmetic is plain IEEE either way.
typedef double Lanes __attribute__((vector_size(4 * sizeof(double))));

constexpr std::size_t kTileRows = 8;
constexpr std::size_t kTileCols = 8;

inline Lanes load_lanes(const double* p) {
  Lanes v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_lanes(double* p, Lanes v) { std::memcpy(p, &v, sizeof v); }

// c[0..8)[0..8) = a[0..8)[0..k) * b[0..k)[0..8), row strides lda, ldb.
void tile_kernel(const double* a, std::size_t lda, const double* b, std::size_t ldb, std::size_t k, double* c) {
  Lanes acc[kTileRows][2] = {};
  for (std::size_t kk = 0; kk < k; ++kk) {
    const Lanes b0 = load_lanes(b + kk * ldb);
    const Lanes b1 = load_lanes(b + kk * ldb + 4);
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const double ar = a[r * lda + kk];
      acc[r][0] += ar * b0;
      acc[r][1] += ar * b1;
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r) {
    store_lanes(c + r * ldb, acc[r][0]);
    store_lanes(c + r * ldb + 4, acc[r][1]);
  }
}

// Columns [j0, p) of one output row.
void row_kernel(const double* a, std::size_t k, const double* b, std::size_t p, std::size_t j0, double* c) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double ak = a[kk];
    const double* bk = b + kk * p;
    for (std::size_t j = j0; j < p; ++j) c[j] += ak * bk[j];
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: inner dimensions disagree for {} x {}",
                                 shape_string(a.shape()), shape_string(b.shape())));
  }
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  Tensor c({m, p});
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* cd = c.data().data();
  // Every c(i, j) starts at 0 and accumulates its k products in ascending k,
  // whichever tile it falls in, so tiling does not change any result bit.
  std::size_t i = 0;
  for (; i + kTileRows <= m; i += kTileRows) {
    std::size_t j = 0;
    for (; j + kTileCols <= p; j += kTileCols) tile_kernel(ad + i * k, k, bd + j, p, k, cd + i * p + j);
    for (std::size_t r = i; r < i + kTileRows; ++r) row_kernel(ad + r * k, k, bd, p, j, cd + r * p);
  }
  for (; i < m; ++i) row_kernel(ad + i * k, k, bd, p, 0, cd + i * p);
  check_finite(c.data(), "matmul");
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(b, "matmul_nt");
  if (a.rank() == 2 && a.cols() != b.cols()) {
    throw ShapeError(fmt::format("matmul_nt: inner dimensions disagree for {} x {}^T",
                                 shape_string(a.shape()), shape_string(b.shape())));
  }
  return matmul(a, transpose(b));
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  if (b.rank() == 2 && a.rows() != b.rows()) {
    throw ShapeError(fmt::format("matmul_tn: inner dimensions disagree for {}^T x {}",
                                 shape_string(a.shape()), shape_string(b.shape())));
  }
  return matmul(transpose(a), b);
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor t({c, r});
  const double* src = a.data().data();
  double* dst = t.data().data();
  constexpr std::size_t B = 16;
  for (std::size_t i0 = 0; i0 < r; i0 += B) {
    for (std::size_t j0 = 0; j0 < c; j0 += B) {
      const std::size_t i1 = std::min(i0 + B, r), j1 = std::min(j0 + B, c);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * r + i] = src[i * c + j];
      }
    }
  }
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  check_finite(o, "subtract");
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (double& v : out.data()) v *= factor;
  check_finite(out.data(), "scale");
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  check_finite(x, "add");
}

void axpy_inplace(Tensor& y, double alpha, const Tensor& x) {
  require_same_shape(y, x, "axpy");
  auto yd = y.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += alpha * xd[i];
  check_finite(yd, "axpy");
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError(fmt::format("dot: length mismatch {} vs {}", u.size(), v.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

double sum_squares(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(sum_squares(v)); }

double frobenius_norm(const Tensor& a) { return norm2(a.data()); }

std::vector<double> softmax_row(std::span<const double> v) {
  std::vector<double> out(v.size());
  if (v.empty()) return out;
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  check_finite(out, "softmax_row");
  return out;
}

Tensor softmax_row(const Tensor& v) { return Tensor(v.shape(), softmax_row(v.data())); }

Tensor softmax_rows(const Tensor& m) {
  require_matrix(m, "softmax_rows");
  Tensor out(m.shape());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = softmax_row(m.row(i));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError(fmt::format("cosine: length mismatch {} vs {}", u.size(), v.size()));
  }
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu <= kNormEpsilon || nv <= kNormEpsilon) {
    throw DegenerateNormError(fmt::format("cosine: degenerate norm ({:g}, {:g})", nu, nv));
  }
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Tensor kaiming_init(Rng& rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ShapeError("kaiming_init: rows and cols must be >= 1");
  return normal_tensor(rng, {rows, cols}, std::sqrt(2.0 / static_cast<double>(cols)));
}

Tensor normal_tensor(Rng& rng, std::vector<std::size_t> shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace qvdit

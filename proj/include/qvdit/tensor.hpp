// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major double tensors and the handful of deterministic kernels the
// rest of the library is built on. Every reduction runs in a fixed order
// (row-major, left to right) so results are bit-stable across runs.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "qvdit/rng.hpp"

namespace qvdit {

inline constexpr double kNormEpsilon = 1e-12;

class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(std::vector<std::size_t> shape);
  /// Takes ownership of `data`; throws ShapeError if sizes disagree and
  /// NonFiniteError on NaN/Inf.
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }

  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);
  /// Contiguous block of rows [begin, begin + count).
  std::span<const double> row_block(std::size_t begin, std::size_t count) const;
  std::span<double> row_block(std::size_t begin, std::size_t count);

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Throws NonFiniteError naming `where` if any element is NaN or Inf.
void check_finite(std::span<const double> values, const char* where);

/// a[m x k] * b[k x p]. Each output sums its k products left to right.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m x k] * b[p x k]^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a[k x m]^T * b[k x p].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& y, double alpha, const Tensor& x);

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> v);
double sum_squares(std::span<const double> v);
double frobenius_norm(const Tensor& a);

/// Numerically stable softmax (max subtraction).
std::vector<double> softmax_row(std::span<const double> v);
Tensor softmax_row(const Tensor& v);
/// Row-wise softmax of a matrix.
Tensor softmax_rows(const Tensor& m);

/// u.v / (|u||v|), clamped to [-1, 1]. Throws DegenerateNormError when either
/// norm is <= kNormEpsilon and ShapeError on length mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

/// i.i.d. N(0, 2 / cols) entries (fan_in = cols).
Tensor kaiming_init(Rng& rng, std::size_t rows, std::size_t cols);
Tensor normal_tensor(Rng& rng, std::vector<std::size_t> shape, double stddev);

}  // namespace qvdit

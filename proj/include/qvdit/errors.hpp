// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qvdit {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a cosine or relation term is requested for a vector whose norm
// does not exceed kNormEpsilon.
class DegenerateNormError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class OutOfRangeCodeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace qvdit

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace oodkit {

// Dense row-major matrix of doubles. All library math runs in double
// precision regardless of the storage dtype of the files it came from.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

  bool operator==(const Matrix& other) const = default;
};

}  // namespace oodkit

#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "vskd/common.hpp"

namespace vskd {

/// Dense n-dimensional array of 64-bit reals, row-major.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
      : shape(std::move(shape_)), values(std::move(values_)) {
    if (values.size() != shape_numel())
      throw InvalidInput("tensor value count does not match shape");
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  /// Rows/cols of a rank-1 or rank-2 tensor (a vector is one row).
  std::size_t rows() const { return rank() == 2 ? shape[0] : 1; }
  std::size_t cols() const {
    if (rank() == 2) return shape[1];
    if (rank() == 1) return shape[0];
    throw InvalidInput("rows/cols only defined for rank 1 or 2");
  }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

 private:
  std::size_t shape_numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

}  // namespace vskd

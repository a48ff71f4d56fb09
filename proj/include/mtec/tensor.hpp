#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mtec::nn {

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("tensor shape must be non-negative");
  }
  Tensor(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c))
      throw std::invalid_argument("tensor data does not match shape");
  }

  std::size_t size() const { return data.size(); }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace mtec::nn

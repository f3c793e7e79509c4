#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "pcil/errors.hpp"

namespace pcil {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major value holder. grad is empty until a backward pass (or an
// explicit zero_grad) touches it; when present it has the same element count.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_numel(shape)) {
      throw DimensionError("tensor value count " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    }
  }

  static Tensor zeros(Shape s) {
    const std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t rows() const {
    if (shape.empty()) throw DimensionError("rows() on rank-0 tensor");
    return shape[0];
  }
  std::size_t cols() const {
    if (shape.size() != 2) throw DimensionError("cols() needs a rank-2 tensor, got " + shape_str(shape));
    return shape[1];
  }

  double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
  void clear_grad() {
    if (!grad.empty()) grad.assign(grad.size(), 0.0);
  }
};

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace pcil

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ehrgen::ad {

// Dense row-major matrix of doubles. Vectors are stored as [n x 1]; scalars as [1 x 1].
struct Tensor {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(std::span<const double> values);

  size_t size() const { return data.size(); }
  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  double item() const;  // requires a single element
  std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double v);
  std::string shape_string() const;
};

// Trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
  void zero_grad() { grad.fill(0.0); }
};

}  // namespace ehrgen::ad

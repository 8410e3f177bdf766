#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace kmpc {

/// Dense row-major float64 tensor. An empty shape denotes a scalar with one
/// element, so product(shape) == data.size() holds for every valid tensor.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor identity(std::size_t n);

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double operator[](std::size_t i) const { return data[i]; }
  double& operator[](std::size_t i) { return data[i]; }
  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

/// Largest absolute entry difference; throws on shape mismatch.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace kmpc

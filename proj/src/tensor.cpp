#include "kmpc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kmpc {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape_product(shape) != data.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str() + " does not match " +
                                std::to_string(data.size()) + " elements");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vec(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw std::logic_error("Tensor::rows: tensor " + shape_str() + " is not 2-d");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw std::logic_error("Tensor::cols: tensor " + shape_str() + " is not 2-d");
  return shape[1];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
double& Tensor::at(std::size_t r, std::size_t c) {
  std::size_t n_cols = cols();
  return data[r * n_cols + c];
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: shapes " + a.shape_str() + " vs " + b.shape_str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace kmpc

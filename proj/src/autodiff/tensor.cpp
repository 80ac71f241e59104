#include "midpc/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "midpc/util/errors.hpp"

namespace midpc::ad {
namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("tensor: rank-0 shapes are not supported");
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor: dimensions must be positive, got " + ad::shape_string(shape));
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_))
    throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                     " does not match shape " + ad::shape_string(shape_));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  switch (shape_.size()) {
    case 1:
      return 1;
    case 2:
      return shape_[0];
    default:
      throw ShapeError("tensor: matrix view requires rank 1 or 2, got " + ad::shape_string(shape_));
  }
}

std::size_t Tensor::cols() const {
  switch (shape_.size()) {
    case 1:
      return shape_[0];
    case 2:
      return shape_[1];
    default:
      throw ShapeError("tensor: matrix view requires rank 1 or 2, got " + ad::shape_string(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("tensor: item() on " + ad::shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_string() const { return ad::shape_string(shape_); }

}  // namespace midpc::ad

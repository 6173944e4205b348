#include "gcnnlp/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

namespace gcnnlp::ad {
namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != element_count(shape_)) {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " given " + std::to_string(values_.size()) +
                     " values");
  }
}

MatrixMap Tensor::matrix() {
  if (rank() == 1) return MatrixMap(values_.data(), 1, static_cast<Eigen::Index>(shape_[0]));
  if (rank() != 2) throw ShapeError("matrix view of a tensor of shape " + shape_string(shape_));
  return MatrixMap(values_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1]));
}

ConstMatrixMap Tensor::matrix() const {
  if (rank() == 1) return ConstMatrixMap(values_.data(), 1, static_cast<Eigen::Index>(shape_[0]));
  if (rank() != 2) throw ShapeError("matrix view of a tensor of shape " + shape_string(shape_));
  return ConstMatrixMap(values_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1]));
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const {
  for (double x : values_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool Tensor::identical(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (values_.empty() || std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0);
}

}  // namespace gcnnlp::ad

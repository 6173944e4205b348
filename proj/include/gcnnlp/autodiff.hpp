#pragma once

#include "gcnnlp/error.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gcnnlp::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor({}, std::vector<double>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Rank-2 element access.
  double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }

  /// Rank-2 view; rank-1 tensors are viewed as a single row.
  MatrixMap matrix();
  ConstMatrixMap matrix() const;

  void fill(double value);
  bool all_finite() const;
  /// Same shape and bit-identical values.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  // Eigen reductions peel up to the first aligned element, so the summation
  // order depends on the address unless storage is always aligned.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

/// A learnable array with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

/// Handle to a node recorded on a tape.
class Var {
 public:
  Var() = default;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Arguments handed to an op's backward function. Gradient buffers of
/// inputs that do not require a gradient are null; the others are
/// zero-initialized on first use and must be accumulated into.
struct BackwardContext {
  const Tensor& output;
  const Tensor& output_grad;
  std::span<const Tensor* const> inputs;
  std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Records operations in execution order and replays their adjoints in
/// reverse. Confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `p`; backward() accumulates into p.grad.
  Var parameter(Parameter& p);
  /// Appends an op node. `backward` may be empty for ops that are never
  /// differentiated through.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar `loss`. Parameter leaves accumulate into
  /// their Parameter::grad. Throws ShapeError for a non-scalar loss.
  void backward(Var loss);
  /// Reverse sweep seeded with explicit output adjoints, for graphs whose
  /// loss lives on another tape.
  void backward(std::span<const Var> outputs, std::span<const Tensor> seeds);
  /// Adjoint of `v` after backward(); null when nothing flowed into it.
  const Tensor* grad(Var v) const;

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* parameter = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace gcnnlp::ad

#include "gcnnlp/autodiff.hpp"

#include <algorithm>

namespace gcnnlp::ad {

const Tensor& Var::value() const { return tape_->value(*this); }

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw ShapeError("variable does not belong to this tape");
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  Node node;
  node.value = p.value;
  node.requires_grad = true;
  node.parameter = &p;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
#ifndef NDEBUG
  if (!value.all_finite()) throw Error("non-finite value produced by a recorded op");
#endif
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (Var in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  check_owned(loss);
  const Tensor& value = nodes_[loss.id()].value;
  if (value.size() != 1) throw ShapeError("backward needs a scalar loss, got shape " + shape_string(value.shape()));
  const Tensor seed(value.shape(), 1.0);
  backward(std::span<const Var>(&loss, 1), std::span<const Tensor>(&seed, 1));
}

void Tape::backward(std::span<const Var> outputs, std::span<const Tensor> seeds) {
  if (outputs.size() != seeds.size()) throw ShapeError("one seed per output is required");
  std::size_t last = 0;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    check_owned(outputs[k]);
    Node& node = nodes_[outputs[k].id()];
    if (seeds[k].shape() != node.value.shape()) {
      throw ShapeError("seed " + shape_string(seeds[k].shape()) + " for output " + shape_string(node.value.shape()));
    }
    if (!node.requires_grad) continue;
    if (!node.has_grad) {
      node.grad = Tensor(node.value.shape());
      node.has_grad = true;
    }
    for (std::size_t i = 0; i < node.grad.size(); ++i) node.grad[i] += seeds[k][i];
    last = std::max(last, outputs[k].id());
  }

  std::vector<const Tensor*> inputs;
  std::vector<Tensor*> input_grads;
  for (std::size_t i = last + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    inputs.clear();
    input_grads.clear();
    for (std::size_t in : node.inputs) {
      Node& src = nodes_[in];
      inputs.push_back(&src.value);
      if (src.requires_grad) {
        if (!src.has_grad) {
          src.grad = Tensor(src.value.shape());
          src.has_grad = true;
        }
        input_grads.push_back(&src.grad);
      } else {
        input_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardContext{node.value, node.grad, inputs, input_grads});
  }

  for (std::size_t i = 0; i <= last && i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    if (!node.parameter || !node.has_grad) continue;
    Tensor& g = node.parameter->grad;
    if (g.shape() != node.value.shape()) g = Tensor(node.value.shape());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += node.grad[k];
  }
}

const Tensor* Tape::grad(Var v) const {
  check_owned(v);
  const Node& node = nodes_[v.id()];
  return node.has_grad ? &node.grad : nullptr;
}

}  // namespace gcnnlp::ad

#include "gcnnlp/ops.hpp"

#include <cmath>

namespace gcnnlp::ad {
namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw ShapeError("operation on an unbound variable");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ");
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(a.shape()));
  }
}

// Elementwise unary op: forward value f(x), derivative df(x, y).
template <typename F, typename D>
Var unary(Var a, F f, D df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return tape_of(a).record(std::move(y), {a}, [df](const BackwardContext& c) {
    Tensor& gx = *c.input_grads[0];
    const Tensor& x = *c.inputs[0];
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += c.output_grad[i] * df(x[i], c.output[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y(a.value().shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return tape_of(a).record(std::move(y), {a, b}, [](const BackwardContext& c) {
    for (Tensor* g : c.input_grads) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c.output_grad[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y(a.value().shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return tape_of(a).record(std::move(y), {a, b}, [](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c.output_grad[i];
    }
    if (Tensor* g = c.input_grads[1]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= c.output_grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y(a.value().shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return tape_of(a).record(std::move(y), {a, b}, [](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c.output_grad[i] * (*c.inputs[1])[i];
    }
    if (Tensor* g = c.input_grads[1]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c.output_grad[i] * (*c.inputs[0])[i];
    }
  });
}

Var scale(Var a, double s) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = s * x[i];
  return tape_of(a).record(std::move(y), {a}, [s](const BackwardContext& c) {
    Tensor& g = *c.input_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * c.output_grad[i];
  });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sqrt(Var a) {
  for (double x : a.value().values()) {
    if (x < 0.0) throw Error("sqrt of a negative value");
  }
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  require_rank(x, 2, "matmul");
  require_rank(w, 2, "matmul");
  if (x.dim(1) != w.dim(0)) {
    throw ShapeError("matmul: inner dimensions of " + shape_string(x.shape()) + " and " + shape_string(w.shape()) +
                     " differ");
  }
  Tensor y({x.dim(0), w.dim(1)});
  y.matrix().noalias() = x.matrix() * w.matrix();
  return tape_of(a).record(std::move(y), {a, b}, [](const BackwardContext& c) {
    const auto gy = c.output_grad.matrix();
    if (Tensor* g = c.input_grads[0]) g->matrix().noalias() += gy * c.inputs[1]->matrix().transpose();
    if (Tensor* g = c.input_grads[1]) g->matrix().noalias() += c.inputs[0]->matrix().transpose() * gy;
  });
}

Var add_row_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 2, "add_row_bias");
  require_rank(bv, 1, "add_row_bias");
  if (bv.dim(0) != xv.dim(1)) {
    throw ShapeError("add_row_bias: bias " + shape_string(bv.shape()) + " for input " + shape_string(xv.shape()));
  }
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = xv[i * d + j] + bv[j];
  }
  return tape_of(x).record(std::move(y), {x, bias}, [n, d](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0]) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c.output_grad[i];
    }
    if (Tensor* g = c.input_grads[1]) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) (*g)[j] += c.output_grad[i * d + j];
      }
    }
  });
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
  const std::size_t keep = axis == 0 ? 1 : 0;
  const std::size_t other = parts[0].value().rank() == 2 ? parts[0].value().dim(keep) : 0;
  std::size_t total = 0;
  for (Var p : parts) {
    require_rank(p.value(), 2, "concat");
    if (p.value().dim(keep) != other) throw ShapeError("concat: mismatched " + shape_string(p.value().shape()));
    total += p.value().dim(static_cast<std::size_t>(axis));
  }
  Tensor y(axis == 0 ? Shape{total, other} : Shape{other, total});
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    offsets.push_back(offset);
    if (axis == 0) {
      y.matrix().middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(v.dim(0))) = v.matrix();
    } else {
      y.matrix().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(v.dim(1))) = v.matrix();
    }
    offset += v.dim(static_cast<std::size_t>(axis));
  }
  return tape_of(parts[0]).record(std::move(y), parts, [axis, offsets](const BackwardContext& c) {
    const auto gy = c.output_grad.matrix();
    for (std::size_t k = 0; k < c.input_grads.size(); ++k) {
      Tensor* g = c.input_grads[k];
      if (!g) continue;
      const auto off = static_cast<Eigen::Index>(offsets[k]);
      if (axis == 0) {
        g->matrix() += gy.middleRows(off, static_cast<Eigen::Index>(g->dim(0)));
      } else {
        g->matrix() += gy.middleCols(off, static_cast<Eigen::Index>(g->dim(1)));
      }
    }
  });
}

Var gather_rows(Var x, std::shared_ptr<const Index> index) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "gather_rows");
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  Tensor y({index->size(), d});
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::size_t r = (*index)[i];
    if (r >= n) throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range");
    std::copy_n(xv.data() + r * d, d, y.data() + i * d);
  }
  return tape_of(x).record(std::move(y), {x}, [index, d](const BackwardContext& c) {
    Tensor& g = *c.input_grads[0];
    for (std::size_t i = 0; i < index->size(); ++i) {
      const std::size_t r = (*index)[i];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += c.output_grad[i * d + j];
    }
  });
}

Var scatter_add_rows(Var x, std::shared_ptr<const Index> index, std::size_t rows) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "scatter_add_rows");
  if (index->size() != xv.dim(0)) throw ShapeError("scatter_add_rows: index length differs from row count");
  const std::size_t d = xv.dim(1);
  Tensor y({rows, d});
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::size_t r = (*index)[i];
    if (r >= rows) throw ShapeError("scatter_add_rows: index " + std::to_string(r) + " out of range");
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] += xv[i * d + j];
  }
  return tape_of(x).record(std::move(y), {x}, [index, d](const BackwardContext& c) {
    Tensor& g = *c.input_grads[0];
    for (std::size_t i = 0; i < index->size(); ++i) {
      const std::size_t r = (*index)[i];
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += c.output_grad[r * d + j];
    }
  });
}

Var sum(Var x, int axis) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "sum");
  if (axis != 0 && axis != 1) throw ShapeError("sum axis must be 0 or 1");
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  Tensor y({axis == 0 ? d : n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y[axis == 0 ? j : i] += xv[i * d + j];
  }
  return tape_of(x).record(std::move(y), {x}, [axis, n, d](const BackwardContext& c) {
    Tensor& g = *c.input_grads[0];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += c.output_grad[axis == 0 ? j : i];
    }
  });
}

Var sum_all(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return tape_of(x).record(Tensor::scalar(total), {x}, [](const BackwardContext& c) {
    Tensor& g = *c.input_grads[0];
    const double gy = c.output_grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy;
  });
}

Var squared_norm_rows(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "squared_norm_rows");
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  Tensor y({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += xv[i * d + j] * xv[i * d + j];
    y[i] = s;
  }
  return tape_of(x).record(std::move(y), {x}, [n, d](const BackwardContext& c) {
    Tensor& g = *c.input_grads[0];
    const Tensor& xv = *c.inputs[0];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += 2.0 * xv[i * d + j] * c.output_grad[i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor y(std::move(shape), std::vector<double>(x.value().values().begin(), x.value().values().end()));
  return tape_of(x).record(std::move(y), {x}, [](const BackwardContext& c) {
    Tensor& g = *c.input_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.output_grad[i];
  });
}

Var transpose(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "transpose");
  Tensor y({xv.dim(1), xv.dim(0)});
  y.matrix() = xv.matrix().transpose();
  return tape_of(x).record(std::move(y), {x}, [](const BackwardContext& c) {
    c.input_grads[0]->matrix() += c.output_grad.matrix().transpose();
  });
}

}  // namespace gcnnlp::ad

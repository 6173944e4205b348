#pragma once

#include "gcnnlp/autodiff.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace gcnnlp::ad {

using Index = std::vector<std::uint32_t>;

// Elementwise, equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var exp(Var a);
Var relu(Var a);
Var tanh(Var a);
Var abs(Var a);  // derivative 0 at 0
Var sqrt(Var a);  // derivative 0 at 0; input must be >= 0

/// [m x k] * [k x n] -> [m x n].
Var matmul(Var a, Var b);
/// x [n x d] plus bias [d] added to every row.
Var add_row_bias(Var x, Var bias);
/// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
/// out[i] = x[index[i]] for a rank-2 x.
Var gather_rows(Var x, std::shared_ptr<const Index> index);
/// out[index[i]] += x[i], out has `rows` rows.
Var scatter_add_rows(Var x, std::shared_ptr<const Index> index, std::size_t rows);
/// Rank-2 sum over `axis`, giving a rank-1 tensor of the other dimension.
Var sum(Var x, int axis);
/// Sum of all entries as a scalar.
Var sum_all(Var x);
/// [n x d] -> [n], squared Euclidean norm of each row.
Var squared_norm_rows(Var x);
Var reshape(Var x, Shape shape);
/// Rank-2 transpose.
Var transpose(Var x);

}  // namespace gcnnlp::ad

#pragma once

#include "deepcross/autodiff.hpp"

#include <span>
#include <vector>

// Differentiable primitives. Each function records exactly one node on the
// tape of its first operand.
namespace deepcross {

inline constexpr double kLeakySlope = 0.1;

Var matmul(Var a, Var b);
/// a[m x k] * x[k] -> [m]
Var matvec(Var a, Var x);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Divides every element of `a` by the single element of `s`.
Var div(Var a, Var s);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope = kLeakySlope);
Var pow(Var a, double exponent);
/// Clamp with zero gradient outside [lo, hi].
Var clamp(Var a, double lo, double hi);

/// Max-subtracted softmax. Rank-1 inputs use axis 0; rank-2 inputs normalise along `axis`.
Var softmax(Var a, std::size_t axis = 0);

Var sum(Var a);
/// Sum along the last axis of a rank-2 tensor: [r x c] -> [r].
Var sum_rows(Var a);
/// Sum of absolute values; the subgradient at exactly zero is 0.
Var abs_sum(Var a);
/// Single element a[i] as a one-element tensor.
Var pick(Var a, std::size_t i);

Var reshape(Var a, Shape shape);
/// Swaps the first two axes of a rank-3 tensor.
Var swap_axes01(Var a);
Var concat(std::span<const Var> parts, std::size_t axis);
/// Stacks equally shaped tensors along a new leading axis.
Var stack(std::span<const Var> parts);
/// Rows [begin, end) along axis 0.
Var slice0(Var a, std::size_t begin, std::size_t end);
/// Drops the leading axis at index i: [n x ...] -> [...].
Var index0(Var a, std::size_t i);
/// Zero padding along axis 0.
Var pad0(Var a, std::size_t before, std::size_t after);
/// Rows of a rank-2 tensor selected by index; repeated indices accumulate gradient.
Var gather_rows(Var a, std::vector<std::size_t> rows);
/// Multiplies `a` along `axis` by the rank-1 tensor `s` (length == a.extent(axis)).
Var scale_axis(Var a, Var s, std::size_t axis);

} // namespace deepcross

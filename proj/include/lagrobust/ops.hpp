#pragma once

#include <cstddef>
#include <span>

#include "lagrobust/tensor.hpp"

// Differentiable tensor operations. Each records itself on the active Tape
// when any operand requires a gradient and throws NumericError if its result
// is not finite.
namespace lagrobust::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, float s);

// x[B,N] + bias[N] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// a[m,k] * b[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// input[B,C,H,W], kernel[O,C,k,k], optional bias[O].
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding,
              const Tensor& bias = Tensor());

Tensor relu(const Tensor& x);

// [B, ...] -> [B, prod(...)]
Tensor flatten(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Reductions to a one-element tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Maximum along `axis`; the axis is removed (a rank-1 input yields shape [1]).
// Gradient flows to the first maximal element.
Tensor max_reduce(const Tensor& x, std::size_t axis);

// Euclidean norm. per_sample=false: one value over all elements.
// per_sample=true: one value per leading-axis row, shape [B].
// The gradient at an all-zero row is zero.
Tensor l2_norm(const Tensor& x, bool per_sample);

}  // namespace lagrobust::ops

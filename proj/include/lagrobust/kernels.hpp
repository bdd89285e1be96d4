#pragma once

// Raw float32 compute kernels behind the tensor ops.
//
// The kernels in `lagrobust::kernels` are OpenMP-parallel. Every output element
// is produced by exactly one thread with a fixed summation order, so results are
// bit-identical for any thread count. `lagrobust::kernels::reference` holds
// straightforward serial versions used by the tests and the benchmark.

#include <cstddef>
#include <span>

namespace lagrobust::kernels {

enum class Transpose { kNo, kYes };

/// C[m,n] (+)= op(A)[m,k] * op(B)[k,n]. op(A) is A or A^T depending on
/// `ta`; A is stored as [m,k] when not transposed and [k,m] otherwise.
void gemm(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m, std::size_t k,
          std::size_t n, Transpose ta, Transpose tb, bool accumulate);

struct Conv2dGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

// out = conv(input, weight) + bias. `bias` may be empty.
void conv2d_forward(const Conv2dGeometry& g, std::span<const float> input, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> out);
// grad_input += conv^T(grad_out, weight)
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const float> grad_out, std::span<const float> weight,
                           std::span<float> grad_input);
// grad_weight += corr(input, grad_out); grad_bias += sum(grad_out) when non-empty.
void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const float> input, std::span<const float> grad_out,
                            std::span<float> grad_weight, std::span<float> grad_bias);

/// Separable depthwise blur of [planes, height, width] with a 1-D kernel of odd
/// length, reflect padding (edge sample not repeated).
void blur_planes(std::span<const float> in, std::span<float> out, std::size_t planes, std::size_t height,
                 std::size_t width, std::span<const float> taps);

namespace reference {

void gemm(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m, std::size_t k,
          std::size_t n, Transpose ta, Transpose tb, bool accumulate);
void conv2d_forward(const Conv2dGeometry& g, std::span<const float> input, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> out);
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const float> grad_out, std::span<const float> weight,
                           std::span<float> grad_input);
void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const float> input, std::span<const float> grad_out,
                            std::span<float> grad_weight, std::span<float> grad_bias);
// Direct 2-D convolution with the outer product of `taps`.
void blur_planes(std::span<const float> in, std::span<float> out, std::size_t planes, std::size_t height,
                 std::size_t width, std::span<const float> taps);

}  // namespace reference

// Reflect an out-of-range index into [0, n) without repeating the edge.
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

}  // namespace lagrobust::kernels

#include "lagrobust/ops.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "lagrobust/kernels.hpp"

namespace lagrobust::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

Tensor finish(Shape shape, std::vector<float> values, const char* op) {
  auto out = Tensor::from_data(std::move(shape), std::move(values));
  check_finite(out, op);
  return out;
}

template <typename Fn>
Tensor elementwise(const Tensor& a, const Tensor& b, const char* op, Fn fn) {
  require_same_shape(a, b, op);
  auto av = a.data(), bv = b.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fn(av[i], bv[i]);
  return finish(a.shape(), std::move(out), op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto out = elementwise(a, b, "add", [](float x, float y) { return x + y; });
  if (Tape::should_record({&a, &b})) {
    Tape::active()->record(out, [a, b](std::span<const float> g) mutable {
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gb = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto out = elementwise(a, b, "sub", [](float x, float y) { return x - y; });
  if (Tape::should_record({&a, &b})) {
    Tape::active()->record(out, [a, b](std::span<const float> g) mutable {
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto out = elementwise(a, b, "mul", [](float x, float y) { return x * y; });
  if (Tape::should_record({&a, &b})) {
    Tape::active()->record(out, [a, b](std::span<const float> g) mutable {
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        auto bv = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        auto av = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, float s) {
  auto av = a.data();
  std::vector<float> values(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) values[i] = av[i] * s;
  auto out = finish(a.shape(), std::move(values), "scalar_mul");
  if (Tape::should_record({&a})) {
    Tape::active()->record(out, [a, s](std::span<const float> g) mutable {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw ShapeError("add_bias: expected [B,N] and [N], got " + shape_str(x.shape()) + " and " +
                     shape_str(bias.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  auto xv = x.data(), bv = bias.data();
  std::vector<float> values(xv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) values[r * cols + c] = xv[r * cols + c] + bv[c];
  auto out = finish(x.shape(), std::move(values), "add_bias");
  if (Tape::should_record({&x, &bias})) {
    Tape::active()->record(out, [x, bias, rows, cols](std::span<const float> g) mutable {
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> values(m * n);
  kernels::gemm(a.data(), b.data(), values, m, k, n, kernels::Transpose::kNo, kernels::Transpose::kNo, false);
  auto out = finish({m, n}, std::move(values), "matmul");
  if (Tape::should_record({&a, &b})) {
    Tape::active()->record(out, [a, b, m, k, n](std::span<const float> g) mutable {
      using kernels::Transpose;
      // dA = G * B^T, dB = A^T * G
      if (a.requires_grad()) kernels::gemm(g, b.data(), a.grad_buffer(), m, n, k, Transpose::kNo, Transpose::kYes, true);
      if (b.requires_grad()) kernels::gemm(a.data(), g, b.grad_buffer(), k, m, n, Transpose::kYes, Transpose::kNo, true);
    });
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding, const Tensor& bias) {
  if (input.rank() != 4) throw ShapeError("conv2d: input must be [B,C,H,W], got " + shape_str(input.shape()));
  if (kernel.rank() != 4 || kernel.dim(1) != input.dim(1) || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                     shape_str(input.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  kernels::Conv2dGeometry geo;
  geo.batch = input.dim(0);
  geo.in_channels = input.dim(1);
  geo.height = input.dim(2);
  geo.width = input.dim(3);
  geo.out_channels = kernel.dim(0);
  geo.kernel = kernel.dim(2);
  geo.stride = stride;
  geo.padding = padding;
  if (geo.height + 2 * padding < geo.kernel || geo.width + 2 * padding < geo.kernel) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != geo.out_channels)) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  std::vector<float> values(geo.batch * geo.out_channels * geo.out_height() * geo.out_width());
  kernels::conv2d_forward(geo, input.data(), kernel.data(),
                          bias.defined() ? bias.data() : std::span<const float>(), values);
  auto out = finish({geo.batch, geo.out_channels, geo.out_height(), geo.out_width()}, std::move(values), "conv2d");
  if (Tape::should_record({&input, &kernel, &bias})) {
    Tape::active()->record(out, [input, kernel, bias, geo](std::span<const float> g) mutable {
      if (input.requires_grad()) kernels::conv2d_backward_input(geo, g, kernel.data(), input.grad_buffer());
      const bool bias_grad = bias.defined() && bias.requires_grad();
      if (kernel.requires_grad() || bias_grad) {
        std::vector<float> scratch;
        std::span<float> gw;
        if (kernel.requires_grad()) {
          gw = kernel.grad_buffer();
        } else {
          scratch.assign(kernel.numel(), 0.0f);
          gw = scratch;
        }
        kernels::conv2d_backward_weight(geo, input.data(), g, gw, bias_grad ? bias.grad_buffer() : std::span<float>());
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  auto xv = x.data();
  std::vector<float> values(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) values[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
  auto out = finish(x.shape(), std::move(values), "relu");
  if (Tape::should_record({&x})) {
    Tape::active()->record(out, [x](std::span<const float> g) mutable {
      auto gx = x.grad_buffer();
      auto xv = x.data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0f) gx[i] += g[i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto xv = x.data();
  auto out = Tensor::from_data(std::move(shape), std::vector<float>(xv.begin(), xv.end()));
  if (Tape::should_record({&x})) {
    Tape::active()->record(out, [x](std::span<const float> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("flatten: need a batch axis, got " + shape_str(x.shape()));
  return reshape(x, {x.dim(0), x.numel() / x.dim(0)});
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  auto out = finish({1}, {static_cast<float>(acc)}, "sum");
  if (Tape::should_record({&x})) {
    Tape::active()->record(out, [x](std::span<const float> g) mutable {
      for (auto& v : x.grad_buffer()) v += g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  const auto n = static_cast<float>(x.numel());
  auto out = finish({1}, {static_cast<float>(acc / n)}, "mean");
  if (Tape::should_record({&x})) {
    Tape::active()->record(out, [x, n](std::span<const float> g) mutable {
      for (auto& v : x.grad_buffer()) v += g[0] / n;
    });
  }
  return out;
}

Tensor max_reduce(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw ShapeError("max_reduce: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  auto xv = x.data();
  std::vector<float> values(outer * inner);
  std::vector<std::size_t> arg(outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t best = 0;
      float bv = xv[o * len * inner + in];
      for (std::size_t j = 1; j < len; ++j) {
        float v = xv[(o * len + j) * inner + in];
        if (v > bv) {
          bv = v;
          best = j;
        }
      }
      values[o * inner + in] = bv;
      arg[o * inner + in] = (o * len + best) * inner + in;
    }
  auto out = finish(std::move(out_shape), std::move(values), "max_reduce");
  if (Tape::should_record({&x})) {
    Tape::active()->record(out, [x, arg = std::move(arg)](std::span<const float> g) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[arg[i]] += g[i];
    });
  }
  return out;
}

Tensor l2_norm(const Tensor& x, bool per_sample) {
  const std::size_t rows = per_sample ? x.dim(0) : 1;
  const std::size_t cols = x.numel() / rows;
  auto xv = x.data();
  std::vector<float> values(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = xv[r * cols + c];
      acc += v * v;
    }
    values[r] = static_cast<float>(std::sqrt(acc));
  }
  auto out = finish(Shape{rows}, std::move(values), "l2_norm");
  if (Tape::should_record({&x})) {
    Tape::active()->record(out, [x, out_values = out.detach(), rows, cols](std::span<const float> g) mutable {
      auto gx = x.grad_buffer();
      auto xv = x.data();
      auto nv = out_values.data();
      for (std::size_t r = 0; r < rows; ++r) {
        if (nv[r] == 0.0f) continue;  // subgradient 0 at the origin
        const float scale = g[r] / nv[r];
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += scale * xv[r * cols + c];
      }
    });
  }
  return out;
}

}  // namespace lagrobust::ops

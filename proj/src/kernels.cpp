#include "lagrobust/kernels.hpp"

#include <algorithm>
#include <vector>

namespace lagrobust::kernels {

namespace {

using Index = std::ptrdiff_t;

inline float load_a(std::span<const float> a, std::size_t i, std::size_t p, std::size_t m, std::size_t k,
                    Transpose ta) {
  return ta == Transpose::kNo ? a[i * k + p] : a[p * m + i];
}

inline float load_b(std::span<const float> b, std::size_t p, std::size_t j, std::size_t k, std::size_t n,
                    Transpose tb) {
  return tb == Transpose::kNo ? b[p * n + j] : b[j * k + p];
}

}  // namespace

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void gemm(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m, std::size_t k,
          std::size_t n, Transpose ta, Transpose tb, bool accumulate) {
  const Index rows = static_cast<Index>(m);
#pragma omp parallel for schedule(static)
  for (Index ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    float* crow = c.data() + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0f);
    if (tb == Transpose::kNo) {
      for (std::size_t p = 0; p < k; ++p) {
        const float av = load_a(a, i, p, m, k, ta);
        if (av == 0.0f) continue;
        const float* brow = b.data() + p * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const float* bcol = b.data() + j * k;
        float acc = 0.0f;
        for (std::size_t p = 0; p < k; ++p) acc += load_a(a, i, p, m, k, ta) * bcol[p];
        crow[j] += acc;
      }
    }
  }
}

namespace {

// col[(ic*k + kh)*k + kw][oh*OW + ow] for one sample; zero where padding.
void im2col(const Conv2dGeometry& g, const float* in, float* col) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width(), out_plane = oh_n * ow_n;
  for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
    const float* plane = in + ic * g.height * g.width;
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw) {
        float* row = col + ((ic * g.kernel + kh) * g.kernel + kw) * out_plane;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const Index ih = static_cast<Index>(oh * g.stride + kh) - static_cast<Index>(g.padding);
          float* dst = row + oh * ow_n;
          if (ih < 0 || ih >= static_cast<Index>(g.height)) {
            std::fill(dst, dst + ow_n, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const Index iw = static_cast<Index>(ow * g.stride + kw) - static_cast<Index>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<Index>(g.width)) ? 0.0f : src[iw];
          }
        }
      }
    }
  }
}

// in += col2im(col) for one sample.
void col2im_add(const Conv2dGeometry& g, const float* col, float* in) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width(), out_plane = oh_n * ow_n;
  for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
    float* plane = in + ic * g.height * g.width;
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw) {
        const float* row = col + ((ic * g.kernel + kh) * g.kernel + kw) * out_plane;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const Index ih = static_cast<Index>(oh * g.stride + kh) - static_cast<Index>(g.padding);
          if (ih < 0 || ih >= static_cast<Index>(g.height)) continue;
          float* dst = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const Index iw = static_cast<Index>(ow * g.stride + kw) - static_cast<Index>(g.padding);
            if (iw >= 0 && iw < static_cast<Index>(g.width)) dst[iw] += row[oh * ow_n + ow];
          }
        }
      }
    }
  }
}

std::size_t col_rows(const Conv2dGeometry& g) { return g.in_channels * g.kernel * g.kernel; }

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const float> input, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> out) {
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t in_sample = g.in_channels * g.height * g.width, rows = col_rows(g);
#pragma omp parallel
  {
    std::vector<float> col(rows * out_plane);
#pragma omp for schedule(static)
    for (Index nn = 0; nn < static_cast<Index>(g.batch); ++nn) {
      const auto n = static_cast<std::size_t>(nn);
      im2col(g, input.data() + n * in_sample, col.data());
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        float* o = out.data() + (n * g.out_channels + oc) * out_plane;
        std::fill(o, o + out_plane, bias.empty() ? 0.0f : bias[oc]);
        const float* w = weight.data() + oc * rows;
        for (std::size_t q = 0; q < rows; ++q) {
          const float wv = w[q];
          const float* c = col.data() + q * out_plane;
#pragma omp simd
          for (std::size_t p = 0; p < out_plane; ++p) o[p] += wv * c[p];
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const float> grad_out, std::span<const float> weight,
                           std::span<float> grad_input) {
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t in_sample = g.in_channels * g.height * g.width, rows = col_rows(g);
#pragma omp parallel
  {
    std::vector<float> col(rows * out_plane);
#pragma omp for schedule(static)
    for (Index nn = 0; nn < static_cast<Index>(g.batch); ++nn) {
      const auto n = static_cast<std::size_t>(nn);
      std::fill(col.begin(), col.end(), 0.0f);
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        const float* go = grad_out.data() + (n * g.out_channels + oc) * out_plane;
        const float* w = weight.data() + oc * rows;
        for (std::size_t q = 0; q < rows; ++q) {
          const float wv = w[q];
          float* c = col.data() + q * out_plane;
#pragma omp simd
          for (std::size_t p = 0; p < out_plane; ++p) c[p] += wv * go[p];
        }
      }
      col2im_add(g, col.data(), grad_input.data() + n * in_sample);
    }
  }
}

void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const float> input, std::span<const float> grad_out,
                            std::span<float> grad_weight, std::span<float> grad_bias) {
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t in_sample = g.in_channels * g.height * g.width, rows = col_rows(g);
  const std::size_t col_size = rows * out_plane;
  std::vector<float> cols(g.batch * col_size);
#pragma omp parallel for schedule(static)
  for (Index nn = 0; nn < static_cast<Index>(g.batch); ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    im2col(g, input.data() + n * in_sample, cols.data() + n * col_size);
  }
#pragma omp parallel for schedule(static)
  for (Index occ = 0; occ < static_cast<Index>(g.out_channels); ++occ) {
    const auto oc = static_cast<std::size_t>(occ);
    float* gw = grad_weight.data() + oc * rows;
    float bias_acc = 0.0f;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const float* go = grad_out.data() + (n * g.out_channels + oc) * out_plane;
      const float* col = cols.data() + n * col_size;
      for (std::size_t q = 0; q < rows; ++q) {
        const float* c = col + q * out_plane;
        float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
        for (std::size_t p = 0; p < out_plane; ++p) acc += go[p] * c[p];
        gw[q] += acc;
      }
      for (std::size_t p = 0; p < out_plane; ++p) bias_acc += go[p];
    }
    if (!grad_bias.empty()) grad_bias[oc] += bias_acc;
  }
}

void blur_planes(std::span<const float> in, std::span<float> out, std::size_t planes, std::size_t height,
                 std::size_t width, std::span<const float> taps) {
  const Index half = static_cast<Index>(taps.size() / 2);
  const Index h = static_cast<Index>(height), w = static_cast<Index>(width);
  const std::size_t plane = height * width;
#pragma omp parallel for schedule(static)
  for (Index pl = 0; pl < static_cast<Index>(planes); ++pl) {
    std::vector<float> tmp(plane);
    const float* src = in.data() + static_cast<std::size_t>(pl) * plane;
    float* dst = out.data() + static_cast<std::size_t>(pl) * plane;
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (Index t = -half; t <= half; ++t) acc += taps[t + half] * src[y * w + reflect_index(x + t, w)];
        tmp[y * w + x] = acc;
      }
    }
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (Index t = -half; t <= half; ++t) acc += taps[t + half] * tmp[reflect_index(y + t, h) * w + x];
        dst[y * w + x] = acc;
      }
    }
  }
}

namespace reference {

void gemm(std::span<const float> a, std::span<const float> b, std::span<float> c, std::size_t m, std::size_t k,
          std::size_t n, Transpose ta, Transpose tb, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += load_a(a, i, p, m, k, ta) * load_b(b, p, j, k, n, tb);
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void conv2d_forward(const Conv2dGeometry& g, std::span<const float> input, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> out) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          float acc = bias.empty() ? 0.0f : bias[oc];
          for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t kh = 0; kh < g.kernel; ++kh)
              for (std::size_t kw = 0; kw < g.kernel; ++kw) {
                const Index ih = static_cast<Index>(oh * g.stride + kh) - static_cast<Index>(g.padding);
                const Index iw = static_cast<Index>(ow * g.stride + kw) - static_cast<Index>(g.padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<Index>(g.height) || iw >= static_cast<Index>(g.width))
                  continue;
                acc += weight[((oc * g.in_channels + ic) * g.kernel + kh) * g.kernel + kw] *
                       input[((n * g.in_channels + ic) * g.height + static_cast<std::size_t>(ih)) * g.width +
                             static_cast<std::size_t>(iw)];
              }
          out[((n * g.out_channels + oc) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const float> grad_out, std::span<const float> weight,
                           std::span<float> grad_input) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const float go = grad_out[((n * g.out_channels + oc) * oh_n + oh) * ow_n + ow];
          for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t kh = 0; kh < g.kernel; ++kh)
              for (std::size_t kw = 0; kw < g.kernel; ++kw) {
                const Index ih = static_cast<Index>(oh * g.stride + kh) - static_cast<Index>(g.padding);
                const Index iw = static_cast<Index>(ow * g.stride + kw) - static_cast<Index>(g.padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<Index>(g.height) || iw >= static_cast<Index>(g.width))
                  continue;
                grad_input[((n * g.in_channels + ic) * g.height + static_cast<std::size_t>(ih)) * g.width +
                           static_cast<std::size_t>(iw)] +=
                    go * weight[((oc * g.in_channels + ic) * g.kernel + kh) * g.kernel + kw];
              }
        }
}

void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const float> input, std::span<const float> grad_out,
                            std::span<float> grad_weight, std::span<float> grad_bias) {
  const std::size_t oh_n = g.out_height(), ow_n = g.out_width();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const float go = grad_out[((n * g.out_channels + oc) * oh_n + oh) * ow_n + ow];
          if (!grad_bias.empty()) grad_bias[oc] += go;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t kh = 0; kh < g.kernel; ++kh)
              for (std::size_t kw = 0; kw < g.kernel; ++kw) {
                const Index ih = static_cast<Index>(oh * g.stride + kh) - static_cast<Index>(g.padding);
                const Index iw = static_cast<Index>(ow * g.stride + kw) - static_cast<Index>(g.padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<Index>(g.height) || iw >= static_cast<Index>(g.width))
                  continue;
                grad_weight[((oc * g.in_channels + ic) * g.kernel + kh) * g.kernel + kw] +=
                    go * input[((n * g.in_channels + ic) * g.height + static_cast<std::size_t>(ih)) * g.width +
                               static_cast<std::size_t>(iw)];
              }
        }
}

void blur_planes(std::span<const float> in, std::span<float> out, std::size_t planes, std::size_t height,
                 std::size_t width, std::span<const float> taps) {
  const Index half = static_cast<Index>(taps.size() / 2);
  const Index h = static_cast<Index>(height), w = static_cast<Index>(width);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const float* src = in.data() + pl * height * width;
    float* dst = out.data() + pl * height * width;
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double acc = 0.0;
        for (Index dy = -half; dy <= half; ++dy)
          for (Index dx = -half; dx <= half; ++dx)
            acc += static_cast<double>(taps[dy + half]) * taps[dx + half] *
                   src[reflect_index(y + dy, h) * w + reflect_index(x + dx, w)];
        dst[y * w + x] = static_cast<float>(acc);
      }
  }
}

}  // namespace reference

}  // namespace lagrobust::kernels

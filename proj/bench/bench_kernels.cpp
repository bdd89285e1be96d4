// Parallel kernels vs their serial references.
//
//   ./bench_kernels --benchmark_filter=Gemm
//   OMP_NUM_THREADS=4 ./bench_kernels

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lagrobust/attacks.hpp"
#include "lagrobust/kernels.hpp"

namespace k = lagrobust::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::gemm(a, b, c, n, n, n, k::Transpose::kNo, k::Transpose::kNo, false);
    else
      k::reference::gemm(a, b, c, n, n, n, k::Transpose::kNo, k::Transpose::kNo, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

k::Conv2dGeometry conv_geometry(std::size_t batch) {
  k::Conv2dGeometry g;
  g.batch = batch;
  g.in_channels = 8;
  g.height = g.width = 16;
  g.out_channels = 16;
  g.kernel = 3;
  g.stride = 1;
  g.padding = 1;
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)));
  auto in = random_vec(g.batch * g.in_channels * g.height * g.width, 3);
  auto w = random_vec(g.out_channels * g.in_channels * g.kernel * g.kernel, 4);
  auto bias = random_vec(g.out_channels, 5);
  std::vector<float> out(g.batch * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_forward(g, in, w, bias, out);
    else
      k::reference::conv2d_forward(g, in, w, bias, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)));
  auto in = random_vec(g.batch * g.in_channels * g.height * g.width, 3);
  auto w = random_vec(g.out_channels * g.in_channels * g.kernel * g.kernel, 4);
  auto gout = random_vec(g.batch * g.out_channels * g.out_height() * g.out_width(), 6);
  std::vector<float> gin(in.size()), gw(w.size()), gb(g.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_backward_input(g, gout, w, gin);
      k::conv2d_backward_weight(g, in, gout, gw, gb);
    } else {
      k::reference::conv2d_backward_input(g, gout, w, gin);
      k::reference::conv2d_backward_weight(g, in, gout, gw, gb);
    }
    benchmark::DoNotOptimize(gin.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_Blur(benchmark::State& state) {
  const auto planes = static_cast<std::size_t>(state.range(0));
  const std::size_t side = 32;
  auto in = random_vec(planes * side * side, 7);
  std::vector<float> out(in.size());
  const auto taps = lagrobust::gaussian_taps(5, 1.5f);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::blur_planes(in, out, planes, side, side, taps);
    else
      k::reference::blur_planes(in, out, planes, side, side, taps);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("Gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Name("Gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<true>)->Name("ConvForward/parallel")->Arg(32)->Arg(128);
BENCHMARK(BM_ConvForward<false>)->Name("ConvForward/reference")->Arg(32)->Arg(128);
BENCHMARK(BM_ConvBackward<true>)->Name("ConvBackward/parallel")->Arg(32);
BENCHMARK(BM_ConvBackward<false>)->Name("ConvBackward/reference")->Arg(32);
BENCHMARK(BM_Blur<true>)->Name("Blur/parallel")->Arg(64)->Arg(512);
BENCHMARK(BM_Blur<false>)->Name("Blur/reference")->Arg(64)->Arg(512);

BENCHMARK_MAIN();

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lagrobust/model.hpp"
#include "lagrobust/ops.hpp"
#include "lagrobust/tensor.hpp"

namespace lagrobust::testing {

inline constexpr float kKinkClearance = 5e-3f;

// The checked objective is the sum of `outputs()` over all elements. Every
// leaf with requires_grad is checked.
struct GradCase {
  std::string name;
  std::vector<Tensor> leaves;
  std::function<Tensor()> outputs;
};

struct GradCheckResult {
  double rel_error = 0.0;       // over the concatenated gradient of all leaves
  double worst_leaf_error = 0.0;
  std::size_t elements = 0;
};

// Norm-wise relative error ||a - n|| / max(||a||, ||n||) between the tape
// gradient a and central differences n with step h.
inline GradCheckResult gradcheck(const GradCase& c, float h = 1e-3f) {
  for (auto t : c.leaves) t.zero_grad();
  {
    Tape tape;
    tape.backward(ops::sum(c.outputs()));
  }
  GradCheckResult res;
  double diff_all = 0.0, na_all = 0.0, nn_all = 0.0;
  for (const auto& leaf : c.leaves) {
    if (!leaf.requires_grad()) continue;
    std::vector<float> analytic(leaf.numel(), 0.0f);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    auto w = Tensor(leaf).mutable_data();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float keep = w[i];
      w[i] = keep + h;
      const auto up = c.outputs();
      w[i] = keep - h;
      const auto down = c.outputs();
      w[i] = keep;
      // Differencing element-wise in double keeps the rounding of the sum out.
      double delta = 0.0;
      for (std::size_t k = 0; k < up.numel(); ++k)
        delta += static_cast<double>(up.data()[k]) - static_cast<double>(down.data()[k]);
      const double numeric = delta / (2.0 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      na += static_cast<double>(analytic[i]) * analytic[i];
      nn += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    res.worst_leaf_error = std::max(res.worst_leaf_error, std::sqrt(diff) / scale);
    diff_all += diff;
    na_all += na;
    nn_all += nn;
    res.elements += w.size();
  }
  res.rel_error = std::sqrt(diff_all) / std::max({std::sqrt(na_all), std::sqrt(nn_all), 1e-12});
  return res;
}

// Values with |v| in [lo, 1] and random sign, away from relu kinks.
inline Tensor random_leaf(Shape shape, std::mt19937_64& rng, float lo = 0.1f) {
  std::uniform_real_distribution<float> mag(lo, 1.0f);
  std::bernoulli_distribution neg(0.5);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = neg(rng) ? -mag(rng) : mag(rng);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

// Distinct values spaced at least `gap` apart in random order.
inline Tensor distinct_leaf(Shape shape, std::mt19937_64& rng, float gap = 0.05f) {
  std::vector<float> v(shape_numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = gap * static_cast<float>(i) - 0.5f;
  std::shuffle(v.begin(), v.end(), rng);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

// w * t with fixed random weights, so every output element matters.
inline Tensor weighted(const Tensor& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> w(t.numel());
  for (auto& x : w) x = n(rng);
  return ops::mul(t, Tensor::from_data(t.shape(), std::move(w)));
}

// Smallest |pre-activation| feeding any relu of `net` on input x.
inline float relu_clearance(const Network& net, const Tensor& x) {
  float clearance = std::numeric_limits<float>::infinity();
  Tensor h = x.detach();
  std::size_t pidx = 0;
  for (const auto& layer : net.layers()) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      (void)d;
      h = ops::add_bias(ops::matmul(h, net.params()[pidx].value.detach()), net.params()[pidx + 1].value.detach());
      pidx += 2;
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      h = ops::conv2d(h, net.params()[pidx].value.detach(), c->stride, c->padding,
                      net.params()[pidx + 1].value.detach());
      pidx += 2;
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      for (float v : h.data()) clearance = std::min(clearance, std::fabs(v));
      h = ops::relu(h);
    } else {
      h = ops::flatten(h);
    }
  }
  return clearance;
}

inline std::vector<GradCase> gradcheck_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCase> cases;
  const std::uint64_t ws = seed * 7919 + 1;
  auto unary = [&](std::string name, Tensor a, std::function<Tensor(const Tensor&)> f) {
    cases.push_back({std::move(name), {a}, [a, f, ws] { return weighted(f(a), ws); }});
  };
  auto binary = [&](std::string name, Tensor a, Tensor b, std::function<Tensor(const Tensor&, const Tensor&)> f) {
    cases.push_back({std::move(name), {a, b}, [a, b, f, ws] { return weighted(f(a, b), ws); }});
  };

  binary("add", random_leaf({3, 4}, rng), random_leaf({3, 4}, rng), ops::add);
  binary("sub", random_leaf({3, 4}, rng), random_leaf({3, 4}, rng), ops::sub);
  binary("mul", random_leaf({3, 4}, rng), random_leaf({3, 4}, rng), ops::mul);
  unary("scalar_mul", random_leaf({5}, rng), [](const Tensor& a) { return ops::scalar_mul(a, -1.7f); });
  binary("add_bias", random_leaf({3, 4}, rng), random_leaf({4}, rng), ops::add_bias);
  binary("matmul", random_leaf({3, 5}, rng), random_leaf({5, 2}, rng), ops::matmul);
  unary("relu", random_leaf({2, 6}, rng), ops::relu);
  unary("flatten", random_leaf({2, 2, 3}, rng), ops::flatten);
  unary("reshape", random_leaf({2, 6}, rng), [](const Tensor& a) { return ops::reshape(a, {3, 4}); });
  unary("sum", random_leaf({4, 3}, rng), ops::sum);
  unary("mean", random_leaf({4, 3}, rng), ops::mean);
  unary("max_axis0", distinct_leaf({4, 3}, rng), [](const Tensor& a) { return ops::max_reduce(a, 0); });
  unary("max_axis1", distinct_leaf({4, 3}, rng), [](const Tensor& a) { return ops::max_reduce(a, 1); });
  unary("l2_norm", random_leaf({3, 4}, rng), [](const Tensor& a) { return ops::l2_norm(a, false); });
  unary("l2_norm_rows", random_leaf({3, 4}, rng), [](const Tensor& a) { return ops::l2_norm(a, true); });
  binary("conv2d", random_leaf({2, 2, 5, 5}, rng), random_leaf({3, 2, 3, 3}, rng),
         [](const Tensor& x, const Tensor& k) { return ops::conv2d(x, k, 1, 0); });
  {
    auto x = random_leaf({2, 2, 6, 6}, rng), k = random_leaf({3, 2, 3, 3}, rng), b = random_leaf({3}, rng);
    cases.push_back({"conv2d_stride_pad_bias", {x, k, b},
                     [x, k, b, ws] { return weighted(ops::conv2d(x, k, 2, 1, b), ws); }});
  }
  {
    auto z = distinct_leaf({4, 3}, rng, 0.1f);
    std::vector<int> y{0, 2, 1, 2};
    cases.push_back({"margin_loss", {z}, [z, y] { return margin_loss(z, y); }});
  }
  {
    auto z = random_leaf({4, 3}, rng);
    std::vector<int> y{1, 0, 2, 2};
    cases.push_back({"cross_entropy", {z}, [z, y] { return cross_entropy(z, y); }});
  }
  {
    // Resample until finite differences cannot cross a relu kink.
    Network mlp = make_mlp(3, 5, 3, seed);
    auto x = random_leaf({4, 3}, rng);
    for (std::uint64_t k = 1; relu_clearance(mlp, x) < kKinkClearance; ++k) {
      mlp = make_mlp(3, 5, 3, seed * 1000 + k);
      x = random_leaf({4, 3}, rng);
    }
    std::vector<Tensor> leaves{x};
    for (auto& p : mlp.params()) {
      p.value.set_requires_grad(true);
      leaves.push_back(p.value);
    }
    std::vector<int> y{0, 1, 2, 1};
    cases.push_back({"mlp", leaves, [mlp, x, y] {
                       return cross_entropy(forward_logits(mlp, x, ParamGrad::kTrack), y);
                     }});
  }
  {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    auto image = [&] {
      std::vector<float> xv(2 * 36);
      for (auto& v : xv) v = u(rng);
      return Tensor::from_data({2, 1, 6, 6}, std::move(xv), true);
    };
    Network cnn = make_cnn(1, 6, 3, seed, 2, 3);
    auto x = image();
    for (std::uint64_t k = 1; relu_clearance(cnn, x) < kKinkClearance; ++k) {
      cnn = make_cnn(1, 6, 3, seed * 1000 + k, 2, 3);
      x = image();
    }
    std::vector<Tensor> leaves{x};
    for (auto& p : cnn.params()) {
      p.value.set_requires_grad(true);
      leaves.push_back(p.value);
    }
    std::vector<int> y{2, 0};
    cases.push_back({"cnn", leaves, [cnn, x, y] {
                       return cross_entropy(forward_logits(cnn, x, ParamGrad::kTrack), y);
                     }});
  }
  return cases;
}

}  // namespace lagrobust::testing

#include "lagrobust/attacks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "attack_internal.hpp"
#include "lagrobust/kernels.hpp"
#include "lagrobust/ops.hpp"
#include "lagrobust/rng.hpp"

namespace lagrobust {

namespace {

constexpr float kZeroGradient = 1e-12f;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_batch(const Tensor& x, std::span<const int> y) {
  if (!x.defined() || x.rank() < 2) throw ShapeError("attack input must be [B, ...]");
  if (x.dim(0) != y.size()) throw ShapeError("attack: label count does not match batch");
}

std::size_t per_sample(const Tensor& x) { return x.numel() / x.dim(0); }

// delta <- clamp(x + delta, 0, 1) - x
void clamp_to_domain(std::span<const float> x, std::span<float> delta) {
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = std::clamp(x[i] + delta[i], 0.0f, 1.0f) - x[i];
}

// g <- g / max|g| per sample; rows with max|g| below the guard become zero.
void max_normalize(std::span<float> g, std::size_t batch, std::size_t per) {
  for (std::size_t b = 0; b < batch; ++b) {
    auto row = g.subspan(b * per, per);
    float m = 0.0f;
    for (float v : row) m = std::max(m, std::abs(v));
    if (m < kZeroGradient) {
      std::fill(row.begin(), row.end(), 0.0f);
      continue;
    }
    for (auto& v : row) v /= m;
  }
}

void project_linf(std::span<float> row, float eps) {
  for (auto& v : row) v = std::clamp(v, -eps, eps);
}

void project_l2(std::span<float> row, float eps) {
  double sq = 0.0;
  for (float v : row) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (norm <= eps) return;
  const auto scale = static_cast<float>(eps / norm);
  for (auto& v : row) v *= scale;
}

// Shared loop of the Lagrangian-type attacks. `keys` gives each row its own
// random stream so results do not depend on batch composition.
Perturbation lagrangian_loop(const Network& net, const Tensor& x, std::span<const int> y,
                             std::span<const ScheduleStep> schedule, float sigma2, bool clamp_input,
                             std::uint64_t seed, std::span<const std::uint64_t> keys, std::string name) {
  const std::size_t batch = x.dim(0), per = per_sample(x);
  std::vector<float> delta(x.numel(), 0.0f);
  if (sigma2 > 0.0f) {
    std::normal_distribution<float> init(0.0f, std::sqrt(sigma2));
    for (std::size_t b = 0; b < batch; ++b) {
      auto rng = stream_rng(seed, keys[b]);
      for (std::size_t j = 0; j < per; ++j) delta[b * per + j] = init(rng);
    }
  }
  for (const auto& step : schedule) {
    auto mg = detail::margin_gradient(net, x, delta, y, step.lambda);
    max_normalize(mg.grad, batch, per);
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += step.alpha * mg.grad[i];
  }
  if (clamp_input) clamp_to_domain(x.data(), delta);
  Perturbation p;
  p.delta = Tensor::from_data(x.shape(), std::move(delta));
  p.attack_name = std::move(name);
  finalize_perturbation(p, &net, x, y);
  return p;
}

std::vector<std::uint64_t> row_keys(std::size_t batch) {
  std::vector<std::uint64_t> keys(batch);
  std::iota(keys.begin(), keys.end(), 0);
  return keys;
}

// Spatial layout used by the l0 projection: each pixel owns `channels` values
// spaced `plane` apart.
struct PixelLayout {
  std::size_t channels;
  std::size_t plane;
};

PixelLayout pixel_layout(const Tensor& x) {
  if (x.rank() == 4) return {x.dim(1), x.dim(2) * x.dim(3)};
  if (x.rank() == 2) return {1, x.dim(1)};
  throw ShapeError("pgd_l0: input must be [B,C,H,W] or [B,F], got " + shape_str(x.shape()));
}

// Keep the k pixels with the largest channel l2 norm, zero the rest.
void project_l0(std::span<float> row, const PixelLayout& layout, std::size_t k) {
  if (k >= layout.plane) return;
  std::vector<float> mag(layout.plane, 0.0f);
  for (std::size_t c = 0; c < layout.channels; ++c)
    for (std::size_t p = 0; p < layout.plane; ++p) {
      const float v = row[c * layout.plane + p];
      mag[p] += v * v;
    }
  std::vector<std::size_t> order(layout.plane);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
  for (std::size_t i = k; i < order.size(); ++i)
    for (std::size_t c = 0; c < layout.channels; ++c) row[c * layout.plane + order[i]] = 0.0f;
}

std::uint64_t f32_bits(float v) { return std::bit_cast<std::uint32_t>(v); }

}  // namespace

namespace detail {

MarginGradient margin_gradient(const Network& net, const Tensor& x, std::span<const float> delta,
                               std::span<const int> y, float penalty) {
  Tape tape;
  auto d = Tensor::from_data(x.shape(), std::vector<float>(delta.begin(), delta.end()), true);
  auto logits = forward_logits(net, ops::add(x.detach(), d), ParamGrad::kFrozen);
  auto margins = margin_loss(logits, y);
  auto objective = ops::sum(margins);
  if (penalty != 0.0f) objective = ops::sub(objective, ops::scalar_mul(ops::sum(ops::l2_norm(d, true)), penalty));
  tape.backward(objective);
  MarginGradient out;
  auto m = margins.data();
  out.margins.assign(m.begin(), m.end());
  if (d.has_grad()) {
    auto g = d.grad();
    out.grad.assign(g.begin(), g.end());
  } else {
    out.grad.assign(delta.size(), 0.0f);
  }
  return out;
}

Perturbation pgd_core(const Network& net, const Tensor& x, std::span<const int> y, const PgdConfig& cfg,
                      std::span<const float> epsilons, std::uint64_t seed, std::vector<float>* best_margin) {
  cfg.validate();
  check_batch(x, y);
  const std::size_t batch = x.dim(0), per = per_sample(x);
  if (epsilons.size() != batch) throw ShapeError("pgd: one budget per sample required");
  for (float e : epsilons) require(e >= 0.0f && std::isfinite(e), "pgd: budgets must be >= 0");

  auto project = [&](std::span<float> all) {
    for (std::size_t b = 0; b < batch; ++b) {
      auto row = all.subspan(b * per, per);
      if (cfg.norm == Norm::kLinf) {
        project_linf(row, epsilons[b]);
      } else {
        project_l2(row, epsilons[b]);
      }
    }
  };

  std::vector<float> delta(x.numel(), 0.0f);
  if (cfg.random_start) {
    for (std::size_t b = 0; b < batch; ++b) {
      auto rng = stream_rng(seed, b);
      auto row = std::span<float>(delta).subspan(b * per, per);
      if (cfg.norm == Norm::kLinf) {
        std::uniform_real_distribution<float> u(-1.0f, 1.0f);
        for (auto& v : row) v = epsilons[b] * u(rng);
      } else {
        // uniform in the ball: gaussian direction, radius eps * u^(1/d)
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double sq = 0.0;
        std::vector<double> dir(per);
        for (auto& v : dir) {
          v = gauss(rng);
          sq += v * v;
        }
        const double radius = epsilons[b] * std::pow(u(rng), 1.0 / static_cast<double>(per));
        const double scale = sq > 0.0 ? radius / std::sqrt(sq) : 0.0;
        for (std::size_t j = 0; j < per; ++j) row[j] = static_cast<float>(dir[j] * scale);
      }
    }
    project(delta);
    clamp_to_domain(x.data(), delta);
  }

  if (best_margin) best_margin->assign(batch, -std::numeric_limits<float>::infinity());
  auto track = [&](const std::vector<float>& margins) {
    if (!best_margin) return;
    for (std::size_t b = 0; b < batch; ++b) (*best_margin)[b] = std::max((*best_margin)[b], margins[b]);
  };

  for (int step = 0; step < cfg.steps; ++step) {
    auto mg = margin_gradient(net, x, delta, y, 0.0f);
    track(mg.margins);
    if (cfg.use_sign) {
      for (auto& v : mg.grad) v = static_cast<float>((v > 0.0f) - (v < 0.0f));
    } else {
      max_normalize(mg.grad, batch, per);
    }
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += cfg.step_size * mg.grad[i];
    project(delta);
    clamp_to_domain(x.data(), delta);
  }
  if (best_margin) track(margin_gradient(net, x, delta, y, 0.0f).margins);

  Perturbation p;
  p.delta = Tensor::from_data(x.shape(), std::move(delta));
  p.attack_name = std::string(cfg.use_sign ? "pgd_" : "mpgd_") + (cfg.norm == Norm::kLinf ? "linf" : "l2");
  finalize_perturbation(p, &net, x, y);
  return p;
}

}  // namespace detail

void LagrangianConfig::validate() const {
  require(steps >= 1, "lagrangian: steps must be >= 1");
  require(alpha >= 0.0f && std::isfinite(alpha), "lagrangian: alpha must be >= 0");
  require(lambda >= 0.0f && std::isfinite(lambda), "lagrangian: lambda must be >= 0");
  require(decay > 0.0f && decay < 1.0f, "lagrangian: decay must be in (0,1)");
  require(sigma2 >= 0.0f && std::isfinite(sigma2), "lagrangian: sigma2 must be >= 0");
}

void PgdConfig::validate() const {
  require(epsilon >= 0.0f && std::isfinite(epsilon), "pgd: epsilon must be >= 0");
  require(steps >= 1, "pgd: steps must be >= 1");
  require(step_size > 0.0f && std::isfinite(step_size), "pgd: step_size must be > 0");
}

void ThresholdConfig::validate() const {
  base.validate();
  require(budget_fractions.size() == prob_thresholds.size() + 1, "threshold: need one more fraction than thresholds");
  for (std::size_t i = 0; i < prob_thresholds.size(); ++i) {
    require(prob_thresholds[i] > 0.0f && prob_thresholds[i] < 1.0f, "threshold: thresholds must lie in (0,1)");
    if (i) require(prob_thresholds[i] > prob_thresholds[i - 1], "threshold: thresholds must increase strictly");
  }
  for (std::size_t i = 0; i < budget_fractions.size(); ++i) {
    require(budget_fractions[i] > 0.0f && budget_fractions[i] <= 1.0f, "threshold: fractions must lie in (0,1]");
    if (i) require(budget_fractions[i] >= budget_fractions[i - 1], "threshold: fractions must be nondecreasing");
  }
}

void CwMinimalConfig::validate() const {
  require(lambda_init > 0.0f, "cw_minimal: lambda_init must be > 0");
  require(lambda_decay > 0.0f && lambda_decay < 1.0f, "cw_minimal: lambda_decay must be in (0,1)");
  require(max_stages >= 1, "cw_minimal: max_stages must be >= 1");
  require(inner.steps >= 1 && inner.alpha >= 0.0f && inner.sigma2 >= 0.0f, "cw_minimal: invalid inner settings");
}

void PgdL0Config::validate() const {
  require(pixels >= 1, "pgd_l0: pixel budget must be >= 1");
  require(steps >= 1, "pgd_l0: steps must be >= 1");
  require(step_size > 0.0f, "pgd_l0: step_size must be > 0");
}

void GaussianNoiseConfig::validate() const {
  require(variance >= 0.0f && std::isfinite(variance), "gaussian_noise: variance must be >= 0");
  require(std::isfinite(mean), "gaussian_noise: mean must be finite");
}

void GaussianBlurConfig::validate() const {
  require(kernel_size % 2 == 1, "gaussian_blur: kernel size must be odd");
  require(sigma > 0.0f, "gaussian_blur: sigma must be > 0");
}

std::vector<float> per_sample_l2(const Tensor& t) {
  const std::size_t batch = t.dim(0), per = per_sample(t);
  auto v = t.data();
  std::vector<float> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double sq = 0.0;
    for (std::size_t j = 0; j < per; ++j) sq += static_cast<double>(v[b * per + j]) * v[b * per + j];
    out[b] = static_cast<float>(std::sqrt(sq));
  }
  return out;
}

void finalize_perturbation(Perturbation& p, const Network* net, const Tensor& x, std::span<const int> y) {
  p.l2_norms = per_sample_l2(p.delta);
  p.success.assign(x.dim(0), false);
  if (!net) return;
  auto pred = predict(*net, ops::add(x.detach(), p.delta.detach()));
  for (std::size_t b = 0; b < pred.size(); ++b) p.success[b] = pred[b] != y[b];
}

std::vector<ScheduleStep> lagrangian_schedule(const LagrangianConfig& cfg) {
  cfg.validate();
  std::vector<ScheduleStep> out;
  const double n = cfg.steps;
  for (int i = 0; i < cfg.steps; ++i) {
    out.push_back({static_cast<float>(cfg.lambda * std::pow(static_cast<double>(cfg.decay), 1.0 - i / n)),
                   static_cast<float>(cfg.alpha * std::pow(static_cast<double>(cfg.decay), i / n))});
  }
  return out;
}

Perturbation lagrangian_attack(const Network& net, const Tensor& x, std::span<const int> y,
                               const LagrangianConfig& cfg, std::uint64_t seed) {
  check_batch(x, y);
  auto schedule = lagrangian_schedule(cfg);
  auto keys = row_keys(x.dim(0));
  return lagrangian_loop(net, x, y, schedule, cfg.sigma2, cfg.clamp_input, seed, keys, "lagrangian");
}

Perturbation fixed_lambda_attack(const Network& net, const Tensor& x, std::span<const int> y, float lambda,
                                 const LagrangianConfig& inner, std::uint64_t seed) {
  check_batch(x, y);
  require(lambda >= 0.0f, "fixed_lambda_attack: lambda must be >= 0");
  std::vector<ScheduleStep> schedule(static_cast<std::size_t>(inner.steps), ScheduleStep{lambda, inner.alpha});
  auto keys = row_keys(x.dim(0));
  return lagrangian_loop(net, x, y, schedule, inner.sigma2, inner.clamp_input, seed, keys, "fixed_lambda");
}

Perturbation pgd_attack(const Network& net, const Tensor& x, std::span<const int> y, const PgdConfig& cfg,
                        std::uint64_t seed) {
  check_batch(x, y);
  std::vector<float> eps(x.dim(0), cfg.epsilon);
  return detail::pgd_core(net, x, y, cfg, eps, seed, nullptr);
}

Perturbation pgd_attack(const Network& net, const Tensor& x, std::span<const int> y, const PgdConfig& cfg,
                        std::span<const float> epsilons, std::uint64_t seed) {
  return detail::pgd_core(net, x, y, cfg, epsilons, seed, nullptr);
}

float threshold_budget_fraction(float p_correct, const ThresholdConfig& cfg) {
  std::size_t bucket = 0;
  while (bucket < cfg.prob_thresholds.size() && p_correct >= cfg.prob_thresholds[bucket]) ++bucket;
  return cfg.budget_fractions[bucket];
}

Perturbation threshold_pgd(const Network& net, const Tensor& x, std::span<const int> y, const ThresholdConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  check_batch(x, y);
  auto probs = correct_class_probability(net, x, y);
  std::vector<float> eps(probs.size());
  for (std::size_t b = 0; b < probs.size(); ++b) eps[b] = threshold_budget_fraction(probs[b], cfg) * cfg.base.epsilon;
  auto p = detail::pgd_core(net, x, y, cfg.base, eps, seed, nullptr);
  p.attack_name = cfg.base.norm == Norm::kLinf ? "threshold_linf" : "threshold_l2";
  return p;
}

float cw_stage_lambda(const CwMinimalConfig& cfg, int stage) {
  return static_cast<float>(cfg.lambda_init * std::pow(static_cast<double>(cfg.lambda_decay), stage));
}

Perturbation cw_minimal_attack(const Network& net, const Tensor& x, std::span<const int> y,
                               const CwMinimalConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_batch(x, y);
  const std::size_t batch = x.dim(0), per = per_sample(x);
  std::vector<float> delta(x.numel(), 0.0f);
  std::vector<bool> done(batch, false);
  std::vector<float> lambda_used(batch, 0.0f);
  std::vector<std::size_t> active(batch);
  std::iota(active.begin(), active.end(), 0);

  auto xv = x.data();
  for (int stage = 0; stage < cfg.max_stages && !active.empty(); ++stage) {
    const float lambda = cw_stage_lambda(cfg, stage);
    std::vector<float> sub_x(active.size() * per);
    std::vector<int> sub_y(active.size());
    std::vector<std::uint64_t> keys(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(active[i] * per), per,
                  sub_x.begin() + static_cast<std::ptrdiff_t>(i * per));
      sub_y[i] = y[active[i]];
      keys[i] = stream_seed(active[i], static_cast<std::uint64_t>(stage));
    }
    Shape sub_shape = x.shape();
    sub_shape[0] = active.size();
    auto sub = Tensor::from_data(std::move(sub_shape), std::move(sub_x));
    std::vector<ScheduleStep> schedule(static_cast<std::size_t>(cfg.inner.steps), ScheduleStep{lambda, cfg.inner.alpha});
    auto stage_result =
        lagrangian_loop(net, sub, sub_y, schedule, cfg.inner.sigma2, cfg.inner.clamp_input, seed, keys, "cw_minimal");
    auto dv = stage_result.delta.data();
    std::vector<std::size_t> still;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t b = active[i];
      std::copy_n(dv.begin() + static_cast<std::ptrdiff_t>(i * per), per,
                  delta.begin() + static_cast<std::ptrdiff_t>(b * per));
      lambda_used[b] = lambda;
      if (stage_result.success[i]) {
        done[b] = true;
      } else {
        still.push_back(b);
      }
    }
    active = std::move(still);
  }

  Perturbation p;
  p.delta = Tensor::from_data(x.shape(), std::move(delta));
  p.attack_name = "cw_minimal";
  p.lambda_used = std::move(lambda_used);
  finalize_perturbation(p, &net, x, y);
  return p;
}

Perturbation pgd_l0_attack(const Network& net, const Tensor& x, std::span<const int> y, const PgdL0Config& cfg,
                           std::uint64_t /*seed*/) {
  cfg.validate();
  check_batch(x, y);
  const auto layout = pixel_layout(x);
  if (cfg.pixels > layout.plane) {
    throw std::invalid_argument("pgd_l0: pixel budget " + std::to_string(cfg.pixels) + " exceeds pixel count " +
                                std::to_string(layout.plane));
  }
  const std::size_t batch = x.dim(0), per = per_sample(x);
  std::vector<float> delta(x.numel(), 0.0f);
  for (int step = 0; step < cfg.steps; ++step) {
    auto mg = detail::margin_gradient(net, x, delta, y, 0.0f);
    max_normalize(mg.grad, batch, per);
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += cfg.step_size * mg.grad[i];
    for (std::size_t b = 0; b < batch; ++b) project_l0(std::span<float>(delta).subspan(b * per, per), layout, cfg.pixels);
    clamp_to_domain(x.data(), delta);
  }
  Perturbation p;
  p.delta = Tensor::from_data(x.shape(), std::move(delta));
  p.attack_name = "pgd_l0";
  finalize_perturbation(p, &net, x, y);
  return p;
}

Perturbation gaussian_noise(const Tensor& x, float mean, float variance, std::uint64_t seed) {
  GaussianNoiseConfig{mean, variance}.validate();
  if (!x.defined() || x.rank() < 2) throw ShapeError("gaussian_noise: input must be [B, ...]");
  const std::size_t batch = x.dim(0), per = per_sample(x);
  std::vector<float> delta(x.numel(), mean);
  if (variance > 0.0f) {
    std::normal_distribution<float> dist(mean, std::sqrt(variance));
    for (std::size_t b = 0; b < batch; ++b) {
      auto rng = stream_rng(seed, b);
      for (std::size_t j = 0; j < per; ++j) delta[b * per + j] = dist(rng);
    }
  }
  clamp_to_domain(x.data(), delta);
  Perturbation p;
  p.delta = Tensor::from_data(x.shape(), std::move(delta));
  p.attack_name = "gaussian_noise";
  p.l2_norms = per_sample_l2(p.delta);
  p.success.assign(batch, false);
  return p;
}

std::vector<float> gaussian_taps(std::size_t kernel_size, float sigma) {
  GaussianBlurConfig{kernel_size, sigma}.validate();
  const auto half = static_cast<double>(kernel_size / 2);
  std::vector<double> w(kernel_size);
  double total = 0.0;
  for (std::size_t i = 0; i < kernel_size; ++i) {
    const double d = static_cast<double>(i) - half;
    w[i] = std::exp(-d * d / (2.0 * static_cast<double>(sigma) * sigma));
    total += w[i];
  }
  std::vector<float> taps(kernel_size);
  for (std::size_t i = 0; i < kernel_size; ++i) taps[i] = static_cast<float>(w[i] / total);
  return taps;
}

Perturbation gaussian_blur(const Tensor& x, std::size_t kernel_size, float sigma) {
  auto taps = gaussian_taps(kernel_size, sigma);
  if (!x.defined() || x.rank() != 4) throw ShapeError("gaussian_blur: input must be [B,C,H,W]");
  const std::size_t planes = x.dim(0) * x.dim(1);
  std::vector<float> blurred(x.numel());
  kernels::blur_planes(x.data(), blurred, planes, x.dim(2), x.dim(3), taps);
  auto xv = x.data();
  std::vector<float> delta(x.numel());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = blurred[i] - xv[i];
  clamp_to_domain(xv, delta);
  Perturbation p;
  p.delta = Tensor::from_data(x.shape(), std::move(delta));
  p.attack_name = "gaussian_blur";
  p.l2_norms = per_sample_l2(p.delta);
  p.success.assign(x.dim(0), false);
  return p;
}

std::string attack_name(const AttackConfig& cfg) {
  return std::visit(
      Overloaded{
          [](const CleanConfig&) -> std::string { return "clean"; },
          [](const LagrangianConfig&) -> std::string { return "lagrangian"; },
          [](const PgdConfig& c) -> std::string {
            return std::string(c.use_sign ? "pgd_" : "mpgd_") + (c.norm == Norm::kLinf ? "linf" : "l2");
          },
          [](const ThresholdConfig& c) -> std::string {
            return c.base.norm == Norm::kLinf ? "threshold_linf" : "threshold_l2";
          },
          [](const CwMinimalConfig&) -> std::string { return "cw_minimal"; },
          [](const PgdL0Config&) -> std::string { return "pgd_l0"; },
          [](const GaussianNoiseConfig&) -> std::string { return "gaussian_noise"; },
          [](const GaussianBlurConfig&) -> std::string { return "gaussian_blur"; },
      },
      cfg);
}

void validate_attack(const AttackConfig& cfg) {
  std::visit(Overloaded{[](const CleanConfig&) {}, [](const auto& c) { c.validate(); }}, cfg);
}

Perturbation run_attack(const Network& net, const Tensor& x, std::span<const int> y, const AttackConfig& cfg,
                        std::uint64_t seed) {
  validate_attack(cfg);
  check_batch(x, y);
  Perturbation p = std::visit(
      Overloaded{
          [&](const CleanConfig&) {
            Perturbation c;
            c.delta = Tensor::zeros(x.shape());
            c.attack_name = "clean";
            return c;
          },
          [&](const LagrangianConfig& c) { return lagrangian_attack(net, x, y, c, seed); },
          [&](const PgdConfig& c) { return pgd_attack(net, x, y, c, seed); },
          [&](const ThresholdConfig& c) { return threshold_pgd(net, x, y, c, seed); },
          [&](const CwMinimalConfig& c) { return cw_minimal_attack(net, x, y, c, seed); },
          [&](const PgdL0Config& c) { return pgd_l0_attack(net, x, y, c, seed); },
          [&](const GaussianNoiseConfig& c) { return gaussian_noise(x, c.mean, c.variance, seed); },
          [&](const GaussianBlurConfig& c) { return gaussian_blur(x, c.kernel_size, c.sigma); },
      },
      cfg);
  // Model-free attacks learn their outcome here.
  if (std::holds_alternative<CleanConfig>(cfg) || std::holds_alternative<GaussianNoiseConfig>(cfg) ||
      std::holds_alternative<GaussianBlurConfig>(cfg)) {
    finalize_perturbation(p, &net, x, y);
  }
  return p;
}

void write_f32_le(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = f32_bits(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<float> read_f32_le(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw std::runtime_error(path.string() + ": size is not a multiple of 4 bytes");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

void write_perturbation(const Perturbation& p, const std::filesystem::path& bin_path, const nlohmann::json& config,
                        std::uint64_t seed) {
  write_f32_le(bin_path, p.delta.data());
  nlohmann::json side;
  side["shape"] = p.delta.shape();
  side["attack"] = p.attack_name;
  side["config"] = config;
  side["seed"] = seed;
  std::vector<bool> success(p.success.begin(), p.success.end());
  side["success"] = success;
  side["l2_norms"] = p.l2_norms;
  auto json_path = bin_path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + json_path.string());
  out << side.dump(2) << '\n';
}

PerturbationFile read_perturbation(const std::filesystem::path& bin_path) {
  auto json_path = bin_path;
  json_path.replace_extension(".json");
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("missing perturbation sidecar " + json_path.string());
  PerturbationFile f;
  f.sidecar = nlohmann::json::parse(in);
  auto shape = f.sidecar.at("shape").get<Shape>();
  auto values = read_f32_le(bin_path);
  if (shape_numel(shape) != values.size()) {
    throw std::runtime_error(bin_path.string() + ": payload does not match sidecar shape " + shape_str(shape));
  }
  f.perturbation.delta = Tensor::from_data(std::move(shape), std::move(values));
  f.perturbation.attack_name = f.sidecar.value("attack", "");
  f.perturbation.l2_norms = per_sample_l2(f.perturbation.delta);
  if (f.sidecar.contains("success")) {
    auto s = f.sidecar.at("success").get<std::vector<bool>>();
    f.perturbation.success.assign(s.begin(), s.end());
  }
  return f;
}

}  // namespace lagrobust

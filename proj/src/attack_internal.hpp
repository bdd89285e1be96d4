#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lagrobust/attacks.hpp"

namespace lagrobust::detail {

struct MarginGradient {
  std::vector<float> margins;  // per sample, at x + delta
  std::vector<float> grad;     // d/d delta of sum(margins) - penalty * sum ||delta_i||_2
};

MarginGradient margin_gradient(const Network& net, const Tensor& x, std::span<const float> delta,
                               std::span<const int> y, float penalty);

// PGD over explicit per-sample budgets. When `best_margin` is non-null it
// receives the largest margin seen at any feasible iterate of each sample.
Perturbation pgd_core(const Network& net, const Tensor& x, std::span<const int> y, const PgdConfig& cfg,
                      std::span<const float> epsilons, std::uint64_t seed, std::vector<float>* best_margin);

}  // namespace lagrobust::detail

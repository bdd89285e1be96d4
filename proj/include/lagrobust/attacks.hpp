#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lagrobust/model.hpp"
#include "lagrobust/tensor.hpp"

namespace lagrobust {

/// Fixed-schedule Lagrangian attack settings. At step i of N the multiplier
/// is lambda * c^(1 - i/N) and the step size alpha * c^(i/N).
struct LagrangianConfig {
  int steps = 5;
  float alpha = 0.5f;
  float lambda = 1.0f;
  float sigma2 = 0.01f;
  float decay = 0.1f;
  bool clamp_input = true;

  void validate() const;
};

enum class Norm { kLinf, kL2 };

struct PgdConfig {
  Norm norm = Norm::kLinf;
  float epsilon = 0.1f;
  int steps = 10;
  float step_size = 0.025f;
  // true: sign(g). false: g / max|g| per sample (MPGD).
  bool use_sign = true;
  bool random_start = false;

  void validate() const;
};

/// PGD whose budget per sample depends on the clean correct-class
/// probability: p in [t_{j-1}, t_j) gets budget_fractions[j] * epsilon.
struct ThresholdConfig {
  PgdConfig base;
  std::vector<float> prob_thresholds{0.1f, 0.25f, 0.5f};
  std::vector<float> budget_fractions{0.03f, 0.3f, 0.55f, 1.0f};

  void validate() const;
};

/// Per-sample search over a decreasing multiplier; stage s uses
/// lambda_init * lambda_decay^s with a constant-lambda, constant-alpha inner
/// loop driven by `inner` (its lambda and decay fields are ignored).
struct CwMinimalConfig {
  float lambda_init = 8.0f;
  float lambda_decay = 0.5f;
  int max_stages = 8;
  LagrangianConfig inner;

  void validate() const;
};

struct PgdL0Config {
  std::size_t pixels = 10;
  int steps = 20;
  float step_size = 0.25f;

  void validate() const;
};

struct GaussianNoiseConfig {
  float mean = 0.0f;
  float variance = 0.05f;

  void validate() const;
};

struct GaussianBlurConfig {
  std::size_t kernel_size = 5;
  float sigma = 1.5f;

  void validate() const;
};

struct CleanConfig {};

using AttackConfig = std::variant<CleanConfig, LagrangianConfig, PgdConfig, ThresholdConfig, CwMinimalConfig,
                                  PgdL0Config, GaussianNoiseConfig, GaussianBlurConfig>;

/// Additive perturbation for a batch plus per-sample outcome.
struct Perturbation {
  Tensor delta;
  std::string attack_name;
  std::vector<bool> success;  // argmax(f(x + delta)) != y
  std::vector<float> l2_norms;
  std::vector<float> lambda_used;  // cw_minimal only
};

struct ScheduleStep {
  float lambda;
  float alpha;
};

std::vector<ScheduleStep> lagrangian_schedule(const LagrangianConfig& cfg);

Perturbation lagrangian_attack(const Network& net, const Tensor& x, std::span<const int> y,
                               const LagrangianConfig& cfg, std::uint64_t seed);

// Lagrangian loop with a constant multiplier and step size (the inner solver
// of the minimal-perturbation search).
Perturbation fixed_lambda_attack(const Network& net, const Tensor& x, std::span<const int> y, float lambda,
                                 const LagrangianConfig& inner, std::uint64_t seed);

Perturbation pgd_attack(const Network& net, const Tensor& x, std::span<const int> y, const PgdConfig& cfg,
                        std::uint64_t seed);
// Same with a per-sample budget; cfg.epsilon is ignored.
Perturbation pgd_attack(const Network& net, const Tensor& x, std::span<const int> y, const PgdConfig& cfg,
                        std::span<const float> epsilons, std::uint64_t seed);

float threshold_budget_fraction(float p_correct, const ThresholdConfig& cfg);
Perturbation threshold_pgd(const Network& net, const Tensor& x, std::span<const int> y, const ThresholdConfig& cfg,
                           std::uint64_t seed);

float cw_stage_lambda(const CwMinimalConfig& cfg, int stage);
Perturbation cw_minimal_attack(const Network& net, const Tensor& x, std::span<const int> y,
                               const CwMinimalConfig& cfg, std::uint64_t seed);

Perturbation pgd_l0_attack(const Network& net, const Tensor& x, std::span<const int> y, const PgdL0Config& cfg,
                           std::uint64_t seed);

Perturbation gaussian_noise(const Tensor& x, float mean, float variance, std::uint64_t seed);
Perturbation gaussian_blur(const Tensor& x, std::size_t kernel_size, float sigma);
// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
std::vector<float> gaussian_taps(std::size_t kernel_size, float sigma);

std::string attack_name(const AttackConfig& cfg);
void validate_attack(const AttackConfig& cfg);
Perturbation run_attack(const Network& net, const Tensor& x, std::span<const int> y, const AttackConfig& cfg,
                        std::uint64_t seed);

// Fills success flags and norms from delta; used by every attack.
void finalize_perturbation(Perturbation& p, const Network* net, const Tensor& x, std::span<const int> y);

// Per-sample Euclidean norms of a [B, ...] buffer.
std::vector<float> per_sample_l2(const Tensor& t);

// Raw little-endian float32 payload at `bin_path` plus a JSON sidecar next to
// it (same stem, .json) with shape, attack, config, seed, success and norms.
void write_perturbation(const Perturbation& p, const std::filesystem::path& bin_path, const nlohmann::json& config,
                        std::uint64_t seed);
struct PerturbationFile {
  Perturbation perturbation;
  nlohmann::json sidecar;
};
PerturbationFile read_perturbation(const std::filesystem::path& bin_path);

// Little-endian float32 helpers shared by the file formats.
void write_f32_le(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_le(const std::filesystem::path& path);

}  // namespace lagrobust

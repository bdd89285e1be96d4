#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lagrobust/attacks.hpp"
#include "lagrobust/data.hpp"
#include "lagrobust/model.hpp"

namespace lagrobust {

// F2B is undefined for the given mask / perturbation.
class DegenerateRatioError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct RobustResult {
  double accuracy = 0.0;  // percent
  double mean_l2 = 0.0;   // mean ||delta||_2 over samples
};

// Percentage of samples whose argmax on x + delta equals y.
RobustResult robust_accuracy(const Network& net, const Dataset& data, const AttackConfig& attack, std::uint64_t seed,
                             std::size_t batch_size = 128);

struct SuiteEntry {
  std::string name;
  AttackConfig attack;
  bool unseen = false;
};

struct AttackResult {
  std::string name;
  bool unseen = false;
  double robust_accuracy = 0.0;
  double mean_l2 = 0.0;
};

struct EvalReport {
  std::string model_id;
  double clean_accuracy = 0.0;
  std::vector<AttackResult> attacks;

  // Recomputed from `attacks` on every call. NaN when no attack qualifies.
  double unseen_mean() const;
  double union_mean() const;

  nlohmann::json to_json() const;
  // Columns: attack,unseen,robust_accuracy,mean_l2. The first row is the clean
  // accuracy; the last two rows are unseen_mean and union_mean.
  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

EvalReport evaluate_suite(const Network& net, const Dataset& data, std::span<const SuiteEntry> suite,
                          const std::string& model_id, std::uint64_t seed);

struct EffectiveLambdaResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<float> grid;
  std::size_t samples_used = 0;
  std::size_t samples_excluded = 0;
  // Per-sample adversarial margin at each grid point, [samples_used][grid].
  std::vector<std::vector<float>> losses;
};

// Five points spanning [0.5 eps0, 1.5 eps0].
std::vector<float> default_lambda_grid(float eps0, int points = 5);

/// Derivative of the adversarial margin with respect to the l2 budget.
/// For every sample and grid radius the margin is maximized with PGD-l2
/// (cfg.norm is forced to l2); central differences over interior grid points
/// give the per-sample estimates, pooled into mean and population std.
EffectiveLambdaResult effective_lambda(const Network& net, const Dataset& data, std::span<const float> eps_grid,
                                       PgdConfig cfg, std::uint64_t seed);

/// Per-pixel foreground probabilities, row-major [height, width].
struct ForegroundMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> p;

  void validate() const;
};

// delta is one sample laid out [C, H, W] (or [H*W] for C = 1); every channel
// element is weighted by its pixel's probability.
double f2b(std::span<const float> delta, const ForegroundMask& mask);

// Mask stack [n, H, W] from a raw float32 file with a JSON shape sidecar, or
// a single 8-bit PGM (p = value / 255) returned as [1, H, W].
Tensor load_masks(const std::filesystem::path& path);
ForegroundMask mask_at(const Tensor& masks, std::size_t index);

struct ConfidenceNormRow {
  std::size_t sample_id = 0;
  float p_correct = 0.0f;
  float l2_norm = 0.0f;
};

struct ConfidenceNormTable {
  std::vector<ConfidenceNormRow> rows;
  double spearman = 0.0;
};

ConfidenceNormTable confidence_norm_table(const Network& net, const Dataset& data, const AttackConfig& attack,
                                          std::uint64_t seed, std::size_t batch_size = 128);
// Columns: sample_id,p_correct,l2_norm
void write_confidence_norm_csv(const ConfidenceNormTable& table, const std::filesystem::path& path);

// Rank correlation with average ranks for ties; 0 when either column is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace lagrobust

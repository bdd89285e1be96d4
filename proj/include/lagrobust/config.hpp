#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lagrobust/attacks.hpp"
#include "lagrobust/data.hpp"
#include "lagrobust/evaluation.hpp"
#include "lagrobust/model.hpp"
#include "lagrobust/training.hpp"

namespace lagrobust {

// Invalid run configuration. The message names the source, line and key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Where samples come from. `kind` is one of synthetic_images, two_moons,
/// gaussian_blobs, cifar10, csv.
struct DatasetSpec {
  std::string kind = "synthetic_images";
  std::size_t n = 1000;
  std::size_t classes = 4;
  std::size_t side = 10;
  std::size_t dim = 2;
  std::size_t channels = 1;
  float noise_std = 0.05f;
  std::uint64_t seed = 0;
  std::filesystem::path path;
  std::string split = "train";
  std::optional<std::size_t> limit;  // keep the first `limit` samples
};

Dataset load_dataset(const DatasetSpec& spec);

// kind: cnn | mlp, or an explicit architecture descriptor.
struct ModelSpec {
  std::string kind = "cnn";
  std::size_t hidden = 32;
  std::size_t width1 = 8;
  std::size_t width2 = 16;
  std::string arch;
};

Network build_model(const ModelSpec& spec, const Dataset& data, std::uint64_t seed);

struct TrainRun {
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::uint64_t seed = 0;
};

struct AttackRun {
  std::filesystem::path checkpoint;
  DatasetSpec dataset;
  AttackConfig attack;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

struct EvalRun {
  std::filesystem::path checkpoint;
  DatasetSpec dataset;
  std::vector<SuiteEntry> suite;
  std::string model_id;
  std::uint64_t seed = 0;
};

struct F2bRun {
  std::filesystem::path perturbation;
  std::filesystem::path masks;
  std::uint64_t seed = 0;
};

struct EffectiveLambdaRun {
  std::filesystem::path checkpoint;
  DatasetSpec dataset;
  std::vector<float> grid;
  PgdConfig pgd;
  std::uint64_t seed = 0;
};

struct ConfidenceNormRun {
  std::filesystem::path checkpoint;
  DatasetSpec dataset;
  AttackConfig attack;
  std::uint64_t seed = 0;
};

/// Strict JSON parsing: unknown keys, wrong types and out-of-range values
/// raise ConfigError. Relative paths resolve against `base_dir`, and files
/// the run reads must exist.
TrainRun parse_train_run(const std::string& text, const std::string& source = "config",
                         const std::filesystem::path& base_dir = {});
AttackRun parse_attack_run(const std::string& text, const std::string& source = "config",
                           const std::filesystem::path& base_dir = {});
EvalRun parse_eval_run(const std::string& text, const std::string& source = "config",
                       const std::filesystem::path& base_dir = {});
F2bRun parse_f2b_run(const std::string& text, const std::string& source = "config",
                     const std::filesystem::path& base_dir = {});
EffectiveLambdaRun parse_effective_lambda_run(const std::string& text, const std::string& source = "config",
                                              const std::filesystem::path& base_dir = {});
ConfidenceNormRun parse_confidence_norm_run(const std::string& text, const std::string& source = "config",
                                            const std::filesystem::path& base_dir = {});

// Standalone blocks, e.g. {"type": "pgd", "norm": "l2", "epsilon": 0.5}.
AttackConfig parse_attack_config(const std::string& text);
TrainConfig parse_train_config(const std::string& text);

// Inverse of parse_attack_config; used in output sidecars.
nlohmann::json attack_to_json(const AttackConfig& cfg);

}  // namespace lagrobust

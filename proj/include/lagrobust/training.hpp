#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lagrobust/attacks.hpp"
#include "lagrobust/data.hpp"
#include "lagrobust/model.hpp"

namespace lagrobust {

enum class TrainLoss { kCrossEntropy, kMargin };

struct EarlyStopConfig {
  int patience = 3;          // epochs without held-out robust-accuracy improvement
  double holdout_fraction = 0.1;
};

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 64;
  float lr_initial = 0.1f;
  std::vector<int> lr_decay_epochs;
  float lr_decay_factor = 0.1f;
  int warmup_epochs = 3;
  float momentum = 0.9f;
  AttackConfig attack = CleanConfig{};
  TrainLoss loss = TrainLoss::kCrossEntropy;
  std::uint64_t seed = 0;
  std::optional<EarlyStopConfig> early_stop;

  void validate() const;
};

// Decay epochs at 70% and 90% of the run.
std::vector<int> proportional_decay_epochs(int epochs);

// lr_initial * factor^(number of decay epochs <= epoch)
float lr_at(int epoch, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  float lr = 0.0f;
  double train_loss = 0.0;
  double clean_accuracy = 0.0;  // percent, training split after the epoch
  double mean_delta_l2 = 0.0;   // mean ||delta||_2 of the epoch's training perturbations
  double wall_seconds = 0.0;
  std::optional<double> holdout_robust_accuracy;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  bool early_stopped = false;
  int best_epoch = -1;
};

// Raised when a batch loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Network network;
  TrainLog log;
};

// Called after each epoch; used to write periodic checkpoints.
using EpochCallback = std::function<void(const Network&, const EpochRecord&)>;

/// Adversarial training: after the warm-up epochs, each batch is replaced by
/// x + delta with delta regenerated against the current parameters, followed by
/// one SGD-with-momentum step on the configured loss.
TrainResult adversarial_train(Network net, const Dataset& data, const TrainConfig& cfg,
                              const EpochCallback& on_epoch = {});

// CSV header: epoch,lr,train_loss,clean_accuracy,mean_delta_l2,wall_seconds,holdout_robust_accuracy
void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path);

// Plain SGD-with-momentum state over a network's parameters.
class SgdMomentum {
 public:
  SgdMomentum(const Network& net, float momentum);
  void step(Network& net, float lr);

 private:
  float momentum_;
  std::vector<std::vector<float>> velocity_;
};

}  // namespace lagrobust

#include "lagrobust/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "lagrobust/ops.hpp"
#include "lagrobust/rng.hpp"

namespace lagrobust {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double accuracy_percent(const Network& net, const Dataset& data, std::size_t batch_size) {
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto pred = predict(net, data.gather_inputs(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == data.labels[idx[i]];
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

double robust_accuracy_percent(const Network& net, const Dataset& data, const AttackConfig& attack,
                               std::size_t batch_size, std::uint64_t seed) {
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto x = data.gather_inputs(idx);
    auto y = data.gather_labels(idx);
    auto p = run_attack(net, x, y, attack, stream_seed(seed, start));
    for (bool s : p.success) correct += !s;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 1, "train: epochs must be >= 1");
  require(warmup_epochs >= 0 && warmup_epochs <= epochs, "train: need 0 <= warmup_epochs <= epochs");
  require(batch_size >= 1, "train: batch_size must be >= 1");
  require(lr_initial > 0.0f && std::isfinite(lr_initial), "train: lr_initial must be > 0");
  require(lr_decay_factor > 0.0f && lr_decay_factor <= 1.0f, "train: lr_decay_factor must be in (0,1]");
  require(momentum >= 0.0f && momentum < 1.0f, "train: momentum must be in [0,1)");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    require(lr_decay_epochs[i] >= 0 && lr_decay_epochs[i] < epochs, "train: decay epochs must lie in [0, epochs)");
    if (i) require(lr_decay_epochs[i] > lr_decay_epochs[i - 1], "train: decay epochs must increase strictly");
  }
  if (early_stop) {
    require(early_stop->patience >= 1, "train: early-stop patience must be >= 1");
    require(early_stop->holdout_fraction > 0.0 && early_stop->holdout_fraction < 1.0,
            "train: early-stop holdout fraction must be in (0,1)");
  }
  validate_attack(attack);
}

std::vector<int> proportional_decay_epochs(int epochs) {
  std::vector<int> out;
  for (double f : {0.7, 0.9}) {
    const int e = static_cast<int>(std::floor(f * epochs));
    if (e > 0 && e < epochs && (out.empty() || e > out.back())) out.push_back(e);
  }
  return out;
}

float lr_at(int epoch, const TrainConfig& cfg) {
  int decays = 0;
  for (int e : cfg.lr_decay_epochs)
    if (e <= epoch) ++decays;
  return static_cast<float>(cfg.lr_initial * std::pow(static_cast<double>(cfg.lr_decay_factor), decays));
}

SgdMomentum::SgdMomentum(const Network& net, float momentum) : momentum_(momentum) {
  for (const auto& p : net.params()) velocity_.emplace_back(p.value.numel(), 0.0f);
}

void SgdMomentum::step(Network& net, float lr) {
  auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      w[j] -= lr * v[j];
    }
  }
}

TrainResult adversarial_train(Network net, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: dataset is empty");
  data.validate();

  Dataset train = data;
  Dataset holdout;
  if (cfg.early_stop) {
    auto [tr, ho] = split_dataset(data, cfg.early_stop->holdout_fraction, stream_seed(cfg.seed, 0xe5));
    train = std::move(tr);
    holdout = std::move(ho);
  }
  const bool adversarial_cfg = !std::holds_alternative<CleanConfig>(cfg.attack);

  SgdMomentum opt(net, cfg.momentum);
  TrainLog log;
  std::optional<Network> best;
  double best_holdout = -1.0;
  int since_best = 0;

  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const float lr = lr_at(epoch, cfg);
    const bool adversarial = adversarial_cfg && epoch >= cfg.warmup_epochs;
    std::iota(order.begin(), order.end(), 0);
    auto rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(epoch), 0x5f);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0, norm_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0, batch_no = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Tensor xb = train.gather_inputs(idx);
      auto yb = train.gather_labels(idx);
      if (adversarial) {
        auto p = run_attack(net, xb, yb, cfg.attack, stream_seed(cfg.seed, static_cast<std::uint64_t>(epoch), batch_no));
        for (float n : p.l2_norms) norm_sum += n;
        xb = ops::add(xb, p.delta);
      }
      // Parameter gradients from any earlier pass must not leak into this step.
      net.zero_grad();
      float loss_value = 0.0f;
      try {
        Tape tape;
        auto logits = forward_logits(net, xb, ParamGrad::kTrack);
        auto per_sample = cfg.loss == TrainLoss::kCrossEntropy ? cross_entropy(logits, yb) : margin_loss(logits, yb);
        auto loss = ops::mean(per_sample);
        loss_value = loss.item();
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_no) + ": " + e.what());
      }
      if (!std::isfinite(loss_value)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_no) + ": non-finite loss");
      }
      opt.step(net, lr);
      loss_sum += static_cast<double>(loss_value) * static_cast<double>(idx.size());
      seen += idx.size();
    }
    net.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.clean_accuracy = accuracy_percent(net, train, 256);
    rec.mean_delta_l2 = adversarial ? norm_sum / static_cast<double>(seen) : 0.0;

    bool stop = false;
    if (cfg.early_stop && epoch >= cfg.warmup_epochs) {
      const double acc = robust_accuracy_percent(net, holdout, cfg.attack, 256, stream_seed(cfg.seed, 0x40, epoch));
      rec.holdout_robust_accuracy = acc;
      if (acc > best_holdout) {
        best_holdout = acc;
        since_best = 0;
        best = net.clone();
        log.best_epoch = epoch;
      } else if (++since_best >= cfg.early_stop->patience) {
        stop = true;
      }
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(net, rec);
    if (stop) {
      log.early_stopped = true;
      break;
    }
  }
  if (best) return {std::move(*best), std::move(log)};
  log.best_epoch = static_cast<int>(log.epochs.size()) - 1;
  return {std::move(net), std::move(log)};
}

void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,lr,train_loss,clean_accuracy,mean_delta_l2,wall_seconds,holdout_robust_accuracy\n";
  out << std::setprecision(8);
  for (const auto& r : log.epochs) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.clean_accuracy << ',' << r.mean_delta_l2 << ','
        << r.wall_seconds << ',';
    if (r.holdout_robust_accuracy) out << *r.holdout_robust_accuracy;
    out << '\n';
  }
}

}  // namespace lagrobust

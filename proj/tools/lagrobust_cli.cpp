// lagrobust_cli: train / attack / eval / f2b / effective-lambda / confidence-norm
//
// Every subcommand reads one JSON config (--config), writes into --out and
// archives the effective config there as config.json.
// Exit codes: 0 success, 2 configuration error, 3 runtime or numeric error.

#include <omp.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "lagrobust/attacks.hpp"
#include "lagrobust/config.hpp"
#include "lagrobust/evaluation.hpp"
#include "lagrobust/model.hpp"
#include "lagrobust/rng.hpp"
#include "lagrobust/training.hpp"

namespace fs = std::filesystem;
using namespace lagrobust;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

struct LoadedConfig {
  std::string text;
  std::string source;
  fs::path base_dir;
};

LoadedConfig read_config(const Options& opt) {
  std::ifstream in(opt.config, std::ios::binary);
  if (!in) throw ConfigError(opt.config + ": cannot read config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return {ss.str(), opt.config, fs::absolute(opt.config).parent_path()};
}

// Config with the effective seed, as archived next to the outputs.
nlohmann::json effective_config(const LoadedConfig& cfg, std::uint64_t seed) {
  auto j = nlohmann::json::parse(cfg.text);
  j["seed"] = seed;
  return j;
}

fs::path prepare_out(const Options& opt, const nlohmann::json& archived) {
  fs::path out(opt.out);
  fs::create_directories(out);
  std::ofstream f(out / "config.json", std::ios::trunc);
  f << archived.dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write " + (out / "config.json").string());
  return out;
}

template <typename Run>
std::uint64_t resolve_seed(Run& run, const Options& opt) {
  if (opt.seed) run.seed = *opt.seed;
  return run.seed;
}

Network load_for(const fs::path& checkpoint, const Dataset& data) {
  auto net = load_checkpoint(checkpoint);
  if (net.input_shape() != data.sample_shape())
    throw ConfigError(checkpoint.string() + ": model input shape " + shape_str(net.input_shape()) +
                      " does not match dataset " + shape_str(data.sample_shape()));
  if (net.num_classes() != data.num_classes)
    throw ConfigError(checkpoint.string() + ": model has " + std::to_string(net.num_classes()) +
                      " classes, dataset has " + std::to_string(data.num_classes));
  return net;
}

int cmd_train(const Options& opt) {
  const auto cfg = read_config(opt);
  auto run = parse_train_run(cfg.text, cfg.source, cfg.base_dir);
  const auto seed = resolve_seed(run, opt);
  run.train.seed = seed;
  auto data = load_dataset(run.dataset);
  auto net = build_model(run.model, data, stream_seed(seed, 1));
  const auto archived = effective_config(cfg, seed);
  const auto digest = digest_hex(archived.dump());
  const auto out = prepare_out(opt, archived);

  auto on_epoch = [&](const Network& current, const EpochRecord& rec) {
    std::cerr << "epoch " << rec.epoch << " lr " << rec.lr << " loss " << rec.train_loss << " clean "
              << rec.clean_accuracy << "% delta_l2 " << rec.mean_delta_l2 << '\n';
    if (run.checkpoint_every > 0 && (rec.epoch + 1) % run.checkpoint_every == 0)
      save_checkpoint(current, out / ("checkpoint_epoch" + std::to_string(rec.epoch + 1) + ".ckpt"), digest);
  };
  auto result = adversarial_train(std::move(net), data, run.train, on_epoch);
  save_checkpoint(result.network, out / "model.ckpt", digest);
  write_train_log_csv(result.log, out / "train_log.csv");
  std::cout << "wrote " << (out / "model.ckpt").string() << '\n';
  return 0;
}

// Runs the attack over the whole dataset in fixed batches; the seed per batch
// depends only on the batch start, matching robust_accuracy.
Perturbation attack_dataset(const Network& net, const Dataset& data, const AttackConfig& attack, std::uint64_t seed,
                            std::size_t batch_size) {
  Perturbation all;
  std::vector<float> delta(data.inputs.numel());
  const std::size_t per = data.sample_numel();
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto p = run_attack(net, data.gather_inputs(idx), data.gather_labels(idx), attack, stream_seed(seed, start));
    auto d = p.delta.data();
    std::copy(d.begin(), d.end(), delta.begin() + static_cast<std::ptrdiff_t>(start * per));
    all.attack_name = p.attack_name;
    all.success.insert(all.success.end(), p.success.begin(), p.success.end());
    all.l2_norms.insert(all.l2_norms.end(), p.l2_norms.begin(), p.l2_norms.end());
    all.lambda_used.insert(all.lambda_used.end(), p.lambda_used.begin(), p.lambda_used.end());
  }
  all.delta = Tensor::from_data(data.inputs.shape(), std::move(delta));
  return all;
}

int cmd_attack(const Options& opt) {
  const auto cfg = read_config(opt);
  auto run = parse_attack_run(cfg.text, cfg.source, cfg.base_dir);
  const auto seed = resolve_seed(run, opt);
  auto data = load_dataset(run.dataset);
  auto net = load_for(run.checkpoint, data);
  const auto out = prepare_out(opt, effective_config(cfg, seed));

  auto p = attack_dataset(net, data, run.attack, seed, run.batch_size);
  write_perturbation(p, out / "perturbation.bin", attack_to_json(run.attack), seed);
  std::ofstream csv(out / "per_sample.csv", std::ios::trunc);
  csv << std::setprecision(9) << "sample_id,label,success,l2_norm,lambda_used\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    csv << i << ',' << data.labels[i] << ',' << (p.success[i] ? 1 : 0) << ',' << p.l2_norms[i] << ',';
    if (i < p.lambda_used.size()) csv << p.lambda_used[i];
    csv << '\n';
  }
  if (data.masks) {
    write_f32_le(out / "masks.bin", data.masks->data());
    std::ofstream side(out / "masks.json", std::ios::trunc);
    side << nlohmann::json{{"shape", data.masks->shape()}}.dump() << '\n';
  }
  std::size_t fooled = 0;
  for (bool s : p.success) fooled += s;
  std::cout << p.attack_name << ": robust accuracy "
            << 100.0 * static_cast<double>(data.size() - fooled) / static_cast<double>(data.size()) << "%\n";
  return 0;
}

int cmd_eval(const Options& opt) {
  const auto cfg = read_config(opt);
  auto run = parse_eval_run(cfg.text, cfg.source, cfg.base_dir);
  const auto seed = resolve_seed(run, opt);
  auto data = load_dataset(run.dataset);
  auto net = load_for(run.checkpoint, data);
  const auto out = prepare_out(opt, effective_config(cfg, seed));

  auto report = evaluate_suite(net, data, run.suite, run.model_id, seed);
  report.write_json(out / "eval_report.json");
  report.write_csv(out / "eval_report.csv");
  std::cout << report.to_json().dump(2) << '\n';
  return 0;
}

int cmd_f2b(const Options& opt) {
  const auto cfg = read_config(opt);
  auto run = parse_f2b_run(cfg.text, cfg.source, cfg.base_dir);
  const auto seed = resolve_seed(run, opt);
  auto pf = read_perturbation(run.perturbation);
  auto masks = load_masks(run.masks);
  const auto& delta = pf.perturbation.delta;
  const std::size_t n = delta.dim(0);
  if (masks.dim(0) != 1 && masks.dim(0) != n)
    throw ConfigError(run.masks.string() + ": " + std::to_string(masks.dim(0)) + " masks for " + std::to_string(n) +
                      " perturbations");
  const std::size_t per = delta.numel() / n;
  const auto out = prepare_out(opt, effective_config(cfg, seed));

  std::ofstream csv(out / "f2b.csv", std::ios::trunc);
  csv << std::setprecision(9) << "sample_id,f2b\n";
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto mask = mask_at(masks, masks.dim(0) == 1 ? 0 : i);
    csv << i << ',';
    try {
      const double v = f2b(delta.data().subspan(i * per, per), mask);
      csv << v;
      sum += v;
      ++defined;
    } catch (const DegenerateRatioError& e) {
      std::cerr << "warning: sample " << i << ": " << e.what() << '\n';
    }
    csv << '\n';
  }
  if (defined == 0) throw DegenerateRatioError("F2B undefined for every sample");
  const double mean = sum / static_cast<double>(defined);
  std::ofstream js(out / "f2b.json", std::ios::trunc);
  js << nlohmann::json{{"mean_f2b", mean}, {"defined", defined}, {"undefined", n - defined}}.dump(2) << '\n';
  std::cout << std::setprecision(6) << mean << '\n';
  return 0;
}

int cmd_effective_lambda(const Options& opt) {
  const auto cfg = read_config(opt);
  auto run = parse_effective_lambda_run(cfg.text, cfg.source, cfg.base_dir);
  const auto seed = resolve_seed(run, opt);
  auto data = load_dataset(run.dataset);
  auto net = load_for(run.checkpoint, data);
  const auto out = prepare_out(opt, effective_config(cfg, seed));

  auto r = effective_lambda(net, data, run.grid, run.pgd, seed);
  nlohmann::json j{{"mean", r.mean},
                   {"std", r.stddev},
                   {"grid", r.grid},
                   {"samples_used", r.samples_used},
                   {"samples_excluded", r.samples_excluded}};
  std::ofstream(out / "effective_lambda.json", std::ios::trunc) << j.dump(2) << '\n';
  std::cout << std::setprecision(6) << r.mean << " +- " << r.stddev << '\n';
  return 0;
}

int cmd_confidence_norm(const Options& opt) {
  const auto cfg = read_config(opt);
  auto run = parse_confidence_norm_run(cfg.text, cfg.source, cfg.base_dir);
  const auto seed = resolve_seed(run, opt);
  auto data = load_dataset(run.dataset);
  auto net = load_for(run.checkpoint, data);
  const auto out = prepare_out(opt, effective_config(cfg, seed));

  auto table = confidence_norm_table(net, data, run.attack, seed);
  write_confidence_norm_csv(table, out / "confidence_norm.csv");
  std::ofstream(out / "confidence_norm.json", std::ios::trunc)
      << nlohmann::json{{"spearman", table.spearman}, {"samples", table.rows.size()}}.dump(2) << '\n';
  std::cout << "spearman " << std::setprecision(6) << table.spearman << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lagrangian adversarial training toolkit"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--threads", opt.threads, "worker thread cap (0: OpenMP default)")->check(CLI::NonNegativeNumber);

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Command commands[] = {
      {"train", "train a model (checkpoint + train_log.csv)", cmd_train},
      {"attack", "perturb a dataset (perturbation.bin + per_sample.csv)", cmd_attack},
      {"eval", "robust accuracy over an attack suite (eval_report.json/.csv)", cmd_eval},
      {"f2b", "foreground-to-background perturbation ratio (f2b.json/.csv)", cmd_f2b},
      {"effective-lambda", "derivative of the adversarial loss in the l2 budget", cmd_effective_lambda},
      {"confidence-norm", "clean confidence vs perturbation norm (confidence_norm.csv)", cmd_confidence_norm},
  };
  std::uint64_t seed_value = 0;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "JSON run configuration")->required();
    sub->add_option("--out", opt.out, "output directory")->required();
    sub->add_option("--seed", seed_value, "overrides the config seed");
    sub->add_option("--threads", opt.threads, "worker thread cap (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) opt.seed = seed_value;
  if (opt.threads > 0) omp_set_num_threads(opt.threads);

  try {
    for (const auto& c : commands)
      if (chosen->get_name() == c.name) return c.fn(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

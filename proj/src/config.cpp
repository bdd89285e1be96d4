#include "lagrobust/config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <variant>

#include "lagrobust/rng.hpp"

namespace lagrobust {

namespace {

using nlohmann::json;

struct Source {
  std::string name;
  const std::string* text = nullptr;
  std::filesystem::path base_dir;
};

// Best-effort line of a key path: follows the quoted keys through the text.
std::size_t line_of(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  for (const auto& key : path) {
    if (key.empty() || key.front() == '[') continue;
    const std::string quoted = "\"" + key + "\"";
    std::size_t at = pos;
    while ((at = text.find(quoted, at)) != std::string::npos) {
      std::size_t k = at + quoted.size();
      while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
      if (k < text.size() && text[k] == ':') break;
      at += quoted.size();
    }
    if (at == std::string::npos) break;
    pos = at;
  }
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

std::string join_path(const std::vector<std::string>& path) {
  std::string out;
  for (const auto& k : path) {
    if (!out.empty() && k.front() != '[') out += '.';
    out += k;
  }
  return out.empty() ? "<root>" : out;
}

class Node {
 public:
  Node(const json& j, std::vector<std::string> path, const Source& src) : j_(&j), path_(std::move(path)), src_(&src) {}

  [[noreturn]] void fail(const std::string& msg, const std::string& key = {}) const {
    auto p = path_;
    if (!key.empty()) p.push_back(key);
    throw ConfigError(src_->name + ":" + std::to_string(line_of(*src_->text, p)) + ": " + join_path(p) + ": " + msg);
  }

  const json& raw() const { return *j_; }
  const Source& source() const { return *src_; }

  void require_object() const {
    if (!j_->is_object()) fail("expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    require_object();
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_->items())
      if (!ok.count(k)) fail("unknown key", k);
  }

  bool has(const std::string& key) const { return j_->contains(key); }

  Node child(const std::string& key) const {
    if (!has(key)) fail("missing required key", key);
    auto p = path_;
    p.push_back(key);
    return Node(j_->at(key), std::move(p), *src_);
  }

  std::vector<Node> elements(const std::string& key) const {
    auto c = child(key);
    if (!c.j_->is_array()) fail("expected an array", key);
    std::vector<Node> out;
    for (std::size_t i = 0; i < c.j_->size(); ++i) {
      auto p = c.path_;
      p.push_back("[" + std::to_string(i) + "]");
      out.emplace_back((*c.j_)[i], std::move(p), *src_);
    }
    return out;
  }

  template <typename T>
  T get(const std::string& key) const {
    if (!has(key)) fail("missing required key", key);
    return convert<T>(j_->at(key), key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    return has(key) ? convert<T>(j_->at(key), key) : fallback;
  }

  std::filesystem::path input_path(const std::string& key) const {
    std::filesystem::path p = get<std::string>(key);
    if (p.is_relative() && !src_->base_dir.empty()) p = src_->base_dir / p;
    if (!std::filesystem::exists(p)) fail("path does not exist: " + p.string(), key);
    return p;
  }

 private:
  template <typename T>
  T convert(const json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail("expected a boolean", key);
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail("expected a string", key);
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail("expected a number", key);
      const double d = v.get<double>();
      if (!std::isfinite(d)) fail("expected a finite number", key);
      return static_cast<T>(d);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail("expected an integer", key);
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        if (v.get<std::int64_t>() < 0) fail("expected a non-negative integer", key);
        return static_cast<T>(v.get<std::int64_t>());
      } else {
        if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<T>::max()))
          fail("integer out of range", key);
        return static_cast<T>(v.get<std::int64_t>());
      }
    } else if constexpr (std::is_same_v<T, std::vector<float>> || std::is_same_v<T, std::vector<int>>) {
      if (!v.is_array()) fail("expected an array", key);
      T out;
      for (const auto& e : v) {
        if constexpr (std::is_same_v<T, std::vector<int>>) {
          if (!e.is_number_integer()) fail("expected an array of integers", key);
          out.push_back(e.get<int>());
        } else {
          if (!e.is_number()) fail("expected an array of numbers", key);
          out.push_back(e.get<float>());
        }
      }
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  const json* j_;
  std::vector<std::string> path_;
  const Source* src_;
};

json parse_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n') + 1;
    throw ConfigError(source + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
}

// Runs a struct's validate() and re-raises its message with the node location.
template <typename T>
void checked(const Node& node, const T& cfg) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    node.fail(e.what());
  }
}

Norm parse_norm(const Node& n, const std::string& key, Norm fallback) {
  if (!n.has(key)) return fallback;
  const auto s = n.get<std::string>(key);
  if (s == "linf") return Norm::kLinf;
  if (s == "l2") return Norm::kL2;
  n.fail("expected \"linf\" or \"l2\"", key);
}

LagrangianConfig parse_lagrangian(const Node& n, bool with_type) {
  if (with_type)
    n.allow({"type", "steps", "alpha", "lambda", "sigma2", "decay", "clamp_input"});
  else
    n.allow({"steps", "alpha", "lambda", "sigma2", "decay", "clamp_input"});
  LagrangianConfig c;
  c.steps = n.get<int>("steps", c.steps);
  c.alpha = n.get<float>("alpha", c.alpha);
  c.lambda = n.get<float>("lambda", c.lambda);
  c.sigma2 = n.get<float>("sigma2", c.sigma2);
  c.decay = n.get<float>("decay", c.decay);
  c.clamp_input = n.get<bool>("clamp_input", c.clamp_input);
  checked(n, c);
  return c;
}

PgdConfig parse_pgd_fields(const Node& n, PgdConfig c) {
  c.norm = parse_norm(n, "norm", c.norm);
  c.epsilon = n.get<float>("epsilon", c.epsilon);
  c.steps = n.get<int>("steps", c.steps);
  c.step_size = n.get<float>("step_size", c.step_size);
  c.use_sign = n.get<bool>("use_sign", c.use_sign);
  c.random_start = n.get<bool>("random_start", c.random_start);
  checked(n, c);
  return c;
}

PgdConfig parse_pgd(const Node& n, bool with_type) {
  if (with_type)
    n.allow({"type", "norm", "epsilon", "steps", "step_size", "use_sign", "random_start"});
  else
    n.allow({"norm", "epsilon", "steps", "step_size", "use_sign", "random_start"});
  PgdConfig c;
  // l2 defaults to the max-normalized direction
  c.norm = parse_norm(n, "norm", c.norm);
  if (c.norm == Norm::kL2) c.use_sign = false;
  return parse_pgd_fields(n, c);
}

AttackConfig parse_attack(const Node& n) {
  n.require_object();
  const auto type = n.get<std::string>("type");
  if (type == "clean") {
    n.allow({"type"});
    return CleanConfig{};
  }
  if (type == "lagrangian") return parse_lagrangian(n, true);
  if (type == "pgd") return parse_pgd(n, true);
  if (type == "threshold_pgd") {
    n.allow({"type", "base", "prob_thresholds", "budget_fractions"});
    ThresholdConfig c;
    if (n.has("base")) c.base = parse_pgd(n.child("base"), false);
    c.prob_thresholds = n.get<std::vector<float>>("prob_thresholds", c.prob_thresholds);
    c.budget_fractions = n.get<std::vector<float>>("budget_fractions", c.budget_fractions);
    checked(n, c);
    return c;
  }
  if (type == "cw_minimal") {
    n.allow({"type", "lambda_init", "lambda_decay", "max_stages", "inner"});
    CwMinimalConfig c;
    c.lambda_init = n.get<float>("lambda_init", c.lambda_init);
    c.lambda_decay = n.get<float>("lambda_decay", c.lambda_decay);
    c.max_stages = n.get<int>("max_stages", c.max_stages);
    if (n.has("inner")) c.inner = parse_lagrangian(n.child("inner"), false);
    checked(n, c);
    return c;
  }
  if (type == "pgd_l0") {
    n.allow({"type", "pixels", "steps", "step_size"});
    PgdL0Config c;
    c.pixels = n.get<std::size_t>("pixels", c.pixels);
    c.steps = n.get<int>("steps", c.steps);
    c.step_size = n.get<float>("step_size", c.step_size);
    checked(n, c);
    return c;
  }
  if (type == "gaussian_noise") {
    n.allow({"type", "mean", "variance"});
    GaussianNoiseConfig c;
    c.mean = n.get<float>("mean", c.mean);
    c.variance = n.get<float>("variance", c.variance);
    checked(n, c);
    return c;
  }
  if (type == "gaussian_blur") {
    n.allow({"type", "kernel_size", "sigma"});
    GaussianBlurConfig c;
    c.kernel_size = n.get<std::size_t>("kernel_size", c.kernel_size);
    c.sigma = n.get<float>("sigma", c.sigma);
    checked(n, c);
    return c;
  }
  n.fail("unknown attack type \"" + type + "\"", "type");
}

TrainConfig parse_train(const Node& n) {
  n.allow({"epochs", "batch_size", "lr_initial", "lr_decay_epochs", "lr_decay_factor", "warmup_epochs", "momentum",
           "attack", "loss", "early_stop"});
  TrainConfig c;
  c.epochs = n.get<int>("epochs", c.epochs);
  c.batch_size = n.get<std::size_t>("batch_size", c.batch_size);
  c.lr_initial = n.get<float>("lr_initial", c.lr_initial);
  c.lr_decay_factor = n.get<float>("lr_decay_factor", c.lr_decay_factor);
  c.warmup_epochs = n.get<int>("warmup_epochs", c.warmup_epochs);
  c.momentum = n.get<float>("momentum", c.momentum);
  if (!n.has("lr_decay_epochs") || n.raw().at("lr_decay_epochs") == "proportional") {
    c.lr_decay_epochs = proportional_decay_epochs(c.epochs);
  } else {
    c.lr_decay_epochs = n.get<std::vector<int>>("lr_decay_epochs");
  }
  if (n.has("attack")) c.attack = parse_attack(n.child("attack"));
  const auto loss = n.get<std::string>("loss", "cross_entropy");
  if (loss == "cross_entropy")
    c.loss = TrainLoss::kCrossEntropy;
  else if (loss == "margin")
    c.loss = TrainLoss::kMargin;
  else
    n.fail("expected \"cross_entropy\" or \"margin\"", "loss");
  if (n.has("early_stop")) {
    auto es = n.child("early_stop");
    es.allow({"patience", "holdout_fraction"});
    EarlyStopConfig e;
    e.patience = es.get<int>("patience", e.patience);
    e.holdout_fraction = es.get<double>("holdout_fraction", e.holdout_fraction);
    c.early_stop = e;
  }
  checked(n, c);
  return c;
}

DatasetSpec parse_dataset(const Node& n) {
  n.require_object();
  DatasetSpec d;
  d.kind = n.get<std::string>("kind");
  if (d.kind == "synthetic_images") {
    n.allow({"kind", "n", "classes", "side", "channels", "noise_std", "seed", "limit"});
  } else if (d.kind == "two_moons") {
    n.allow({"kind", "n", "noise_std", "seed", "limit"});
    d.classes = 2;
  } else if (d.kind == "gaussian_blobs") {
    n.allow({"kind", "n", "classes", "dim", "seed", "limit"});
  } else if (d.kind == "cifar10") {
    n.allow({"kind", "path", "split", "limit"});
    d.path = n.input_path("path");
    d.split = n.get<std::string>("split", d.split);
    if (d.split != "train" && d.split != "test") n.fail("expected \"train\" or \"test\"", "split");
  } else if (d.kind == "csv") {
    n.allow({"kind", "path", "limit"});
    d.path = n.input_path("path");
  } else {
    n.fail("unknown dataset kind \"" + d.kind + "\"", "kind");
  }
  d.n = n.get<std::size_t>("n", d.n);
  d.classes = n.get<std::size_t>("classes", d.classes);
  d.side = n.get<std::size_t>("side", d.side);
  d.dim = n.get<std::size_t>("dim", d.dim);
  d.channels = n.get<std::size_t>("channels", d.channels);
  d.noise_std = n.get<float>("noise_std", d.noise_std);
  d.seed = n.get<std::uint64_t>("seed", d.seed);
  if (n.has("limit")) d.limit = n.get<std::size_t>("limit");
  if (d.n == 0) n.fail("must be positive", "n");
  if (d.classes < 2) n.fail("need at least 2 classes", "classes");
  if (d.n < d.classes) n.fail("need at least one sample per class", "n");
  if (d.side < 4) n.fail("must be >= 4", "side");
  if (d.channels == 0) n.fail("must be positive", "channels");
  if (d.noise_std < 0.0f) n.fail("must be >= 0", "noise_std");
  if (d.limit && *d.limit == 0) n.fail("must be positive", "limit");
  return d;
}

ModelSpec parse_model(const Node& n) {
  n.require_object();
  ModelSpec m;
  if (n.has("arch")) {
    n.allow({"arch"});
    m.kind = "arch";
    m.arch = n.get<std::string>("arch");
    try {
      (void)Network::from_descriptor(m.arch);
    } catch (const std::exception& e) {
      n.fail(e.what(), "arch");
    }
    return m;
  }
  m.kind = n.get<std::string>("kind", m.kind);
  if (m.kind == "cnn") {
    n.allow({"kind", "width1", "width2"});
    m.width1 = n.get<std::size_t>("width1", m.width1);
    m.width2 = n.get<std::size_t>("width2", m.width2);
    if (m.width1 == 0 || m.width2 == 0) n.fail("conv widths must be positive");
  } else if (m.kind == "mlp") {
    n.allow({"kind", "hidden"});
    m.hidden = n.get<std::size_t>("hidden", m.hidden);
    if (m.hidden == 0) n.fail("must be positive", "hidden");
  } else {
    n.fail("expected \"cnn\" or \"mlp\"", "kind");
  }
  return m;
}

template <typename Fn>
auto with_root(const std::string& text, const std::string& source, const std::filesystem::path& base_dir, Fn fn) {
  const json root = parse_text(text, source);
  Source src{source, &text, base_dir};
  Node node(root, {}, src);
  node.require_object();
  return fn(node);
}

}  // namespace

Dataset load_dataset(const DatasetSpec& spec) {
  Dataset d;
  if (spec.kind == "synthetic_images") {
    SyntheticImageOptions opt;
    opt.channels = spec.channels;
    opt.noise_std = spec.noise_std;
    d = synthetic_images(spec.n, spec.classes, spec.side, spec.seed, opt);
  } else if (spec.kind == "two_moons") {
    d = two_moons(spec.n, spec.noise_std, spec.seed);
  } else if (spec.kind == "gaussian_blobs") {
    d = gaussian_blobs(spec.n, spec.classes, spec.dim, spec.seed);
  } else if (spec.kind == "cifar10") {
    d = load_cifar10_binary(spec.path, spec.split);
  } else if (spec.kind == "csv") {
    d = load_csv(spec.path);
  } else {
    throw ConfigError("unknown dataset kind \"" + spec.kind + "\"");
  }
  if (spec.limit && *spec.limit < d.size()) {
    std::vector<std::size_t> idx(*spec.limit);
    std::iota(idx.begin(), idx.end(), 0);
    d = d.subset(idx);
  }
  return d;
}

Network build_model(const ModelSpec& spec, const Dataset& data, std::uint64_t seed) {
  if (spec.kind == "arch") {
    auto net = Network::from_descriptor(spec.arch);
    if (net.input_shape() != data.sample_shape()) throw ConfigError("model input shape does not match the dataset");
    if (net.num_classes() != data.num_classes) throw ConfigError("model class count does not match the dataset");
    net.init_he(seed);
    return net;
  }
  const auto shape = data.sample_shape();
  if (spec.kind == "mlp") return make_mlp(data.sample_numel(), spec.hidden, data.num_classes, seed);
  if (shape.size() != 3 || shape[1] != shape[2]) throw ConfigError("cnn models need square [C,H,W] inputs");
  return make_cnn(shape[0], shape[1], data.num_classes, seed, spec.width1, spec.width2);
}

TrainRun parse_train_run(const std::string& text, const std::string& source, const std::filesystem::path& base_dir) {
  return with_root(text, source, base_dir, [](const Node& n) {
    n.allow({"seed", "dataset", "model", "train", "checkpoint_every"});
    TrainRun r;
    r.seed = n.get<std::uint64_t>("seed", 0);
    r.dataset = parse_dataset(n.child("dataset"));
    if (n.has("model")) r.model = parse_model(n.child("model"));
    r.train = n.has("train") ? parse_train(n.child("train")) : TrainConfig{};
    r.train.seed = r.seed;
    r.checkpoint_every = n.get<int>("checkpoint_every", 0);
    if (r.checkpoint_every < 0) n.fail("must be >= 0", "checkpoint_every");
    return r;
  });
}

AttackRun parse_attack_run(const std::string& text, const std::string& source, const std::filesystem::path& base_dir) {
  return with_root(text, source, base_dir, [](const Node& n) {
    n.allow({"seed", "checkpoint", "dataset", "attack", "batch_size"});
    AttackRun r;
    r.seed = n.get<std::uint64_t>("seed", 0);
    r.checkpoint = n.input_path("checkpoint");
    r.dataset = parse_dataset(n.child("dataset"));
    r.attack = parse_attack(n.child("attack"));
    r.batch_size = n.get<std::size_t>("batch_size", r.batch_size);
    if (r.batch_size == 0) n.fail("must be positive", "batch_size");
    return r;
  });
}

EvalRun parse_eval_run(const std::string& text, const std::string& source, const std::filesystem::path& base_dir) {
  return with_root(text, source, base_dir, [](const Node& n) {
    n.allow({"seed", "checkpoint", "dataset", "suite", "model_id"});
    EvalRun r;
    r.seed = n.get<std::uint64_t>("seed", 0);
    r.checkpoint = n.input_path("checkpoint");
    r.dataset = parse_dataset(n.child("dataset"));
    r.model_id = n.get<std::string>("model_id", r.checkpoint.stem().string());
    std::set<std::string> names;
    for (const auto& e : n.elements("suite")) {
      e.allow({"name", "unseen", "attack"});
      SuiteEntry s;
      s.attack = parse_attack(e.child("attack"));
      s.name = e.get<std::string>("name", attack_name(s.attack));
      s.unseen = e.get<bool>("unseen", false);
      if (!names.insert(s.name).second) e.fail("duplicate suite entry \"" + s.name + "\"", "name");
      r.suite.push_back(std::move(s));
    }
    if (r.suite.empty()) n.fail("suite must list at least one attack", "suite");
    return r;
  });
}

F2bRun parse_f2b_run(const std::string& text, const std::string& source, const std::filesystem::path& base_dir) {
  return with_root(text, source, base_dir, [](const Node& n) {
    n.allow({"seed", "perturbation", "masks"});
    F2bRun r;
    r.seed = n.get<std::uint64_t>("seed", 0);
    r.perturbation = n.input_path("perturbation");
    r.masks = n.input_path("masks");
    return r;
  });
}

EffectiveLambdaRun parse_effective_lambda_run(const std::string& text, const std::string& source,
                                              const std::filesystem::path& base_dir) {
  return with_root(text, source, base_dir, [](const Node& n) {
    n.allow({"seed", "checkpoint", "dataset", "grid", "eps0", "points", "pgd"});
    EffectiveLambdaRun r;
    r.seed = n.get<std::uint64_t>("seed", 0);
    r.checkpoint = n.input_path("checkpoint");
    r.dataset = parse_dataset(n.child("dataset"));
    if (n.has("grid") == n.has("eps0")) n.fail("give exactly one of \"grid\" or \"eps0\"");
    if (n.has("grid")) {
      if (n.has("points")) n.fail("\"points\" only applies with \"eps0\"", "points");
      r.grid = n.get<std::vector<float>>("grid");
    } else {
      try {
        r.grid = default_lambda_grid(n.get<float>("eps0"), n.get<int>("points", 5));
      } catch (const std::invalid_argument& e) {
        n.fail(e.what(), "eps0");
      }
    }
    if (r.grid.size() < 3) n.fail("needs at least 3 points", "grid");
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
      if (r.grid[i] < 0.0f) n.fail("values must be >= 0", "grid");
      if (i && !(r.grid[i] > r.grid[i - 1])) n.fail("must be strictly increasing", "grid");
    }
    r.pgd.norm = Norm::kL2;
    r.pgd.use_sign = false;
    r.pgd.steps = 40;
    if (n.has("pgd")) {
      auto p = n.child("pgd");
      p.allow({"steps", "step_size", "use_sign", "random_start"});
      r.pgd = parse_pgd_fields(p, r.pgd);
    }
    r.pgd.epsilon = r.grid.back();
    if (!n.has("pgd") || !n.child("pgd").has("step_size")) r.pgd.step_size = 2.5f * r.grid.back() / static_cast<float>(r.pgd.steps);
    return r;
  });
}

ConfidenceNormRun parse_confidence_norm_run(const std::string& text, const std::string& source,
                                            const std::filesystem::path& base_dir) {
  return with_root(text, source, base_dir, [](const Node& n) {
    n.allow({"seed", "checkpoint", "dataset", "attack"});
    ConfidenceNormRun r;
    r.seed = n.get<std::uint64_t>("seed", 0);
    r.checkpoint = n.input_path("checkpoint");
    r.dataset = parse_dataset(n.child("dataset"));
    r.attack = parse_attack(n.child("attack"));
    return r;
  });
}

AttackConfig parse_attack_config(const std::string& text) {
  return with_root(text, "attack", {}, [](const Node& n) { return parse_attack(n); });
}

TrainConfig parse_train_config(const std::string& text) {
  return with_root(text, "train", {}, [](const Node& n) { return parse_train(n); });
}

nlohmann::json attack_to_json(const AttackConfig& cfg) {
  auto pgd_json = [](const PgdConfig& c) {
    return json{{"norm", c.norm == Norm::kLinf ? "linf" : "l2"},
                {"epsilon", c.epsilon},
                {"steps", c.steps},
                {"step_size", c.step_size},
                {"use_sign", c.use_sign},
                {"random_start", c.random_start}};
  };
  auto lag_json = [](const LagrangianConfig& c) {
    return json{{"steps", c.steps},   {"alpha", c.alpha}, {"lambda", c.lambda},
                {"sigma2", c.sigma2}, {"decay", c.decay}, {"clamp_input", c.clamp_input}};
  };
  json j;
  if (auto* c = std::get_if<CleanConfig>(&cfg)) {
    (void)c;
    j["type"] = "clean";
  } else if (auto* c = std::get_if<LagrangianConfig>(&cfg)) {
    j = lag_json(*c);
    j["type"] = "lagrangian";
  } else if (auto* c = std::get_if<PgdConfig>(&cfg)) {
    j = pgd_json(*c);
    j["type"] = "pgd";
  } else if (auto* c = std::get_if<ThresholdConfig>(&cfg)) {
    j = {{"type", "threshold_pgd"},
         {"base", pgd_json(c->base)},
         {"prob_thresholds", c->prob_thresholds},
         {"budget_fractions", c->budget_fractions}};
  } else if (auto* c = std::get_if<CwMinimalConfig>(&cfg)) {
    j = {{"type", "cw_minimal"},
         {"lambda_init", c->lambda_init},
         {"lambda_decay", c->lambda_decay},
         {"max_stages", c->max_stages},
         {"inner", lag_json(c->inner)}};
  } else if (auto* c = std::get_if<PgdL0Config>(&cfg)) {
    j = {{"type", "pgd_l0"}, {"pixels", c->pixels}, {"steps", c->steps}, {"step_size", c->step_size}};
  } else if (auto* c = std::get_if<GaussianNoiseConfig>(&cfg)) {
    j = {{"type", "gaussian_noise"}, {"mean", c->mean}, {"variance", c->variance}};
  } else if (auto* c = std::get_if<GaussianBlurConfig>(&cfg)) {
    j = {{"type", "gaussian_blur"}, {"kernel_size", c->kernel_size}, {"sigma", c->sigma}};
  }
  return j;
}

}  // namespace lagrobust

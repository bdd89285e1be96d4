#include "lagrobust/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "attack_internal.hpp"
#include "lagrobust/rng.hpp"

namespace lagrobust {

namespace {

template <typename Fn>
void for_each_batch(std::size_t n, std::size_t batch_size, Fn fn) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    fn(start, std::span<const std::size_t>(idx));
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

RobustResult robust_accuracy(const Network& net, const Dataset& data, const AttackConfig& attack, std::uint64_t seed,
                             std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("robust_accuracy: empty dataset");
  std::size_t correct = 0;
  double norm_sum = 0.0;
  for_each_batch(data.size(), batch_size, [&](std::size_t start, std::span<const std::size_t> idx) {
    auto x = data.gather_inputs(idx);
    auto y = data.gather_labels(idx);
    auto p = run_attack(net, x, y, attack, stream_seed(seed, start));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      correct += !p.success[i];
      norm_sum += p.l2_norms[i];
    }
  });
  const auto n = static_cast<double>(data.size());
  return {100.0 * static_cast<double>(correct) / n, norm_sum / n};
}

double EvalReport::unseen_mean() const {
  std::vector<double> v;
  for (const auto& a : attacks)
    if (a.unseen) v.push_back(a.robust_accuracy);
  return mean_of(v);
}

double EvalReport::union_mean() const {
  std::vector<double> v;
  for (const auto& a : attacks) v.push_back(a.robust_accuracy);
  return mean_of(v);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["model_id"] = model_id;
  j["clean_accuracy"] = clean_accuracy;
  j["attacks"] = nlohmann::json::array();
  for (const auto& a : attacks) {
    j["attacks"].push_back(
        {{"name", a.name}, {"unseen", a.unseen}, {"robust_accuracy", a.robust_accuracy}, {"mean_l2", a.mean_l2}});
  }
  j["unseen_mean"] = number_or_null(unseen_mean());
  j["union_mean"] = number_or_null(union_mean());
  return j;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(8);
  out << "attack,unseen,robust_accuracy,mean_l2\n";
  out << "clean,0," << clean_accuracy << ",0\n";
  for (const auto& a : attacks) out << a.name << ',' << (a.unseen ? 1 : 0) << ',' << a.robust_accuracy << ',' << a.mean_l2 << '\n';
  out << "unseen_mean,," << unseen_mean() << ",\n";
  out << "union_mean,," << union_mean() << ",\n";
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

EvalReport evaluate_suite(const Network& net, const Dataset& data, std::span<const SuiteEntry> suite,
                          const std::string& model_id, std::uint64_t seed) {
  EvalReport report;
  report.model_id = model_id;
  report.clean_accuracy = robust_accuracy(net, data, CleanConfig{}, seed).accuracy;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    auto r = robust_accuracy(net, data, suite[i].attack, stream_seed(seed, 0xa7, i));
    report.attacks.push_back({suite[i].name, suite[i].unseen, r.accuracy, r.mean_l2});
  }
  return report;
}

std::vector<float> default_lambda_grid(float eps0, int points) {
  if (!(eps0 > 0.0f) || points < 3) throw std::invalid_argument("effective lambda grid needs eps0 > 0 and >= 3 points");
  std::vector<float> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) grid[static_cast<std::size_t>(i)] = eps0 * (0.5f + static_cast<float>(i) / static_cast<float>(points - 1));
  return grid;
}

EffectiveLambdaResult effective_lambda(const Network& net, const Dataset& data, std::span<const float> eps_grid,
                                       PgdConfig cfg, std::uint64_t seed) {
  if (eps_grid.size() < 3) throw std::invalid_argument("effective_lambda: grid needs at least 3 points");
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    if (!(eps_grid[i] >= 0.0f)) throw std::invalid_argument("effective_lambda: grid values must be >= 0");
    if (i && !(eps_grid[i] > eps_grid[i - 1])) throw std::invalid_argument("effective_lambda: grid must increase");
  }
  cfg.norm = Norm::kL2;
  cfg.validate();
  const std::size_t n = data.size(), g = eps_grid.size();
  std::vector<std::vector<float>> loss(n, std::vector<float>(g, 0.0f));
  std::vector<bool> failed(n, false);

  auto run = [&](const Tensor& x, const std::vector<int>& y, float eps, std::uint64_t s) {
    std::vector<float> best;
    std::vector<float> budgets(y.size(), eps);
    detail::pgd_core(net, x, y, cfg, budgets, s, &best);
    return best;
  };

  for (std::size_t j = 0; j < g; ++j) {
    for_each_batch(n, 128, [&](std::size_t start, std::span<const std::size_t> idx) {
      auto x = data.gather_inputs(idx);
      auto y = data.gather_labels(idx);
      const auto s = stream_seed(seed, start, j);
      try {
        auto best = run(x, y, eps_grid[j], s);
        for (std::size_t i = 0; i < idx.size(); ++i) loss[idx[i]][j] = best[i];
      } catch (const NumericError&) {
        // isolate the offending samples
        for (std::size_t i = 0; i < idx.size(); ++i) {
          std::size_t one[] = {idx[i]};
          try {
            loss[idx[i]][j] = run(data.gather_inputs(one), data.gather_labels(one), eps_grid[j], s)[0];
          } catch (const NumericError& e) {
            if (!failed[idx[i]]) std::cerr << "warning: effective_lambda excludes sample " << idx[i] << ": " << e.what() << '\n';
            failed[idx[i]] = true;
          }
        }
      }
    });
  }

  EffectiveLambdaResult out;
  out.grid.assign(eps_grid.begin(), eps_grid.end());
  std::vector<double> estimates;
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i]) {
      ++out.samples_excluded;
      continue;
    }
    bool finite = true;
    std::vector<double> local;
    for (std::size_t j = 1; j + 1 < g; ++j) {
      const double d = (static_cast<double>(loss[i][j + 1]) - loss[i][j - 1]) /
                       (static_cast<double>(eps_grid[j + 1]) - eps_grid[j - 1]);
      if (!std::isfinite(d)) finite = false;
      local.push_back(d);
    }
    if (!finite) {
      std::cerr << "warning: effective_lambda excludes sample " << i << ": non-finite derivative\n";
      ++out.samples_excluded;
      continue;
    }
    estimates.insert(estimates.end(), local.begin(), local.end());
    out.losses.push_back(loss[i]);
    ++out.samples_used;
  }
  if (estimates.empty()) throw NumericError("effective_lambda: every sample was excluded");
  out.mean = mean_of(estimates);
  double var = 0.0;
  for (double e : estimates) var += (e - out.mean) * (e - out.mean);
  out.stddev = std::sqrt(var / static_cast<double>(estimates.size()));
  return out;
}

void ForegroundMask::validate() const {
  if (height == 0 || width == 0 || p.size() != height * width) throw std::invalid_argument("mask shape mismatch");
  double fg = 0.0, bg = 0.0;
  for (float v : p) {
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("mask probabilities must lie in [0,1]");
    fg += v;
    bg += 1.0 - v;
  }
  if (fg <= 0.0) throw DegenerateRatioError("F2B undefined: mask has no foreground");
  if (bg <= 0.0) throw DegenerateRatioError("F2B undefined: mask has no background");
}

double f2b(std::span<const float> delta, const ForegroundMask& mask) {
  mask.validate();
  const std::size_t plane = mask.height * mask.width;
  if (delta.empty() || delta.size() % plane != 0) throw ShapeError("f2b: perturbation does not match the mask");
  double fg_num = 0.0, fg_den = 0.0, bg_num = 0.0, bg_den = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double p = mask.p[i % plane];
    const double a = std::abs(static_cast<double>(delta[i]));
    fg_num += a * p;
    fg_den += p;
    bg_num += a * (1.0 - p);
    bg_den += 1.0 - p;
  }
  if (bg_num <= 0.0) throw DegenerateRatioError("F2B undefined: no perturbation in the background");
  return (fg_num / fg_den) / (bg_num / bg_den);
}

namespace {

Tensor load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mask " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P5" && magic != "P2") throw std::runtime_error(path.string() + ": not a PGM (P2/P5) file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token());
    h = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw std::runtime_error(path.string() + ": only 8-bit PGM supported");
  std::vector<float> p(w * h);
  if (magic == "P5") {
    std::vector<unsigned char> px(w * h);
    in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (in.gcount() != static_cast<std::streamsize>(px.size())) throw std::runtime_error(path.string() + ": truncated PGM");
    for (std::size_t i = 0; i < px.size(); ++i) p[i] = static_cast<float>(px[i]) / 255.0f;
  } else {
    for (auto& v : p) {
      const auto tok = next_token();
      if (tok.empty()) throw std::runtime_error(path.string() + ": truncated PGM");
      v = static_cast<float>(std::stoul(tok)) / 255.0f;
    }
  }
  return Tensor::from_data({1, h, w}, std::move(p));
}

}  // namespace

Tensor load_masks(const std::filesystem::path& path) {
  if (path.extension() == ".pgm") return load_pgm(path);
  auto sidecar = path;
  sidecar.replace_extension(".json");
  std::ifstream in(sidecar);
  if (!in) throw std::runtime_error("mask file needs a JSON shape sidecar: " + sidecar.string());
  auto meta = nlohmann::json::parse(in);
  auto shape = meta.at("shape").get<Shape>();
  if (shape.size() == 2) shape.insert(shape.begin(), 1);
  if (shape.size() != 3) throw std::runtime_error("mask shape must be [H,W] or [n,H,W]");
  auto values = read_f32_le(path);
  if (values.size() != shape_numel(shape)) throw std::runtime_error(path.string() + ": payload does not match shape");
  return Tensor::from_data(std::move(shape), std::move(values));
}

ForegroundMask mask_at(const Tensor& masks, std::size_t index) {
  if (masks.rank() != 3 || index >= masks.dim(0)) throw std::out_of_range("mask index out of range");
  ForegroundMask m;
  m.height = masks.dim(1);
  m.width = masks.dim(2);
  auto v = masks.data();
  const std::size_t plane = m.height * m.width;
  m.p.assign(v.begin() + static_cast<std::ptrdiff_t>(index * plane), v.begin() + static_cast<std::ptrdiff_t>((index + 1) * plane));
  return m;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: column lengths differ");
  if (a.size() < 2) return 0.0;
  auto ra = average_ranks(a), rb = average_ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

ConfidenceNormTable confidence_norm_table(const Network& net, const Dataset& data, const AttackConfig& attack,
                                          std::uint64_t seed, std::size_t batch_size) {
  ConfidenceNormTable table;
  for_each_batch(data.size(), batch_size, [&](std::size_t start, std::span<const std::size_t> idx) {
    auto x = data.gather_inputs(idx);
    auto y = data.gather_labels(idx);
    auto probs = correct_class_probability(net, x, y);
    auto p = run_attack(net, x, y, attack, stream_seed(seed, start));
    for (std::size_t i = 0; i < idx.size(); ++i) table.rows.push_back({idx[i], probs[i], p.l2_norms[i]});
  });
  std::vector<double> pc, nn;
  for (const auto& r : table.rows) {
    pc.push_back(r.p_correct);
    nn.push_back(r.l2_norm);
  }
  table.spearman = spearman(pc, nn);
  return table;
}

void write_confidence_norm_csv(const ConfidenceNormTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(9);
  out << "sample_id,p_correct,l2_norm\n";
  for (const auto& r : table.rows) out << r.sample_id << ',' << r.p_correct << ',' << r.l2_norm << '\n';
}

}  // namespace lagrobust

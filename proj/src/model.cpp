#include "lagrobust/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <regex>
#include <sstream>

#include "lagrobust/ops.hpp"

namespace lagrobust {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_labels(const Tensor& logits, std::span<const int> labels, const char* op) {
  if (logits.rank() != 2) throw ShapeError(std::string(op) + ": logits must be [B,C]");
  if (logits.dim(1) < 2) throw std::invalid_argument(std::string(op) + ": need at least two classes");
  if (labels.size() != logits.dim(0)) throw ShapeError(std::string(op) + ": label count does not match batch");
  const int classes = static_cast<int>(logits.dim(1));
  for (int y : labels) {
    if (y < 0 || y >= classes) throw std::invalid_argument(std::string(op) + ": invalid label " + std::to_string(y));
  }
}

std::string dims_str(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

}  // namespace

Network::Network(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty() || shape_numel(input_shape_) == 0) throw ShapeError("network input shape is empty");
  Shape cur = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i);
    std::visit(Overloaded{
                   [&](const DenseLayer& d) {
                     if (cur.size() != 1 || cur[0] != d.in || d.out == 0) {
                       throw ShapeError(prefix + ": dense(" + std::to_string(d.in) + "," + std::to_string(d.out) +
                                        ") cannot follow shape " + shape_str(cur));
                     }
                     params_.push_back({prefix + ".weight", Tensor::zeros({d.in, d.out}, true)});
                     params_.push_back({prefix + ".bias", Tensor::zeros({d.out}, true)});
                     cur = {d.out};
                   },
                   [&](const ConvLayer& c) {
                     if (cur.size() != 3 || cur[0] != c.in_channels || c.out_channels == 0 || c.kernel == 0 ||
                         c.stride == 0 || cur[1] + 2 * c.padding < c.kernel || cur[2] + 2 * c.padding < c.kernel) {
                       throw ShapeError(prefix + ": conv layer cannot follow shape " + shape_str(cur));
                     }
                     params_.push_back(
                         {prefix + ".weight", Tensor::zeros({c.out_channels, c.in_channels, c.kernel, c.kernel}, true)});
                     params_.push_back({prefix + ".bias", Tensor::zeros({c.out_channels}, true)});
                     cur = {c.out_channels, (cur[1] + 2 * c.padding - c.kernel) / c.stride + 1,
                            (cur[2] + 2 * c.padding - c.kernel) / c.stride + 1};
                   },
                   [&](const ReluLayer&) {},
                   [&](const FlattenLayer&) { cur = {shape_numel(cur)}; },
               },
               layers_[i]);
  }
  if (cur.size() != 1 || cur[0] < 2) throw ShapeError("network must end in a vector of at least two logits");
  num_classes_ = cur[0];
}

Tensor& Network::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p.value;
  throw std::out_of_range("no parameter named " + name);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void Network::init_he(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    auto values = p.value.mutable_data();
    if (p.value.rank() == 1) {
      std::fill(values.begin(), values.end(), 0.0f);
      continue;
    }
    // dense [in,out] vs conv [out,in,k,k]
    const std::size_t fan_in = p.value.rank() == 2 ? p.value.dim(0) : p.value.numel() / p.value.dim(0);
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (auto& v : values) v = dist(rng);
  }
}

void Network::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

Network Network::clone() const {
  Network copy(input_shape_, layers_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = params_[i].value.data();
    std::copy(src.begin(), src.end(), copy.params_[i].value.mutable_data().begin());
  }
  return copy;
}

std::string Network::arch_descriptor() const {
  std::ostringstream os;
  os << "in=" << dims_str(input_shape_);
  for (const auto& layer : layers_) {
    os << ';';
    std::visit(Overloaded{
                   [&](const DenseLayer& d) { os << "dense(" << d.in << ',' << d.out << ')'; },
                   [&](const ConvLayer& c) {
                     os << "conv(" << c.in_channels << ',' << c.out_channels << ',' << c.kernel << ',' << c.stride
                        << ',' << c.padding << ')';
                   },
                   [&](const ReluLayer&) { os << "relu"; },
                   [&](const FlattenLayer&) { os << "flatten"; },
               },
               layer);
  }
  return os.str();
}

Network Network::from_descriptor(const std::string& arch) {
  std::vector<std::string> tokens;
  {
    std::stringstream ss(arch);
    std::string tok;
    while (std::getline(ss, tok, ';')) tokens.push_back(tok);
  }
  auto fail = [&](const std::string& why) -> CheckpointError {
    return CheckpointError("unknown architecture descriptor '" + arch + "': " + why);
  };
  if (tokens.empty() || tokens[0].rfind("in=", 0) != 0) throw fail("missing in= prefix");

  Shape input;
  {
    std::stringstream ss(tokens[0].substr(3));
    std::string d;
    while (std::getline(ss, d, 'x')) {
      if (d.empty() || d.find_first_not_of("0123456789") != std::string::npos) throw fail("bad input dims");
      input.push_back(std::stoul(d));
    }
  }
  static const std::regex kCall(R"(^(dense|conv)\(([0-9,]+)\)$)");
  std::vector<Layer> layers;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t == "relu") {
      layers.emplace_back(ReluLayer{});
      continue;
    }
    if (t == "flatten") {
      layers.emplace_back(FlattenLayer{});
      continue;
    }
    std::smatch m;
    if (!std::regex_match(t, m, kCall)) throw fail("bad layer '" + t + "'");
    std::vector<std::size_t> args;
    std::stringstream ss(m[2].str());
    std::string a;
    while (std::getline(ss, a, ',')) {
      if (a.empty()) throw fail("bad layer '" + t + "'");
      args.push_back(std::stoul(a));
    }
    if (m[1] == "dense") {
      if (args.size() != 2) throw fail("dense takes 2 arguments");
      layers.emplace_back(DenseLayer{args[0], args[1]});
    } else {
      if (args.size() != 5) throw fail("conv takes 5 arguments");
      layers.emplace_back(ConvLayer{args[0], args[1], args[2], args[3], args[4]});
    }
  }
  try {
    return Network(std::move(input), std::move(layers));
  } catch (const ShapeError& e) {
    throw fail(e.what());
  }
}

Network make_mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
  Network net({input_dim}, {DenseLayer{input_dim, hidden}, ReluLayer{}, DenseLayer{hidden, hidden}, ReluLayer{},
                            DenseLayer{hidden, classes}});
  net.init_he(seed);
  return net;
}

Network make_cnn(std::size_t channels, std::size_t side, std::size_t classes, std::uint64_t seed, std::size_t width1,
                 std::size_t width2) {
  const std::size_t reduced = (side + 2 - 3) / 2 + 1;
  Network net({channels, side, side}, {ConvLayer{channels, width1, 3, 1, 1}, ReluLayer{},
                                       ConvLayer{width1, width2, 3, 2, 1}, ReluLayer{}, FlattenLayer{},
                                       DenseLayer{width2 * reduced * reduced, classes}});
  net.init_he(seed);
  return net;
}

Tensor forward_logits(const Network& net, const Tensor& x, ParamGrad mode) {
  const auto& s = x.shape();
  if (s.size() != net.input_shape().size() + 1 || !std::equal(net.input_shape().begin(), net.input_shape().end(),
                                                              s.begin() + 1)) {
    throw ShapeError("forward_logits: input " + shape_str(s) + " does not match network input " +
                     shape_str(net.input_shape()));
  }
  auto pick = [&](std::size_t idx) {
    const Tensor& p = net.params()[idx].value;
    return mode == ParamGrad::kTrack ? p : p.detach();
  };
  Tensor h = x;
  std::size_t pidx = 0;
  for (const auto& layer : net.layers()) {
    std::visit(Overloaded{
                   [&](const DenseLayer&) {
                     h = ops::add_bias(ops::matmul(h, pick(pidx)), pick(pidx + 1));
                     pidx += 2;
                   },
                   [&](const ConvLayer& c) {
                     h = ops::conv2d(h, pick(pidx), c.stride, c.padding, pick(pidx + 1));
                     pidx += 2;
                   },
                   [&](const ReluLayer&) { h = ops::relu(h); },
                   [&](const FlattenLayer&) { h = ops::flatten(h); },
               },
               layer);
  }
  return h;
}

Tensor margin_loss(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels, "margin_loss");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto z = logits.data();
  std::vector<float> values(rows);
  std::vector<std::size_t> runner_up(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto y = static_cast<std::size_t>(labels[r]);
    std::size_t best = y == 0 ? 1 : 0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (j != y && z[r * cols + j] > z[r * cols + best]) best = j;
    }
    runner_up[r] = best;
    values[r] = z[r * cols + best] - z[r * cols + y];
  }
  auto out = Tensor::from_data({rows}, std::move(values));
  check_finite(out, "margin_loss");
  if (Tape::should_record({&logits})) {
    std::vector<int> ys(labels.begin(), labels.end());
    Tape::active()->record(out, [logits, ys = std::move(ys), runner_up = std::move(runner_up),
                                 cols](std::span<const float> g) mutable {
      auto gz = logits.grad_buffer();
      for (std::size_t r = 0; r < g.size(); ++r) {
        gz[r * cols + runner_up[r]] += g[r];
        gz[r * cols + static_cast<std::size_t>(ys[r])] -= g[r];
      }
    });
  }
  return out;
}

std::vector<float> softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_rows: logits must be [B,C]");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto z = logits.data();
  std::vector<float> p(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    float mx = z[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, z[r * cols + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(static_cast<double>(z[r * cols + j] - mx));
    for (std::size_t j = 0; j < cols; ++j)
      p[r * cols + j] = static_cast<float>(std::exp(static_cast<double>(z[r * cols + j] - mx)) / total);
  }
  return p;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels, "cross_entropy");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto z = logits.data();
  std::vector<float> values(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    float mx = z[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, z[r * cols + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(static_cast<double>(z[r * cols + j] - mx));
    values[r] = static_cast<float>(std::log(total) + mx - z[r * cols + static_cast<std::size_t>(labels[r])]);
  }
  auto out = Tensor::from_data({rows}, std::move(values));
  check_finite(out, "cross_entropy");
  if (Tape::should_record({&logits})) {
    std::vector<int> ys(labels.begin(), labels.end());
    Tape::active()->record(out, [logits, ys = std::move(ys), cols](std::span<const float> g) mutable {
      auto p = softmax_rows(logits);
      auto gz = logits.grad_buffer();
      for (std::size_t r = 0; r < g.size(); ++r) {
        for (std::size_t j = 0; j < cols; ++j) gz[r * cols + j] += g[r] * p[r * cols + j];
        gz[r * cols + static_cast<std::size_t>(ys[r])] -= g[r];
      }
    });
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: logits must be [B,C]");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto z = logits.data();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j)
      if (z[r * cols + j] > z[r * cols + best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Network& net, const Tensor& x) { return argmax_rows(forward_logits(net, x.detach())); }

std::vector<float> correct_class_probability(const Network& net, const Tensor& x, std::span<const int> labels) {
  auto logits = forward_logits(net, x.detach());
  check_labels(logits, labels, "correct_class_probability");
  auto p = softmax_rows(logits);
  const std::size_t cols = logits.dim(1);
  std::vector<float> out(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) out[r] = p[r * cols + static_cast<std::size_t>(labels[r])];
  return out;
}

std::string digest_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void save_checkpoint(const Network& net, const std::filesystem::path& path, const std::string& digest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  out << "arch: " << net.arch_descriptor() << '\n';
  out << "classes: " << net.num_classes() << '\n';
  out << "params: " << net.parameter_count() << '\n';
  if (!digest.empty()) out << "digest: " << digest << '\n';
  out << '\n';
  std::vector<char> bytes;
  bytes.reserve(net.parameter_count() * 4);
  for (const auto& p : net.params()) {
    for (float v : p.value.data()) {
      const auto u = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xffu));
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::string arch, classes_s, params_s;
  std::string line;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line.empty()) {
      terminated = true;
      break;
    }
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw CheckpointError("malformed header line: " + line);
    const auto key = line.substr(0, colon), value = line.substr(colon + 2);
    if (key == "arch") {
      arch = value;
    } else if (key == "classes") {
      classes_s = value;
    } else if (key == "params") {
      params_s = value;
    } else if (key != "digest") {
      throw CheckpointError("unknown header key: " + key);
    }
  }
  if (!terminated) throw CheckpointError("checkpoint header not terminated by a blank line");
  if (arch.empty() || classes_s.empty() || params_s.empty()) {
    throw CheckpointError("checkpoint header needs arch, classes and params");
  }
  Network net = Network::from_descriptor(arch);
  std::size_t classes = 0, params = 0;
  try {
    classes = std::stoul(classes_s);
    params = std::stoul(params_s);
  } catch (const std::exception&) {
    throw CheckpointError("non-numeric classes/params in header");
  }
  if (classes != net.num_classes()) {
    throw CheckpointError("header declares " + std::to_string(classes) + " classes but the final layer has " +
                          std::to_string(net.num_classes()));
  }
  if (params != net.parameter_count()) {
    throw CheckpointError("header declares " + std::to_string(params) + " parameters but the architecture has " +
                          std::to_string(net.parameter_count()));
  }
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() != params * 4) {
    throw CheckpointError("payload size mismatch: expected " + std::to_string(params * 4) + " bytes, found " +
                          std::to_string(payload.size()));
  }
  std::size_t offset = 0;
  for (auto& p : net.params()) {
    for (auto& v : p.value.mutable_data()) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[offset + b])) << (8 * b);
      v = std::bit_cast<float>(u);
      offset += 4;
    }
  }
  return net;
}

}  // namespace lagrobust

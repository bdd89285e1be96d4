#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lagrobust/tensor.hpp"

namespace lagrobust {

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
};

struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct ReluLayer {};
struct FlattenLayer {};

using Layer = std::variant<DenseLayer, ConvLayer, ReluLayer, FlattenLayer>;

struct Parameter {
  std::string name;
  Tensor value;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feed-forward classifier: an ordered layer stack plus its named parameters.
///
/// Dense weights are stored [in, out] (y = x W + b); conv weights are
/// [out_ch, in_ch, k, k]. Parameters start at zero; call init_he() for the
/// usual random initialization. Copies share parameter storage; clone() makes
/// an independent network.
class Network {
 public:
  // `input_shape` is the per-sample shape: {features} or {C, H, W}.
  Network(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t num_classes() const { return num_classes_; }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Tensor& param(const std::string& name);
  std::size_t parameter_count() const;

  // Weights ~ N(0, 2 / fan_in), biases zero.
  void init_he(std::uint64_t seed);
  void zero_grad();

  // Independent copy of all parameters.
  Network clone() const;

  // Compact text form, e.g. "in=1x8x8;conv(1,4,3,1,1);relu;flatten;dense(256,3)".
  std::string arch_descriptor() const;
  static Network from_descriptor(const std::string& arch);

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::size_t num_classes_ = 0;
  std::vector<Parameter> params_;
};

// Two hidden ReLU layers.
Network make_mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t seed);
// conv(3x3, s1) -> relu -> conv(3x3, s2) -> relu -> flatten -> dense.
Network make_cnn(std::size_t channels, std::size_t side, std::size_t classes, std::uint64_t seed,
                 std::size_t width1 = 8, std::size_t width2 = 16);

enum class ParamGrad {
  kTrack,   // parameters participate in the tape (training)
  kFrozen,  // parameters are constants (attacks, evaluation)
};

/// Logits [B, num_classes] for a batch x[B, ...input_shape].
Tensor forward_logits(const Network& net, const Tensor& x, ParamGrad mode = ParamGrad::kFrozen);

// max_{j != y} z_j - z_y per row, shape [B]. Ties pick the lowest index.
Tensor margin_loss(const Tensor& logits, std::span<const int> labels);
// Softmax cross-entropy per row, shape [B].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

std::vector<float> softmax_rows(const Tensor& logits);
// Row-wise argmax; ties pick the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);
std::vector<int> predict(const Network& net, const Tensor& x);
std::vector<float> correct_class_probability(const Network& net, const Tensor& x, std::span<const int> labels);

void save_checkpoint(const Network& net, const std::filesystem::path& path, const std::string& digest = {});
Network load_checkpoint(const std::filesystem::path& path);

// Stable FNV-1a digest, hex encoded. Ties a checkpoint to the config that produced it.
std::string digest_hex(std::string_view text);

}  // namespace lagrobust

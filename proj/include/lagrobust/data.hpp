#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lagrobust/tensor.hpp"

namespace lagrobust {

class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labelled samples with inputs in [0,1]. `inputs` is [n, ...sample_shape].
struct Dataset {
  std::string name;
  std::string split;
  Tensor inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  // Per-sample foreground probability maps [n, H, W], when the generator knows them.
  std::optional<Tensor> masks;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  std::size_t sample_numel() const;

  // Throws DataFormatError when counts disagree, labels are out of range or
  // inputs leave [0,1].
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Tensor gather_inputs(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

// Reads one CIFAR-10 binary batch file.
Dataset load_cifar10_file(const std::filesystem::path& file);
// `path` may be a single batch file or the extracted directory; for a
// directory, split "train" reads data_batch_1..5.bin and "test" reads test_batch.bin.
Dataset load_cifar10_binary(const std::filesystem::path& path, const std::string& split = "train");
// Writes [n,3,32,32] inputs quantized to bytes, labels < 10.
void write_cifar10_file(const Dataset& data, const std::filesystem::path& file);

Dataset two_moons(std::size_t n, float noise_std, std::uint64_t seed);
Dataset gaussian_blobs(std::size_t n, std::size_t classes, std::size_t dim, std::uint64_t seed);

struct SyntheticImageOptions {
  std::size_t channels = 1;
  float noise_std = 0.05f;
  float min_amplitude = 0.08f;
  float max_amplitude = 0.4f;
};

/// Oriented low-frequency stripe textures inside a jittered disk, one
/// orientation per class, on a noisy mid-gray background. The disk's soft
/// support is returned as the foreground mask.
Dataset synthetic_images(std::size_t n, std::size_t classes, std::size_t side, std::uint64_t seed,
                         const SyntheticImageOptions& options = {});

// CSV with header `label,f0,f1,...`. Features outside [0,1] are clamped with a
// warning on stderr.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& data, const std::filesystem::path& path);

// Deterministic shuffle-split. Returns {train, test}.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed);

}  // namespace lagrobust

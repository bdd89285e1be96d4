#include "lagrobust/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

namespace lagrobust {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Per-column min-max rescale of an [n, d] buffer into [0,1].
void minmax_rescale(std::vector<float>& values, std::size_t n, std::size_t d) {
  for (std::size_t c = 0; c < d; ++c) {
    float lo = values[c], hi = values[c];
    for (std::size_t r = 0; r < n; ++r) {
      lo = std::min(lo, values[r * d + c]);
      hi = std::max(hi, values[r * d + c]);
    }
    const float span = hi - lo;
    for (std::size_t r = 0; r < n; ++r) {
      float& v = values[r * d + c];
      v = span > 0.0f ? (v - lo) / span : 0.5f;
    }
  }
}

}  // namespace

Shape Dataset::sample_shape() const {
  const auto& s = inputs.shape();
  return Shape(s.begin() + 1, s.end());
}

std::size_t Dataset::sample_numel() const { return shape_numel(sample_shape()); }

void Dataset::validate() const {
  if (!inputs.defined() || inputs.rank() < 2) throw DataFormatError(name + ": inputs must be [n, ...]");
  if (inputs.dim(0) != labels.size()) throw DataFormatError(name + ": input count differs from label count");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DataFormatError(name + ": label " + std::to_string(y) + " outside [0, classes)");
    }
  }
  for (float v : inputs.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DataFormatError(name + ": input value outside [0,1]");
  }
  if (masks) {
    if (masks->rank() != 3 || masks->dim(0) != size()) throw DataFormatError(name + ": mask stack shape");
  }
}

Tensor Dataset::gather_inputs(std::span<const std::size_t> indices) const {
  const std::size_t per = sample_numel();
  auto src = inputs.data();
  std::vector<float> out(indices.size() * per);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("sample index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  Shape shape = sample_shape();
  shape.insert(shape.begin(), indices.size());
  return Tensor::from_data(std::move(shape), std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.name = name;
  out.split = split;
  out.num_classes = num_classes;
  out.inputs = gather_inputs(indices);
  out.labels = gather_labels(indices);
  if (masks) {
    const std::size_t per = masks->numel() / masks->dim(0);
    std::vector<float> m(indices.size() * per);
    auto src = masks->data();
    for (std::size_t i = 0; i < indices.size(); ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                  m.begin() + static_cast<std::ptrdiff_t>(i * per));
    out.masks = Tensor::from_data({indices.size(), masks->dim(1), masks->dim(2)}, std::move(m));
  }
  return out;
}

Dataset load_cifar10_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataFormatError("cannot open CIFAR-10 batch: " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw DataFormatError(file.string() + ": empty CIFAR-10 batch");
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t whole = bytes.size() / kCifarRecordBytes;
    throw DataFormatError(file.string() + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of 3073; truncated record at offset " +
                          std::to_string(whole * kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset out;
  out.name = "cifar10";
  out.num_classes = 10;
  out.labels.resize(n);
  std::vector<float> pixels(n * 3072);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t offset = i * kCifarRecordBytes;
    const unsigned char label = bytes[offset];
    if (label >= 10) {
      throw DataFormatError(file.string() + ": label byte " + std::to_string(label) + " at offset " +
                            std::to_string(offset));
    }
    out.labels[i] = label;
    for (std::size_t p = 0; p < 3072; ++p) pixels[i * 3072 + p] = static_cast<float>(bytes[offset + 1 + p]) / 255.0f;
  }
  out.inputs = Tensor::from_data({n, 3, 32, 32}, std::move(pixels));
  return out;
}

Dataset load_cifar10_binary(const std::filesystem::path& path, const std::string& split) {
  if (std::filesystem::is_regular_file(path)) {
    auto d = load_cifar10_file(path);
    d.split = split;
    return d;
  }
  if (!std::filesystem::is_directory(path)) throw DataFormatError("CIFAR-10 path not found: " + path.string());
  std::vector<std::filesystem::path> files;
  if (split == "test") {
    files.push_back(path / "test_batch.bin");
  } else {
    for (int b = 1; b <= 5; ++b) {
      auto f = path / ("data_batch_" + std::to_string(b) + ".bin");
      if (std::filesystem::exists(f)) files.push_back(f);
    }
  }
  if (files.empty() || !std::filesystem::exists(files.front())) {
    throw DataFormatError("no CIFAR-10 " + split + " batch files in " + path.string());
  }
  std::vector<float> pixels;
  Dataset out;
  out.name = "cifar10";
  out.split = split;
  out.num_classes = 10;
  for (const auto& f : files) {
    auto part = load_cifar10_file(f);
    auto d = part.inputs.data();
    pixels.insert(pixels.end(), d.begin(), d.end());
    out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
  }
  out.inputs = Tensor::from_data({out.labels.size(), 3, 32, 32}, std::move(pixels));
  return out;
}

void write_cifar10_file(const Dataset& data, const std::filesystem::path& file) {
  if (data.sample_shape() != Shape{3, 32, 32}) throw DataFormatError("CIFAR-10 records must be 3x32x32");
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataFormatError("cannot write " + file.string());
  auto px = data.inputs.data();
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] >= 10) throw DataFormatError("CIFAR-10 label out of range");
    rec[0] = static_cast<unsigned char>(data.labels[i]);
    for (std::size_t p = 0; p < 3072; ++p) {
      const float v = std::clamp(px[i * 3072 + p], 0.0f, 1.0f);
      rec[1 + p] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
}

Dataset two_moons(std::size_t n, float noise_std, std::uint64_t seed) {
  require(n >= 2, "two_moons: need n >= 2");
  require(noise_std >= 0.0f, "two_moons: noise_std must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  const std::size_t n0 = (n + 1) / 2, n1 = n - n0;
  std::vector<float> xy(2 * n);
  std::vector<int> labels(n);
  auto arc_t = [](std::size_t i, std::size_t m) {
    return m > 1 ? std::numbers::pi_v<double> * static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const bool upper = i < n0;
    const double t = upper ? arc_t(i, n0) : arc_t(i - n0, n1);
    double x = upper ? std::cos(t) : 1.0 - std::cos(t);
    double y = upper ? std::sin(t) : 0.5 - std::sin(t);
    if (noise_std > 0.0f) {
      x += noise_std * noise(rng);
      y += noise_std * noise(rng);
    }
    xy[2 * i] = static_cast<float>(x);
    xy[2 * i + 1] = static_cast<float>(y);
    labels[i] = upper ? 0 : 1;
  }
  // Interleave classes so prefixes stay balanced.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<float> shuffled(2 * n);
  std::vector<int> shuffled_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled[2 * i] = xy[2 * order[i]];
    shuffled[2 * i + 1] = xy[2 * order[i] + 1];
    shuffled_labels[i] = labels[order[i]];
  }
  minmax_rescale(shuffled, n, 2);
  Dataset out;
  out.name = "two_moons";
  out.num_classes = 2;
  out.inputs = Tensor::from_data({n, 2}, std::move(shuffled));
  out.labels = std::move(shuffled_labels);
  return out;
}

Dataset gaussian_blobs(std::size_t n, std::size_t classes, std::size_t dim, std::uint64_t seed) {
  require(classes >= 2, "gaussian_blobs: need at least two classes");
  require(n >= classes, "gaussian_blobs: need n >= classes");
  require(dim >= 1, "gaussian_blobs: dim must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> center(-5.0f, 5.0f);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  std::vector<float> centers(classes * dim);
  for (auto& c : centers) c = center(rng);
  std::vector<float> values(n * dim);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    labels[i] = static_cast<int>(k);
    for (std::size_t d = 0; d < dim; ++d) values[i * dim + d] = centers[k * dim + d] + noise(rng);
  }
  minmax_rescale(values, n, dim);
  Dataset out;
  out.name = "gaussian_blobs";
  out.num_classes = classes;
  out.inputs = Tensor::from_data({n, dim}, std::move(values));
  out.labels = std::move(labels);
  return out;
}

Dataset synthetic_images(std::size_t n, std::size_t classes, std::size_t side, std::uint64_t seed,
                         const SyntheticImageOptions& opt) {
  require(classes >= 2, "synthetic_images: need at least two classes");
  require(n >= classes, "synthetic_images: need n >= classes");
  require(side >= 4, "synthetic_images: side must be at least 4");
  require(opt.channels >= 1, "synthetic_images: need at least one channel");
  require(opt.min_amplitude >= 0.0f && opt.max_amplitude >= opt.min_amplitude, "synthetic_images: bad amplitudes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::normal_distribution<float> noise(0.0f, 1.0f);

  const std::size_t plane = side * side;
  const double pi = std::numbers::pi_v<double>;
  const double radius = 0.36 * static_cast<double>(side);
  const double freq = 1.6 / static_cast<double>(side);  // cycles per pixel
  std::vector<float> values(n * opt.channels * plane);
  std::vector<float> masks(n * plane);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    labels[i] = static_cast<int>(k);
    const double theta = pi * static_cast<double>(k) / static_cast<double>(classes);
    const double phase = 2.0 * pi * unit(rng);
    const double amp = opt.min_amplitude + (opt.max_amplitude - opt.min_amplitude) * unit(rng);
    const double cx = 0.5 * static_cast<double>(side - 1) + (unit(rng) - 0.5) * 2.0;
    const double cy = 0.5 * static_cast<double>(side - 1) + (unit(rng) - 0.5) * 2.0;
    const double background = 0.35 + 0.3 * unit(rng);
    std::vector<double> gains(opt.channels);
    for (auto& g : gains) g = 0.7 + 0.3 * unit(rng);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        const double r = std::sqrt(dx * dx + dy * dy);
        // soft disk edge, one pixel wide
        const double p = std::clamp(radius + 0.5 - r, 0.0, 1.0);
        masks[i * plane + y * side + x] = static_cast<float>(p);
        const double stripe =
            std::cos(2.0 * pi * freq * (dx * std::cos(theta) + dy * std::sin(theta)) + phase);
        for (std::size_t c = 0; c < opt.channels; ++c) {
          double v = background + p * amp * gains[c] * stripe + opt.noise_std * noise(rng);
          values[(i * opt.channels + c) * plane + y * side + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  Dataset out;
  out.name = "synthetic_images";
  out.num_classes = classes;
  out.inputs = Tensor::from_data({n, opt.channels, side, side}, std::move(values));
  out.labels = std::move(labels);
  out.masks = Tensor::from_data({n, side, side}, std::move(masks));
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataFormatError(path.string() + ": empty CSV");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header[0] != "label") {
    throw DataFormatError(path.string() + ": header must be label,f0,f1,...");
  }
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] != "f" + std::to_string(c - 1)) throw DataFormatError(path.string() + ": bad header cell " + header[c]);
  }
  const std::size_t features = header.size() - 1;
  std::vector<float> values;
  std::vector<int> labels;
  bool clamped = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw DataFormatError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
    }
    auto parse = [&](const std::string& s) {
      char* end = nullptr;
      const float v = std::strtof(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
        throw DataFormatError(path.string() + ":" + std::to_string(line_no) + ": non-numeric cell '" + s + "'");
      }
      return v;
    };
    const float label = parse(cells[0]);
    if (label < 0.0f || label != std::floor(label)) {
      throw DataFormatError(path.string() + ":" + std::to_string(line_no) + ": invalid label " + cells[0]);
    }
    labels.push_back(static_cast<int>(label));
    for (std::size_t c = 1; c < cells.size(); ++c) {
      float v = parse(cells[c]);
      if (v < 0.0f || v > 1.0f) {
        clamped = true;
        v = std::clamp(v, 0.0f, 1.0f);
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) throw DataFormatError(path.string() + ": no data rows");
  if (clamped) std::cerr << "warning: " << path.string() << ": features clamped into [0,1]\n";
  Dataset out;
  out.name = path.stem().string();
  out.num_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  if (out.num_classes < 2) out.num_classes = 2;
  out.inputs = Tensor::from_data({labels.size(), features}, std::move(values));
  out.labels = std::move(labels);
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataFormatError("cannot write CSV: " + path.string());
  const std::size_t per = data.sample_numel();
  out << "label";
  for (std::size_t c = 0; c < per; ++c) out << ",f" << c;
  out << '\n';
  out << std::setprecision(9);
  auto v = data.inputs.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (std::size_t c = 0; c < per; ++c) out << ',' << v[i * per + c];
    out << '\n';
  }
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, "split_dataset: fraction must be in (0,1)");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(data.size())));
  require(n_test > 0 && n_test < data.size(), "split_dataset: split leaves an empty side");
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  auto tr = data.subset(train);
  auto te = data.subset(test);
  tr.split = "train";
  te.split = "test";
  return {std::move(tr), std::move(te)};
}

}  // namespace lagrobust

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "lagrobust/model.hpp"

namespace lagrobust {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lagrobust_model_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

Tensor logits(Shape s, std::vector<float> v) { return Tensor::from_data(std::move(s), std::move(v)); }

Tensor random_batch(std::size_t b, Shape sample, std::uint64_t seed) {
  Shape s{b};
  s.insert(s.end(), sample.begin(), sample.end());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(shape_numel(s));
  for (auto& x : v) x = u(rng);
  return Tensor::from_data(std::move(s), std::move(v));
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
  Network net({3}, {DenseLayer{3, 4}, ReluLayer{}, DenseLayer{4, 2}});
  auto z = forward_logits(net, random_batch(5, {3}, 1));
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, IdentityLayerCopiesOneHotInput) {
  Network net({3}, {DenseLayer{3, 3}});
  auto w = net.param("layer0.weight").mutable_data();
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0f;
  auto x = Tensor::from_data({1, 3}, {0.0f, 1.0f, 0.0f});
  auto z = forward_logits(net, x);
  EXPECT_EQ(std::vector<float>(z.data().begin(), z.data().end()), (std::vector<float>{0.0f, 1.0f, 0.0f}));
}

TEST(Forward, RejectsWrongInputShape) {
  auto net = make_mlp(3, 4, 2, 1);
  EXPECT_THROW(forward_logits(net, Tensor::zeros({2, 4})), ShapeError);
}

TEST(Forward, SoftmaxRowsSumToOne) {
  auto net = make_cnn(1, 8, 3, 2);
  auto p = softmax_rows(forward_logits(net, random_batch(6, {1, 8, 8}, 3)));
  for (std::size_t r = 0; r < 6; ++r) {
    const float s = std::accumulate(p.begin() + static_cast<long>(r * 3), p.begin() + static_cast<long>(r * 3 + 3), 0.0f);
    EXPECT_NEAR(s, 1.0f, 1e-5f);
  }
}

TEST(MarginLoss, HandValues) {
  std::vector<int> y0{0};
  EXPECT_FLOAT_EQ(margin_loss(logits({1, 3}, {2, 1, 0}), y0).item(), -1.0f);
  EXPECT_FLOAT_EQ(margin_loss(logits({1, 2}, {0, 0}), y0).item(), 0.0f);
  EXPECT_FLOAT_EQ(margin_loss(logits({1, 3}, {1, 3, 2}), y0).item(), 2.0f);
}

TEST(MarginLoss, RejectsOutOfRangeLabel) {
  std::vector<int> y{3};
  EXPECT_THROW(margin_loss(logits({1, 3}, {0, 0, 0}), y), std::invalid_argument);
}

TEST(CrossEntropy, UniformLogits) {
  std::vector<int> y{0};
  EXPECT_NEAR(cross_entropy(logits({1, 2}, {0, 0}), y).item(), std::log(2.0f), 1e-6f);
}

TEST(CrossEntropy, ConfidentLogits) {
  std::vector<int> y{0};
  const double expected = std::log1p(std::exp(-10.0));  // 4.5398899e-05
  EXPECT_NEAR(cross_entropy(logits({1, 2}, {10, 0}), y).item(), expected, 1e-9);
}

TEST(CrossEntropy, ShiftInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.0f, 3.0f);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> z(5), shifted(5);
    const float c = n(rng) * 10.0f;
    for (std::size_t j = 0; j < 5; ++j) {
      z[j] = n(rng);
      shifted[j] = z[j] + c;
    }
    std::vector<int> y{trial % 5};
    EXPECT_NEAR(cross_entropy(logits({1, 5}, z), y).item(), cross_entropy(logits({1, 5}, shifted), y).item(), 1e-5f);
  }
}

TEST(Probability, UniformAndSaturated) {
  for (float v : softmax_rows(logits({1, 4}, {0, 0, 0, 0}))) EXPECT_FLOAT_EQ(v, 0.25f);
  EXPECT_NEAR(softmax_rows(logits({1, 2}, {100, 0}))[0], 1.0f, 1e-6f);
}

TEST(Probability, CorrectClassValuesAreProbabilities) {
  auto net = make_mlp(4, 8, 3, 5);
  auto x = random_batch(20, {4}, 6);
  std::vector<int> y(20);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);
  for (float p : correct_class_probability(net, x, y)) {
    EXPECT_GE(p, 0.0f);
    EXPECT_LE(p, 1.0f);
  }
}

TEST(Argmax, TiesPickLowestIndex) {
  EXPECT_EQ(argmax_rows(logits({2, 3}, {1, 1, 0, 0, 2, 2})), (std::vector<int>{0, 1}));
}

TEST(Network, DescriptorRoundTrip) {
  auto net = make_cnn(3, 8, 5, 7);
  auto back = Network::from_descriptor(net.arch_descriptor());
  EXPECT_EQ(back.arch_descriptor(), net.arch_descriptor());
  EXPECT_EQ(back.parameter_count(), net.parameter_count());
  EXPECT_THROW(Network::from_descriptor("in=4;dense(3,2)"), CheckpointError);
  EXPECT_THROW(Network::from_descriptor("in=4;pool"), CheckpointError);
}

TEST(Network, CloneIsIndependent) {
  auto net = make_mlp(2, 4, 2, 8);
  auto copy = net.clone();
  copy.params()[0].value.mutable_data()[0] += 1.0f;
  EXPECT_NE(copy.params()[0].value.data()[0], net.params()[0].value.data()[0]);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto net = make_cnn(1, 6, 3, 9);
  const auto path = temp_path("rt.ckpt");
  save_checkpoint(net, path, "abc");
  auto back = load_checkpoint(path);
  ASSERT_EQ(back.params().size(), net.params().size());
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    auto a = net.params()[i].value.data(), b = back.params()[i].value.data();
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0) << net.params()[i].name;
  }
}

TEST(Checkpoint, TruncatedPayloadRejected) {
  auto net = make_mlp(2, 4, 2, 10);
  const auto path = temp_path("trunc.ckpt");
  save_checkpoint(net, path);
  fs::resize_file(path, fs::file_size(path) - 3);
  try {
    load_checkpoint(path);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("size mismatch"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, ClassCountMismatchRejected) {
  auto net = make_mlp(2, 4, 3, 11);
  const auto path = temp_path("classes.ckpt");
  save_checkpoint(net, path);
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("classes: 3");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 10, "classes: 4");
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Digest, StableFnv) {
  EXPECT_EQ(digest_hex(""), "cbf29ce484222325");
  EXPECT_EQ(digest_hex("a"), "af63dc4c8601ec8c");
}

}  // namespace
}  // namespace lagrobust

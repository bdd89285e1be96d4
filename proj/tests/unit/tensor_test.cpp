#include <cmath>
#include <thread>

#include <gtest/gtest.h>

#include "../support/gradcheck.hpp"
#include "lagrobust/ops.hpp"
#include "lagrobust/tensor.hpp"

namespace lagrobust {
namespace {

TEST(Ops, L2NormOfPythagoreanTriple) {
  auto x = Tensor::from_data({2}, {3.0f, 4.0f});
  EXPECT_FLOAT_EQ(ops::l2_norm(x, false).item(), 5.0f);
}

TEST(Ops, ReluZeroesNegatives) {
  auto y = ops::relu(Tensor::from_data({2}, {-1.0f, 2.0f}));
  EXPECT_EQ(y.data()[0], 0.0f);
  EXPECT_EQ(y.data()[1], 2.0f);
}

TEST(Ops, MatmulOfOnes) {
  auto c = ops::matmul(Tensor::full({2, 3}, 1.0f), Tensor::full({3, 2}, 1.0f));
  ASSERT_EQ(c.shape(), (Shape{2, 2}));
  for (float v : c.data()) EXPECT_EQ(v, 3.0f);
}

TEST(Ops, MatmulRejectsInnerMismatch) {
  EXPECT_THROW(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 2})), ShapeError);
}

TEST(Ops, AddRejectsShapeMismatch) {
  EXPECT_THROW(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST(Ops, NonFiniteResultRaises) {
  auto big = Tensor::full({2}, 3e38f);
  EXPECT_THROW(ops::add(big, big), NumericError);
}

TEST(Ops, PerSampleNormOfZeroRowHasZeroGradient) {
  Tape tape;
  auto x = Tensor::from_data({2, 2}, {0.0f, 0.0f, 3.0f, 4.0f}, true);
  auto n = ops::l2_norm(x, true);
  tape.backward(ops::sum(n));
  auto g = x.grad();
  EXPECT_EQ(g[0], 0.0f);
  EXPECT_EQ(g[1], 0.0f);
  EXPECT_NEAR(g[2], 0.6f, 1e-6);
  EXPECT_NEAR(g[3], 0.8f, 1e-6);
}

TEST(Backward, SumOfSquares) {
  Tape tape;
  auto x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  tape.backward(ops::sum(ops::mul(x, x)));
  EXPECT_FLOAT_EQ(x.grad()[0], 2.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 4.0f);
}

TEST(Backward, NormGradientIsUnitDirection) {
  Tape tape;
  auto x = Tensor::from_data({2}, {3.0f, 4.0f}, true);
  tape.backward(ops::l2_norm(x, false));
  EXPECT_NEAR(x.grad()[0], 0.6f, 1e-6);
  EXPECT_NEAR(x.grad()[1], 0.8f, 1e-6);
}

TEST(Backward, ReusedOperandAccumulates) {
  Tape tape;
  auto x = Tensor::from_data({1}, {3.0f}, true);
  auto y = ops::add(ops::mul(x, x), ops::scalar_mul(x, 2.0f));
  tape.backward(ops::sum(y));
  EXPECT_FLOAT_EQ(x.grad()[0], 8.0f);
}

TEST(Backward, LeafGradientsAccumulateAcrossCalls) {
  auto x = Tensor::from_data({1}, {2.0f}, true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(ops::sum(ops::mul(x, x)));
  }
  EXPECT_FLOAT_EQ(x.grad()[0], 8.0f);
  x.zero_grad();
  EXPECT_FLOAT_EQ(x.grad()[0], 0.0f);
}

TEST(Backward, NoTapeRecordsNothing) {
  auto x = Tensor::from_data({1}, {2.0f}, true);
  auto y = ops::mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, NestedTapesAreIndependent) {
  auto x = Tensor::from_data({1}, {2.0f}, true);
  Tape outer;
  auto a = ops::mul(x, x);
  {
    Tape inner;
    auto b = ops::scalar_mul(x, 5.0f);
    inner.backward(ops::sum(b));
  }
  EXPECT_FLOAT_EQ(x.grad()[0], 5.0f);
  outer.backward(ops::sum(a));
  EXPECT_FLOAT_EQ(x.grad()[0], 9.0f);
}

TEST(Backward, TapesAreThreadLocal) {
  auto x = Tensor::from_data({1}, {1.0f}, true);
  Tape tape;
  bool recorded_elsewhere = true;
  std::thread t([&] {
    auto y = Tensor::from_data({1}, {4.0f}, true);
    recorded_elsewhere = ops::mul(y, y).requires_grad();
  });
  t.join();
  EXPECT_FALSE(recorded_elsewhere);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tensor, DetachSharesStorageWithoutGrad) {
  auto x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  auto d = x.detach();
  EXPECT_TRUE(d.same_storage(x));
  EXPECT_FALSE(d.requires_grad());
  auto c = x.clone();
  EXPECT_FALSE(c.same_storage(x));
}

class GradCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradCheck, MatchesCentralDifferences) {
  for (const auto& c : testing::gradcheck_cases(GetParam())) {
    const auto r = testing::gradcheck(c);
    EXPECT_LT(r.rel_error, 1e-3) << c.name << " seed " << GetParam();
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradCheck, ::testing::Range<std::uint64_t>(1, 7));

TEST(GradCheck, CoversAtLeastOneHundredInstances) {
  std::size_t n = 0;
  for (std::uint64_t s = 1; s < 7; ++s) n += testing::gradcheck_cases(s).size();
  EXPECT_GE(n, 100u);
}

}  // namespace
}  // namespace lagrobust

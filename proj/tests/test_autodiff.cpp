#include <gtest/gtest.h>

#include <cmath>

#include "mra/autodiff.hpp"
#include "mra/errors.hpp"
#include "support.hpp"

namespace ad = mra::ad;
using ad::Tensor;
using ad::Var;
using mra::testing::gradcheck;

namespace {

Tensor random_tensor(ad::Shape shape, mra::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST(Autodiff, MatmulValues) {
  ad::Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor::matrix(2, 1, {5, 6}));
  const Tensor& c = ad::matmul(a, b).value();
  EXPECT_EQ(c.shape(), (ad::Shape{2, 1}));
  EXPECT_FLOAT_EQ(c[0], 17.0f);
  EXPECT_FLOAT_EQ(c[1], 39.0f);
}

TEST(Autodiff, ShapeMismatchThrows) {
  ad::Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  EXPECT_THROW(ad::matmul(a, b), mra::DimensionError);
  EXPECT_THROW(ad::add(a, tape.constant(Tensor({3, 2}))), mra::DimensionError);
}

TEST(Autodiff, BackwardIsPure) {
  ad::Tape tape;
  mra::Rng rng(3);
  Var w = tape.leaf(random_tensor({3, 2}, rng));
  Var x = tape.constant(random_tensor({4, 3}, rng));
  Var loss = ad::sum(ad::tanh(ad::matmul(x, w)));
  const Tensor g1 = tape.backward(loss)[w];
  const Tensor g2 = tape.backward(loss)[w];
  EXPECT_EQ(g1, g2);
}

TEST(Autodiff, UnusedLeafGetsZeros) {
  ad::Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  Var b = tape.leaf(Tensor::vector({3, 4}));
  auto g = tape.backward(ad::sum(a));
  EXPECT_EQ(g[b], Tensor({2}));
}

TEST(Autodiff, DetachBlocksGradient) {
  ad::Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  auto g = tape.backward(ad::sum(ad::mul(ad::detach(a), a)));
  EXPECT_FLOAT_EQ(g[a][0], 1.0f);
  EXPECT_FLOAT_EQ(g[a][1], 2.0f);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  ad::Tape tape;
  mra::Rng rng(5);
  Var x = tape.constant(random_tensor({6, 7}, rng, -30, 30));
  const Tensor& p = ad::softmax(x, 1).value();
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int j = 0; j < 7; ++j) s += p.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Autodiff, LogSoftmaxStableForLargeLogits) {
  ad::Tape tape;
  Var x = tape.constant(Tensor::matrix(1, 2, {1000.0f, 0.0f}));
  const Tensor& l = ad::log_softmax(x, 1).value();
  EXPECT_FLOAT_EQ(l[0], 0.0f);
  EXPECT_FLOAT_EQ(l[1], -1000.0f);
}

TEST(Autodiff, GroupOpsRejectNonPositiveGroups) {
  ad::Tape tape;
  Var q = tape.constant(Tensor({2, 3}));
  Var k = tape.constant(Tensor({0, 3}));
  EXPECT_THROW(ad::group_dot(q, k, 0), mra::DimensionError);
}

struct OpCase {
  const char* name;
  std::function<Var(ad::Tape&, const std::vector<Var>&)> f;
  std::vector<ad::Shape> shapes;
  double lo = -1.0, hi = 1.0;
};

class OpGradient : public ::testing::TestWithParam<int> {};

static std::vector<OpCase> op_cases() {
  return {
      {"matmul", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::matmul(v[0], v[1]))); }, {{3, 4}, {4, 2}}},
      {"add_sub_mul", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::mul(ad::add(v[0], v[1]), ad::sub(v[0], v[1]))); }, {{2, 3}, {2, 3}}},
      {"scale_shift", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::square(ad::add_scalar(ad::scale(v[0], 1.5f), 0.3f))); }, {{5}}},
      {"neg_exp", [](ad::Tape&, const std::vector<Var>& v) { return ad::mean(ad::exp(ad::neg(v[0]))); }, {{2, 2}}},
      {"log", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::log(v[0])); }, {{4}}, 0.5, 2.0},
      {"add_row", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::add_row(v[0], v[1]))); }, {{3, 2}, {2}}},
      {"mul_col", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::mul_col(v[0], v[1]))); }, {{3, 2}, {3, 1}}},
      {"relu", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::square(ad::relu(v[0]))); }, {{6}}, 0.2, 1.0},
      {"softmax", [](ad::Tape& t, const std::vector<Var>& v) {
         return ad::sum(ad::mul(ad::softmax(v[0], 1), t.constant(Tensor::matrix(2, 3, {1, -2, 3, 0.5f, 2, -1}))));
       }, {{2, 3}}},
      {"softmax_axis0", [](ad::Tape& t, const std::vector<Var>& v) {
         return ad::sum(ad::mul(ad::softmax(v[0], 0), t.constant(Tensor::matrix(2, 3, {1, -2, 3, 0.5f, 2, -1}))));
       }, {{2, 3}}},
      {"log_softmax", [](ad::Tape& t, const std::vector<Var>& v) {
         return ad::sum(ad::mul(ad::log_softmax(v[0], 1), t.constant(Tensor::matrix(2, 3, {1, 0, 0, 0, 0.3f, 0.7f}))));
       }, {{2, 3}}},
      {"sum_cols", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::square(ad::sum_cols(v[0]))); }, {{3, 4}}},
      {"concat_slice", [](ad::Tape&, const std::vector<Var>& v) {
         Var parts[] = {v[0], v[1]};
         Var c = ad::concat_cols(parts);
         return ad::sum(ad::mul(ad::slice_cols(c, 1, 3), ad::slice_cols(c, 0, 3)));
       }, {{2, 2}, {2, 3}}},
      {"slice_rows", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::square(ad::slice_rows(v[0], 1, 2))); }, {{4, 2}}},
      {"repeat_rows", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::mul(ad::repeat_rows(v[0], 3), v[1]))); }, {{2, 2}, {6, 2}}},
      {"outer_rows", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::outer_rows(v[0], v[1]))); }, {{3, 2}, {3, 4}}},
      {"group_dot", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::group_dot(v[0], v[1], 3))); }, {{2, 4}, {6, 4}}},
      {"group_dot_softmax", [](ad::Tape& t, const std::vector<Var>& v) {
         return ad::sum(ad::mul(ad::softmax(ad::group_dot(v[0], v[1], 3), 1), t.constant(Tensor::matrix(2, 3, {1, 2, 3, -1, 0, 1}))));
       }, {{2, 4}, {6, 4}}},
      {"group_weighted_sum", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::group_weighted_sum(v[0], v[1], 3))); }, {{2, 3}, {6, 4}}},
      {"reshape", [](ad::Tape&, const std::vector<Var>& v) { return ad::sum(ad::tanh(ad::matmul(ad::reshape(v[0], {2, 3}), v[1]))); }, {{6}, {3, 1}}},
  };
}

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const auto cases = op_cases();
  const OpCase& oc = cases.at(static_cast<std::size_t>(GetParam()));
  mra::Rng rng(100 + static_cast<std::uint64_t>(GetParam()));
  std::vector<Tensor> inputs;
  for (const auto& s : oc.shapes) inputs.push_back(random_tensor(s, rng, oc.lo, oc.hi));
  EXPECT_LT(gradcheck(oc.f, inputs), 1e-3) << oc.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 20));

TEST(Autodiff, GumbelHardIsOneHotWithSoftGradient) {
  ad::Tape tape;
  mra::Rng rng(9);
  Var logits = tape.leaf(Tensor::matrix(4, 3, {0.1f, 0.5f, -0.2f, 1, 0, 0, 0, 0, 0, 2, 2, 2}));
  mra::Rng r1 = rng, r2 = rng;
  Var hard = ad::gumbel_softmax(logits, 0.5f, true, r1);
  Var soft = ad::gumbel_softmax(logits, 0.5f, false, r2);
  for (int i = 0; i < 4; ++i) {
    float s = 0;
    int hot = -1;
    float best = -1;
    for (int j = 0; j < 3; ++j) {
      s += hard.value().at(i, j);
      EXPECT_TRUE(hard.value().at(i, j) == 0.0f || hard.value().at(i, j) == 1.0f);
      if (soft.value().at(i, j) > best) best = soft.value().at(i, j), hot = j;
    }
    EXPECT_EQ(s, 1.0f);
    EXPECT_EQ(hard.value().at(i, hot), 1.0f);
  }
  Tensor w = Tensor::matrix(4, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 1, 2});
  auto gh = tape.backward(ad::sum(ad::mul(hard, tape.constant(w))))[logits];
  auto gs = tape.backward(ad::sum(ad::mul(soft, tape.constant(w))))[logits];
  EXPECT_EQ(gh, gs);
}

TEST(Autodiff, GumbelSoftmaxFrequenciesFollowLogits) {
  ad::Tape tape;
  mra::Rng rng(11);
  const std::vector<double> p{0.2, 0.3, 0.5};
  Var logits = tape.constant(Tensor({1, 3}, std::vector<float>{std::log(0.2f), std::log(0.3f), std::log(0.5f)}));
  std::vector<int> counts(3, 0);
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const Tensor& h = ad::gumbel_softmax(logits, 1.0f, true, rng).value();
    for (int j = 0; j < 3; ++j) counts[static_cast<std::size_t>(j)] += h[static_cast<std::size_t>(j)] == 1.0f;
  }
  for (int j = 0; j < 3; ++j) {
    const double sd = std::sqrt(p[j] * (1 - p[j]) / n);
    EXPECT_NEAR(counts[static_cast<std::size_t>(j)] / double(n), p[j], 4 * sd);
  }
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracle.hpp"
#include "osdg/error.hpp"
#include "osdg/losses.hpp"

using namespace osdg;
using namespace osdg::losses;

namespace {

const double kLn2 = std::numbers::ln2;

// Binary logits that realise the requested p(1) per head: (log p, log(1-p)).
Tensor<double> logits_for(const std::vector<std::vector<double>>& p1) {
  const int B = static_cast<int>(p1.size()), K = static_cast<int>(p1[0].size());
  Tensor<double> t({B, K, 2});
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      t.at(b, k, 0) = std::log(p1[b][k]);
      t.at(b, k, 1) = std::log1p(-p1[b][k]);
    }
  return t;
}

oracle::Probs to_probs(const Tensor<double>& logits) {
  return oracle::binary_probs(logits.storage(), logits.dim(0), logits.dim(1));
}

std::vector<std::vector<oracle::LD>> rows(const Tensor<double>& t) {
  std::vector<std::vector<oracle::LD>> out(t.dim(0), std::vector<oracle::LD>(t.dim(1)));
  for (int b = 0; b < t.dim(0); ++b)
    for (int k = 0; k < t.dim(1); ++k) out[b][k] = t.at(b, k);
  return out;
}

}  // namespace

TEST(BinaryProbs, ClosedForms) {
  const auto p = binary_probs(Tensor<double>({1, 2, 2}, {0.0, 0.0, std::log(3.0), 0.0}));
  EXPECT_DOUBLE_EQ(p.at(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p.at(0, 0, 1), 0.5);
  EXPECT_NEAR(p.at(0, 1, 0), 0.75, 1e-15);
  EXPECT_NEAR(p.at(0, 1, 1), 0.25, 1e-15);
}

TEST(BinaryProbs, PairsSumToOne) {
  std::mt19937_64 rng(1);
  const auto v = oracle::random_vector(5 * 4 * 2, rng, 20.0);
  const auto p = binary_probs(Tensor<double>({5, 4, 2}, v));
  for (int b = 0; b < 5; ++b)
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(p.at(b, k, 0) + p.at(b, k, 1), 1.0, 1e-12);
}

TEST(CrossEntropy, Cases) {
  const std::vector<int> y = {2};
  EXPECT_LT(ce_loss(Tensor<double>({1, 4}, {0, 0, 50, 0}), y), 1e-12);
  EXPECT_NEAR(ce_loss(Tensor<double>({1, 4}), y), std::log(4.0), 1e-12);
  const std::vector<int> bad = {4};
  EXPECT_THROW(ce_loss(Tensor<double>({1, 4}), bad), DataError);
  const std::vector<int> neg = {-1};
  EXPECT_THROW(ce_loss(Tensor<double>({1, 4}), neg), DataError);
}

TEST(CrossEntropy, MatchesLogSumExpOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> lab(0, 4);
  for (int t = 0; t < 50; ++t) {
    const Tensor<double> lg({6, 5}, oracle::random_vector(30, rng, 4.0));
    std::vector<int> y(6);
    for (auto& v : y) v = lab(rng);
    EXPECT_NEAR(ce_loss(lg, y), static_cast<double>(oracle::ce(rows(lg), y)), 1e-10);
  }
}

TEST(Distillation, HandEvaluatedScalar) {
  const Tensor<double> teacher({1, 2, 1, 1}, {0.0, 0.0});
  const Tensor<double> student({1, 2, 1, 1}, {0.0, std::log(3.0)});
  EXPECT_NEAR(kd_loss(student, teacher, 1.0), 0.5 * kLn2 + 0.5 * std::log(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(kd_loss(student, teacher, 1.0), 0.1438, 1e-4);
}

TEST(Distillation, ZeroForIdenticalAndNonNegative) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    const Tensor<double> a({2, 5, 3, 3}, oracle::random_vector(90, rng, 3.0));
    const Tensor<double> b({2, 5, 3, 3}, oracle::random_vector(90, rng, 3.0));
    EXPECT_EQ(kd_loss(a, a, 1.0), 0.0);
    EXPECT_GE(kd_loss(a, b, 0.5), 0.0);
    EXPECT_NEAR(kd_loss(a, b, 2.0), static_cast<double>(oracle::kd(a.storage(), b.storage(), 2, 5, 3, 3, 2.0)), 1e-10);
  }
}

TEST(Ova, ClosedForms) {
  // Perfect separation.
  EXPECT_NEAR(ova_loss(binary_probs(logits_for({{1 - 1e-15, 1e-15, 1e-15}})), std::vector<int>{0}), 0.0, 1e-7);
  // p_y(1) = 0.5 and hardest negative p(0) = 0.5.
  EXPECT_NEAR(ova_loss(binary_probs(logits_for({{0.5, 0.5, 0.1}})), std::vector<int>{0}), 2 * kLn2, 1e-7);
}

TEST(Ova, HardestNegativeSelection) {
  // y = 0; head 1 has p(0) = 0.9 and head 2 has p(0) = 0.3, so head 2 is used.
  const auto p = binary_probs(logits_for({{0.8, 0.1, 0.7}}));
  const double expected = -std::log(0.8 + kProbEps) - std::log(0.3 + kProbEps);
  EXPECT_NEAR(ova_loss(p, std::vector<int>{0}), expected, 1e-9);
  // Moving the non-selected head without changing the argmin leaves the loss alone.
  const auto q = binary_probs(logits_for({{0.8, 0.4, 0.7}}));
  EXPECT_NEAR(ova_loss(q, std::vector<int>{0}), expected, 1e-9);
}

TEST(Ova, MatchesLoopOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> lab(0, 3);
  for (int t = 0; t < 50; ++t) {
    const Tensor<double> lg({5, 4, 2}, oracle::random_vector(40, rng, 3.0));
    std::vector<int> y(5);
    for (auto& v : y) v = lab(rng);
    EXPECT_NEAR(ova_loss(binary_probs(lg), y), static_cast<double>(oracle::ova(to_probs(lg), y)), 1e-9);
  }
}

TEST(Eova, ClosedForms) {
  const auto one = binary_probs(logits_for({{1 - 1e-15, 1e-15}}));
  EXPECT_NEAR(eova_loss(one, one, std::vector<int>{0}), 0.0, 1e-7);
  const auto half = binary_probs(logits_for({{0.5, 0.5}}));
  EXPECT_NEAR(eova_loss(half, half, std::vector<int>{0}), 2 * kLn2, 1e-7);
}

TEST(Eova, IndependentArgmins) {
  // Edge view: hardest negative is head 1; image view: head 2.
  const auto edge = binary_probs(logits_for({{0.6, 0.8, 0.2}}));
  const auto img = binary_probs(logits_for({{0.6, 0.1, 0.9}}));
  const double expected = -std::log(0.6 + kProbEps) - 0.5 * std::log(0.2 + kProbEps) - 0.5 * std::log(0.1 + kProbEps);
  EXPECT_NEAR(eova_loss(edge, img, std::vector<int>{0}), expected, 1e-9);
}

TEST(Eova, MatchesLoopOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> lab(0, 3);
  for (int t = 0; t < 50; ++t) {
    const Tensor<double> le({5, 4, 2}, oracle::random_vector(40, rng, 3.0));
    const Tensor<double> li({5, 4, 2}, oracle::random_vector(40, rng, 3.0));
    std::vector<int> y(5);
    for (auto& v : y) v = lab(rng);
    EXPECT_NEAR(eova_loss(binary_probs(le), binary_probs(li), y),
                static_cast<double>(oracle::eova(to_probs(le), to_probs(li), y)), 1e-9);
  }
}

TEST(Ova, FiniteForExtremeLogits) {
  const Tensor<double> lg({1, 3, 2}, {-800, 800, 800, -800, 0, 0});
  EXPECT_TRUE(std::isfinite(ova_loss(binary_probs(lg), std::vector<int>{0})));
  EXPECT_TRUE(std::isfinite(eova_loss(binary_probs(lg), binary_probs(lg), std::vector<int>{0})));
}

TEST(TotalLoss, Identity) {
  const auto l = total_loss(1.0, 2.0, 3.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(l.total, 5.0);
  EXPECT_DOUBLE_EQ(l.ce, 1.0);
  EXPECT_DOUBLE_EQ(l.eova, 2.0);
  EXPECT_DOUBLE_EQ(l.kd, 3.0);
  EXPECT_DOUBLE_EQ(total_loss(1.7, 2.0, 3.0, 0.0, 0.0).total, 1.7);
  EXPECT_DOUBLE_EQ(total_loss(0, 0, 0, 1.0, 1.0).total, 0.0);
}

TEST(TotalLoss, NonFiniteComponentAborts) {
  EXPECT_THROW(total_loss(std::nan(""), 0, 0, 1, 1), NumericError);
  EXPECT_THROW(total_loss(0, INFINITY, 0, 1, 1), NumericError);
  EXPECT_THROW(total_loss(0, 0, -INFINITY, 1, 1), NumericError);
}

// The differentiable versions must agree with the plain ones.
TEST(DifferentiableLosses, ForwardValuesAgree) {
  std::mt19937_64 rng(6);
  const std::vector<int> y = {1, 0, 3};
  const Tensor<double> lg({3, 4}, oracle::random_vector(12, rng));
  EXPECT_NEAR(ce_loss(ag::Var<double>::constant(lg), y).value()[0], ce_loss(lg, y), 1e-14);
  const Tensor<double> s({3, 4, 2, 2}, oracle::random_vector(48, rng)), t({3, 4, 2, 2}, oracle::random_vector(48, rng));
  EXPECT_NEAR(kd_loss(ag::Var<double>::constant(s), t, 0.7).value()[0], kd_loss(s, t, 0.7), 1e-14);
  const Tensor<double> b1({3, 4, 2}, oracle::random_vector(24, rng)), b2({3, 4, 2}, oracle::random_vector(24, rng));
  EXPECT_NEAR(ova_loss(ag::Var<double>::constant(b1), y).value()[0], ova_loss(binary_probs(b1), y), 1e-14);
  EXPECT_NEAR(eova_loss(ag::Var<double>::constant(b1), ag::Var<double>::constant(b2), y).value()[0],
              eova_loss(binary_probs(b1), binary_probs(b2), y), 1e-14);
}

namespace {

// Central differences of f with respect to every entry of x.
template <typename F>
std::vector<double> numeric_grad(Tensor<double> x, F f, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    x[i] = v + h;
    const double up = f(x);
    x[i] = v - h;
    const double dn = f(x);
    x[i] = v;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

void expect_grad_close(const Tensor<double>& analytic, const std::vector<double>& numeric) {
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < numeric.size(); ++i)
    EXPECT_NEAR(analytic[i], numeric[i], 1e-6 + 1e-5 * std::abs(numeric[i])) << "coordinate " << i;
}

}  // namespace

TEST(DifferentiableLosses, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const std::vector<int> y = {2, 0};
  {
    const Tensor<double> lg({2, 3}, oracle::random_vector(6, rng));
    auto x = ag::Var<double>::leaf(lg);
    ag::backward(ce_loss(x, y));
    expect_grad_close(x.grad(), numeric_grad(lg, [&](const Tensor<double>& t) { return ce_loss(t, y); }));
  }
  {
    const Tensor<double> s({2, 3, 2, 2}, oracle::random_vector(24, rng)), t({2, 3, 2, 2}, oracle::random_vector(24, rng));
    auto x = ag::Var<double>::leaf(s);
    ag::backward(kd_loss(x, t, 0.8));
    expect_grad_close(x.grad(), numeric_grad(s, [&](const Tensor<double>& v) { return kd_loss(v, t, 0.8); }));
  }
  {
    const Tensor<double> b({2, 3, 2}, oracle::random_vector(12, rng));
    auto x = ag::Var<double>::leaf(b);
    ag::backward(ova_loss(x, y));
    expect_grad_close(x.grad(), numeric_grad(b, [&](const Tensor<double>& v) { return ova_loss(binary_probs(v), y); }));
  }
  {
    const Tensor<double> e({2, 3, 2}, oracle::random_vector(12, rng)), i({2, 3, 2}, oracle::random_vector(12, rng));
    auto xe = ag::Var<double>::leaf(e), xi = ag::Var<double>::leaf(i);
    ag::backward(eova_loss(xe, xi, y));
    expect_grad_close(xe.grad(), numeric_grad(e, [&](const Tensor<double>& v) {
                        return eova_loss(binary_probs(v), binary_probs(i), y);
                      }));
    expect_grad_close(xi.grad(), numeric_grad(i, [&](const Tensor<double>& v) {
                        return eova_loss(binary_probs(e), binary_probs(v), y);
                      }));
  }
}

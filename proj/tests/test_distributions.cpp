#include <cmath>
#include <numbers>

#include "support.hpp"

namespace ncsn {
namespace {

using test::rel_err;

constexpr double kLog2Pi = 1.8378770664093453;

TEST(Mixture, ValidatesInvariants) {
  const Tensor m = Tensor::matrix({{0, 0}, {1, 1}});
  EXPECT_THROW(IsotropicGaussianMixture({0.5, 0.6}, m, {1, 1}), Error);
  EXPECT_THROW(IsotropicGaussianMixture({1.0, 0.0}, m, {1, 1}), Error);
  EXPECT_THROW(IsotropicGaussianMixture({0.5, 0.5}, m, {1, 0}), Error);
  EXPECT_THROW(IsotropicGaussianMixture({0.5, 0.5}, m, {1}), ShapeError);
  EXPECT_NO_THROW(IsotropicGaussianMixture({0.5, 0.5}, m, {1, 2}));
}

TEST(Mixture, SampleMeanOfStandardNormal) {
  Rng rng(1);
  const Tensor x = IsotropicGaussianMixture::standard_normal(2).sample(100000, rng);
  for (std::size_t d = 0; d < 2; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, d);
    EXPECT_NEAR(mean / 1e5, 0.0, 0.02);
  }
}

TEST(Mixture, TwoModeFractionNearHeavyMode) {
  Rng rng(2);
  const auto dist = IsotropicGaussianMixture::two_mode();
  const Tensor x = dist.sample(100000, rng);
  const auto w = mode_weight(x, dist.means());
  EXPECT_GE(w[1], 0.79);
  EXPECT_LE(w[1], 0.81);
}

TEST(Mixture, SamplingIsDeterministic) {
  const auto dist = IsotropicGaussianMixture::two_mode();
  Rng a(3), b(3);
  EXPECT_TRUE(dist.sample(1, a).identical(dist.sample(1, b)));
  EXPECT_THROW(dist.sample(0, a), Error);
}

TEST(Mixture, LogDensityExamples) {
  const auto n2 = IsotropicGaussianMixture::standard_normal(2);
  EXPECT_NEAR(n2.log_density(Tensor::vector({0, 0})), -kLog2Pi, 1e-12);
  // Both modes of the two-mode mixture are at squared distance 50 from the origin.
  EXPECT_NEAR(IsotropicGaussianMixture::two_mode().log_density(Tensor::vector({0, 0})), -25.0 - kLog2Pi, 1e-12);
  const IsotropicGaussianMixture one({1.0}, Tensor::matrix({{1, 2, 3}}), {0.5});
  EXPECT_NEAR(one.log_density(Tensor::vector({1, 2, 3})), -1.5 * std::log(2 * std::numbers::pi * 0.5), 1e-12);
}

TEST(Mixture, LogDensityFarFromModesStaysFinite) {
  const double lp = IsotropicGaussianMixture::two_mode().log_density(Tensor::vector({60, -60}));
  EXPECT_TRUE(std::isfinite(lp));
  EXPECT_LT(lp, -3000.0);
}

TEST(Mixture, ScoreExamples) {
  const Tensor s = IsotropicGaussianMixture::standard_normal(2).score(Tensor::vector({1, 0}));
  EXPECT_DOUBLE_EQ(s[0], -1.0);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
  const Tensor s2 = IsotropicGaussianMixture::two_mode().score(Tensor::vector({0, 0}));
  EXPECT_NEAR(s2[0], 3.0, 1e-12);
  EXPECT_NEAR(s2[1], 3.0, 1e-12);
  const IsotropicGaussianMixture one({1.0}, Tensor::matrix({{4, -2}}), {3.0});
  const Tensor at_mean = one.score(Tensor::vector({4, -2}));
  for (double v : at_mean.values()) EXPECT_EQ(v, 0.0);
}

// Central difference of log_density along each axis.
Tensor fd_score(const IsotropicGaussianMixture& d, const Tensor& x, double h = 1e-5) {
  Tensor g(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) {
    Tensor xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (d.log_density(xp) - d.log_density(xm)) / (2 * h);
  }
  return g;
}

TEST(Mixture, ScoreMatchesFiniteDifferencesRawAndPerturbed) {
  Rng rng(4);
  const auto dist = IsotropicGaussianMixture::two_mode();
  for (const auto& d : {dist, dist.perturb(1.0), dist.perturb(10.0)}) {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Tensor x = rng.uniform_tensor(Shape(2), -8, 8);
      const Tensor s = d.score(x), g = fd_score(d, x);
      // The difference quotient of a log density near -50 carries ~5e-10 of
      // rounding, so the relative error is floored at |s| = 1e-3.
      for (std::size_t k = 0; k < 2; ++k)
        worst = std::max(worst, std::abs(s[k] - g[k]) / std::max(std::abs(s[k]), 1e-3));
    }
    EXPECT_LT(worst, 1e-6);
  }
}

TEST(Mixture, ScoreBatchMatchesRows) {
  Rng rng(5);
  const auto dist = IsotropicGaussianMixture::two_mode();
  const Tensor x = rng.normal_tensor(Shape(7, 2), 4.0);
  const Tensor s = dist.score_batch(x);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_TRUE(s.row_tensor(i).identical(dist.score(x.row(i))));
}

TEST(Mixture, PerturbExamples) {
  const auto dist = IsotropicGaussianMixture::two_mode();
  const auto same = dist.perturb(0.0);
  EXPECT_EQ(same.variances(), dist.variances());
  EXPECT_EQ(same.weights(), dist.weights());
  EXPECT_TRUE(same.means().identical(dist.means()));
  const IsotropicGaussianMixture n({1.0}, Tensor::matrix({{3, 3}}), {1.0});
  EXPECT_EQ(n.perturb(1.0).variances(), std::vector<double>{2.0});
  EXPECT_EQ(dist.perturb(10.0).variances(), (std::vector<double>{101.0, 101.0}));
  EXPECT_THROW(dist.perturb(-1.0), Error);
  const auto p = dist.perturb(10.0);
  const Tensor s = p.score(Tensor::vector({0, 0})), g = fd_score(p, Tensor::vector({0, 0}));
  for (std::size_t k = 0; k < 2; ++k) EXPECT_LT(rel_err(s[k], g[k]), 1e-6);
}

TEST(Mixture, PerturbComposes) {
  const auto dist = IsotropicGaussianMixture::two_mode();
  // Values chosen so that a^2 + b^2 is exact in binary.
  const double a = 3.0, b = 4.0;
  EXPECT_EQ(dist.perturb(a).perturb(b).variances(), dist.perturb(std::sqrt(a * a + b * b)).variances());
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(0, 5), y = rng.uniform(0, 5);
    const auto lhs = dist.perturb(x).perturb(y).variances();
    const auto rhs = dist.perturb(std::sqrt(x * x + y * y)).variances();
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(lhs[k], rhs[k], 1e-12 * rhs[k]);
  }
}

TEST(Conditional, SymmetricPointGivesEqualWeights) {
  const IsotropicGaussianMixture d({0.5, 0.5}, Tensor::matrix({{-2, 1}, {2, -1}}), {1, 1});
  const auto c = d.conditional(DimensionMask({true, false}), std::vector<double>{0.0, 0.0});
  EXPECT_NEAR(c.weights()[0], 0.5, 1e-15);
  EXPECT_NEAR(c.weights()[1], 0.5, 1e-15);
  EXPECT_EQ(c.dim(), 1u);
}

TEST(Conditional, SingleComponentIsRestrictedGaussian) {
  const IsotropicGaussianMixture d({1.0}, Tensor::matrix({{1, 2, 3}}), {0.7});
  const auto c = d.conditional(DimensionMask({false, true, false}), std::vector<double>{0, 9, 0});
  EXPECT_EQ(c.weights(), std::vector<double>{1.0});
  EXPECT_TRUE(c.means().identical(Tensor::matrix({{1, 3}})));
  EXPECT_EQ(c.variances(), std::vector<double>{0.7});
}

TEST(Conditional, TwoModeObservedAtFive) {
  const auto c = IsotropicGaussianMixture::two_mode().conditional(DimensionMask({true, false}),
                                                                  std::vector<double>{5, 0});
  // 0.2 N(5; -5, 1) / (0.8 N(5; 5, 1)) = 0.25 exp(-50).
  const double ratio = 0.25 * std::exp(-50.0);
  EXPECT_NEAR(c.weights()[0] / ratio, 1.0, 1e-9);
  EXPECT_NEAR(c.weights()[1], 1.0, 1e-15);
  EXPECT_NEAR(c.weights()[0] + c.weights()[1], 1.0, 1e-15);
}

TEST(Conditional, ImpossibleObservationIsAnError) {
  EXPECT_THROW(IsotropicGaussianMixture::two_mode().conditional(DimensionMask({true, false}),
                                                                std::vector<double>{1e200, 0}),
               NumericalError);
}

TEST(Conditional, MaskNeedsObservedAndHiddenDims) {
  const auto d = IsotropicGaussianMixture::two_mode();
  EXPECT_THROW(d.conditional(DimensionMask({true, true}), std::vector<double>{0, 0}), Error);
  EXPECT_THROW(d.conditional(DimensionMask({false, false}), std::vector<double>{0, 0}), Error);
}

TEST(Conditional, WeightsSumToOneAndScoreMatchesFiniteDifferences) {
  Rng rng(7);
  const IsotropicGaussianMixture d({0.3, 0.5, 0.2}, Tensor::matrix({{0, 0, 0}, {2, -1, 1}, {-1, 3, 2}}), {1.0, 0.5, 2.0});
  for (int i = 0; i < 50; ++i) {
    const Tensor obs = rng.normal_tensor(Shape(3), 2.0);
    const auto c = d.conditional(DimensionMask({true, false, false}), obs.values());
    double total = 0.0;
    for (double w : c.weights()) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
    const Tensor x = rng.normal_tensor(Shape(2), 2.0);
    const Tensor s = c.score(x), g = fd_score(c, x);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_LT(std::abs(s[k] - g[k]) / std::max(std::abs(s[k]), 1e-3), 1e-6);
  }
}

// The score near one well-separated mode does not depend on the mixture weights.
TEST(Mixture, ScoreNearModeIgnoresOtherComponent) {
  const auto mix = IsotropicGaussianMixture::two_mode();
  const IsotropicGaussianMixture heavy({1.0}, Tensor::matrix({{5, 5}}), {1.0});
  const IsotropicGaussianMixture light({1.0}, Tensor::matrix({{-5, -5}}), {1.0});
  Rng rng(8);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double r = 3.0 * std::sqrt(rng.uniform()), th = rng.uniform(0, 2 * std::numbers::pi);
    const bool first = i % 2 == 0;
    const double cx = first ? 5 : -5;
    const Tensor x = Tensor::vector({cx + r * std::cos(th), cx + r * std::sin(th)});
    worst = std::max(worst, test::max_abs_diff(mix.score(x), (first ? heavy : light).score(x)));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Manifold, SegmentWithoutNoiseIsOnTheLine) {
  Rng rng(9);
  const auto ds = ManifoldDataset::segment(Tensor::vector({-1, 0}), Tensor::vector({1, 0}));
  const Tensor x = ds.sample(10000, rng);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    EXPECT_EQ(x(i, 1), 0.0);
    EXPECT_GE(x(i, 0), -1.0);
    EXPECT_LE(x(i, 0), 1.0);
  }
}

TEST(Manifold, NoiseGivesHalfNormalOffsets) {
  Rng rng(10);
  const auto ds = ManifoldDataset::segment(Tensor::vector({-1, 0}), Tensor::vector({1, 0}), 0.01);
  const Tensor x = ds.sample(100000, rng);
  double m = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) m += std::abs(x(i, 1));
  m /= 1e5;
  const double expected = 0.01 * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(m, expected, 0.1 * expected);
}

TEST(Manifold, CircleWithoutNoiseHasUnitNorm) {
  Rng rng(11);
  const Tensor x = ManifoldDataset::circle(1.0).sample(5000, rng);
  for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_NEAR(std::hypot(x(i, 0), x(i, 1)), 1.0, 1e-12);
}

TEST(Csv, BatchHasHeaderAndOneRowPerPoint) {
  const std::string s = csv::batch_to_csv(Tensor::matrix({{1, 2.5}, {-3, 0.1}}));
  EXPECT_EQ(s, "x1,x2\n1,2.5\n-3,0.1\n");
}

TEST(Rng, SplitStreamsAreIndependentAndReproducible) {
  const Rng root(42);
  Rng a = root.split(1), b = root.split(1), c = root.split(2);
  const auto va = a.next_u64();
  EXPECT_EQ(va, b.next_u64());
  EXPECT_NE(va, c.next_u64());
  Rng u(3);
  for (int i = 0; i < 10000; ++i) {
    const double x = u.uniform();
    ASSERT_GT(x, 0.0);
    ASSERT_LT(x, 1.0);
  }
}

}  // namespace
}  // namespace ncsn

#include "support.hpp"

namespace ncsn {
namespace {

NoiseSchedule toy() { return NoiseSchedule::geometric(10.0, 0.1, 10); }

TEST(Schedule, GeometricInvariants) {
  const auto s = toy();
  EXPECT_EQ(s.levels(), 10u);
  EXPECT_DOUBLE_EQ(s.first(), 10.0);
  EXPECT_NEAR(s.last(), 0.1, 1e-15);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_NEAR(s.sigma(i) / s.sigma(i + 1), s.sigma(1) / s.sigma(2), 1e-12);
  EXPECT_THROW(NoiseSchedule({1.0, 2.0}), Error);
  EXPECT_THROW(NoiseSchedule({4.0, 2.0, 0.5}), Error);
  EXPECT_THROW(NoiseSchedule({}), Error);
  EXPECT_THROW(NoiseSchedule({1.0, -1.0}), Error);
  EXPECT_NO_THROW(NoiseSchedule({3.0}));
  EXPECT_THROW(s.sigma(0), Error);
  EXPECT_THROW(s.sigma(11), Error);
}

TEST(Schedule, StepSizes) {
  const auto s = toy();
  EXPECT_NEAR(s.step_size(1, 0.1), 1000.0, 1e-9);
  EXPECT_NEAR(s.step_size(10, 0.1), 0.1, 1e-15);
  const auto img = NoiseSchedule::geometric(1.0, 0.01, 10);
  EXPECT_NEAR(img.step_size(1, 2e-5), 0.2, 1e-15);
  EXPECT_NEAR(img.step_size(10, 2e-5), 2e-5, 1e-20);
  for (std::size_t i = 1; i <= 10; ++i)
    for (std::size_t j = 1; j <= 10; ++j)
      EXPECT_NEAR(s.step_size(i, 0.1) / s.step_size(j, 0.1), std::pow(s.sigma(i) / s.sigma(j), 2),
                  1e-12 * std::pow(s.sigma(i) / s.sigma(j), 2));
}

TEST(Network, ParameterCount) {
  Rng rng(1);
  const auto net = NcsnMlp::build({2, 128, 3}, toy(), rng);
  const std::size_t expected = (2 * 128 + 128) + 2 * (128 * 128 + 128) + (128 * 2 + 2) + 10 * 3 * 2 * 128;
  EXPECT_EQ(net.parameter_count(), expected);
  EXPECT_EQ(expected, 41346u);
}

TEST(Network, BuildIsDeterministic) {
  Rng a(2), b(2);
  const auto n1 = NcsnMlp::build({2, 16, 2}, toy(), a);
  const auto n2 = NcsnMlp::build({2, 16, 2}, toy(), b);
  for (std::size_t i = 0; i < n1.parameters().size(); ++i)
    EXPECT_TRUE(n1.parameters()[i].value().identical(n2.parameters()[i].value()));
}

TEST(Network, InitialisationRanges) {
  Rng rng(3);
  auto net = NcsnMlp::build({2, 32, 2}, toy(), rng);
  const double bound1 = std::sqrt(1.0 / 2.0), bound2 = std::sqrt(1.0 / 32.0);
  for (double v : net.parameters()[0].value().values()) EXPECT_LE(std::abs(v), bound1);
  for (double v : net.parameters()[2].value().values()) EXPECT_LE(std::abs(v), bound2);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(net.gamma(l).shape(), Shape(10, 32));
    for (double v : net.gamma(l).value().values()) EXPECT_EQ(v, 1.0);
    for (double v : net.beta(l).value().values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Network, SingleLevelScheduleHasOneConditioningRow) {
  Rng rng(4);
  auto net = NcsnMlp::build({2, 8, 3}, NoiseSchedule({1.0}), rng);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(net.gamma(l).shape(), Shape(1, 8));
}

TEST(Network, FreshNetworkIgnoresLevel) {
  Rng rng(5);
  const auto net = NcsnMlp::build({2, 16, 3}, toy(), rng);
  const Tensor x = rng.normal_tensor(Shape(5, 2));
  const Tensor first = net(x, 1);
  for (std::size_t i = 2; i <= 10; ++i) EXPECT_TRUE(net(x, i).identical(first));
}

TEST(Network, BatchMatchesSingleInputs) {
  Rng rng(6);
  const auto net = NcsnMlp::build({3, 16, 2}, toy(), rng);
  const Tensor x = rng.normal_tensor(Shape(6, 3));
  const Tensor batch = net(x, 4);
  EXPECT_EQ(batch.shape(), x.shape());
  for (std::size_t i = 0; i < 6; ++i) {
    const Tensor one = net(x.row_tensor(i), 4);
    EXPECT_EQ(one.shape(), Shape(3));
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(one[d], batch(i, d), 1e-14);
  }
}

TEST(Network, LevelOutOfRangeRejected) {
  Rng rng(7);
  const auto net = NcsnMlp::build({2, 4, 1}, toy(), rng);
  EXPECT_THROW(net(Tensor::vector({0, 0}), 0), Error);
  EXPECT_THROW(net(Tensor::vector({0, 0}), 11), Error);
}

TEST(Network, ShapesValidatedOnConstruction) {
  Rng rng(8);
  auto net = NcsnMlp::build({2, 4, 1}, toy(), rng);
  auto params = net.parameters();
  params.pop_back();
  EXPECT_THROW(NcsnMlp({2, 4, 1}, toy(), params), ShapeError);
  EXPECT_THROW(NcsnMlp::build({0, 4, 1}, toy(), rng), Error);
}

TEST(Network, ConditioningIsolation) {
  Rng rng(9);
  auto net = NcsnMlp::build({2, 16, 3}, toy(), rng);
  // Move away from the identity conditioning so every level differs.
  for (std::size_t l = 0; l < 3; ++l) {
    net.gamma(l).mutable_value() = rng.uniform_tensor(Shape(10, 16), 0.5, 1.5);
    net.beta(l).mutable_value() = rng.normal_tensor(Shape(10, 16), 0.3);
  }
  const Tensor x = rng.normal_tensor(Shape(8, 2));
  std::vector<Tensor> before;
  for (std::size_t i = 1; i <= 10; ++i) before.push_back(net(x, i));
  const std::size_t target = 4;
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t c = 0; c < 16; ++c) {
      net.gamma(l).mutable_value()(target - 1, c) += 0.1;
      net.beta(l).mutable_value()(target - 1, c) -= 0.2;
    }
  for (std::size_t i = 1; i <= 10; ++i) {
    const Tensor after = net(x, i);
    if (i == target) EXPECT_FALSE(after.identical(before[i - 1]));
    else EXPECT_TRUE(after.identical(before[i - 1])) << "level " << i;
  }
}

TEST(Network, JacobianFromJvpMatchesFiniteDifferences) {
  Rng rng(10);
  auto net = NcsnMlp::build({3, 24, 3}, toy(), rng);
  for (std::size_t l = 0; l < 3; ++l) net.beta(l).mutable_value() = rng.normal_tensor(Shape(10, 24), 0.3);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = rng.normal_tensor(Shape(1, 3), 2.0);
    const std::size_t level = 1 + rng.below(10);
    auto f = [&](const ad::Var& v) { return net.forward(v, level); };
    for (std::size_t k = 0; k < 3; ++k) {
      Tensor e(Shape(1, 3));
      e[k] = 1.0;
      const Tensor col = ad::jvp(f, x, e).value();
      Tensor xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const Tensor up = net(xp, level), down = net(xm, level);
      for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(col[d], (up[d] - down[d]) / (2 * h), 1e-5 * std::max(1.0, std::abs(col[d])));
    }
  }
}

TEST(Network, CopyIsDeep) {
  Rng rng(11);
  auto net = NcsnMlp::build({2, 4, 1}, toy(), rng);
  NcsnMlp copy = net;
  copy.beta(0).mutable_value()[0] = 42.0;
  EXPECT_EQ(net.beta(0).value()[0], 0.0);
}

}  // namespace
}  // namespace ncsn

#include "support.hpp"

#include <cstring>
#include <regex>
#include <set>

namespace ncsn {
namespace {

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  std::vector<ad::Var> params{ad::variable(Tensor::vector({1.5, -2.0})), ad::variable(Tensor::scalar(3.0))};
  AdamState state(AdamConfig{}, params);
  adam_step(params, std::vector<Tensor>{Tensor(Shape(2)), Tensor::scalar(0.0)}, state);
  EXPECT_EQ(state.t, 1u);
  EXPECT_EQ(params[0].value()[0], 1.5);
  EXPECT_EQ(params[0].value()[1], -2.0);
  EXPECT_EQ(params[1].value()[0], 3.0);
}

TEST(Adam, FirstStepIsLearningRate) {
  std::vector<ad::Var> params{ad::variable(Tensor::scalar(0.0))};
  AdamState state(AdamConfig{0.001}, params);
  adam_step(params, std::vector<Tensor>{Tensor::scalar(1.0)}, state);
  // m_hat = v_hat = 1 after bias correction.
  EXPECT_NEAR(params[0].value()[0], -0.001 / (1.0 + 1e-8), 1e-18);
}

TEST(Adam, UpdateIsLocalToNonzeroGradients) {
  std::vector<ad::Var> params{ad::variable(Tensor::scalar(1.0)), ad::variable(Tensor::scalar(1.0))};
  AdamState state(AdamConfig{}, params);
  for (int i = 0; i < 3; ++i) adam_step(params, std::vector<Tensor>{Tensor::scalar(0.0), Tensor::scalar(-2.0)}, state);
  EXPECT_EQ(params[0].value()[0], 1.0);
  EXPECT_GT(params[1].value()[0], 1.0);
}

TEST(Adam, ShapeMismatchRejected) {
  std::vector<ad::Var> params{ad::variable(Tensor::vector({1, 2}))};
  AdamState state(AdamConfig{}, params);
  EXPECT_THROW(adam_step(params, std::vector<Tensor>{Tensor::vector({1, 2, 3})}, state), ShapeError);
  EXPECT_THROW(adam_step(params, std::vector<Tensor>{}, state), ShapeError);
  EXPECT_EQ(state.t, 0u);
}

TEST(Adam, MomentsMirrorParameterShapes) {
  Rng rng(1);
  auto net = NcsnMlp::build({2, 8, 2}, NoiseSchedule({1.0}), rng);
  AdamState state(AdamConfig{}, net.parameters());
  ASSERT_EQ(state.m.size(), net.parameters().size());
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    EXPECT_EQ(state.m[i].shape(), net.parameters()[i].shape());
    EXPECT_EQ(state.v[i].shape(), net.parameters()[i].shape());
  }
}

// Narrow Gaussian away from the origin: the DSM floor at sigma = 1 is a small
// fraction of the loss of an untrained network.
DataSource narrow_gaussian() {
  return [](std::size_t n, Rng& rng) {
    Tensor x = rng.normal_tensor(Shape(n, 2), 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      x(i, 0) += 3.0;
      x(i, 1) -= 2.0;
    }
    return x;
  };
}

TrainConfig dsm_config(std::size_t iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.objective = Objective::Dsm;
  c.seed = 7;
  return c;
}

TEST(Train, DsmOnSingleGaussianHalvesLoss) {
  Rng rng(2);
  auto net = NcsnMlp::build({2, 32, 2}, NoiseSchedule({1.0}), rng);
  const auto result = train(net, narrow_gaussian(), dsm_config(2000));
  const auto totals = result.log.totals();
  ASSERT_EQ(totals.size(), 2000u);
  double late = 0.0;
  for (std::size_t i = totals.size() - 100; i < totals.size(); ++i) late += totals[i];
  late /= 100.0;
  EXPECT_LE(totals.back(), 0.5 * totals.front());
  EXPECT_LE(late, 0.5 * totals.front());
  // Oracle floor: D/2 * (1/sigma^2 - 1/(s^2 + sigma^2)) with s^2 = 0.25.
  EXPECT_GT(late, 0.9 * (1.0 - 1.0 / 1.25));
}

TEST(Train, ZeroIterationsRejected) {
  Rng rng(3);
  auto net = NcsnMlp::build({2, 4, 1}, NoiseSchedule({1.0}), rng);
  EXPECT_THROW(train(net, narrow_gaussian(), dsm_config(0)), ConfigError);
}

TEST(Train, DeterministicLossLogs) {
  Rng a(4), b(4);
  auto n1 = NcsnMlp::build({2, 8, 2}, NoiseSchedule::geometric(2.0, 0.5, 3), a);
  auto n2 = NcsnMlp::build({2, 8, 2}, NoiseSchedule::geometric(2.0, 0.5, 3), b);
  TrainConfig c;
  c.iterations = 30;
  c.batch_size = 16;
  c.seed = 99;
  const auto r1 = train(n1, narrow_gaussian(), c);
  const auto r2 = train(n2, narrow_gaussian(), c);
  EXPECT_EQ(r1.log.to_csv(), r2.log.to_csv());
  for (std::size_t i = 0; i < n1.parameters().size(); ++i)
    EXPECT_TRUE(n1.parameters()[i].value().identical(n2.parameters()[i].value()));
}

TEST(Train, SeedChangesTheRun) {
  Rng a(5), b(5);
  auto n1 = NcsnMlp::build({2, 8, 1}, NoiseSchedule({1.0}), a);
  auto n2 = NcsnMlp::build({2, 8, 1}, NoiseSchedule({1.0}), b);
  auto c = dsm_config(5);
  const auto r1 = train(n1, narrow_gaussian(), c);
  c.seed = 8;
  const auto r2 = train(n2, narrow_gaussian(), c);
  EXPECT_NE(r1.log.to_csv(), r2.log.to_csv());
}

LossRecord record_at(std::size_t iteration) {
  LossRecord r;
  r.iteration = iteration;
  return r;
}

TEST(Train, LossLogIsMonotoneWithBreakdown) {
  Rng rng(6);
  auto net = NcsnMlp::build({2, 8, 2}, NoiseSchedule::geometric(2.0, 0.5, 3), rng);
  TrainConfig c;
  c.iterations = 25;
  c.batch_size = 8;
  c.log_every = 10;
  const auto r = train(net, narrow_gaussian(), c);
  // Every 10th iteration plus the final one.
  ASSERT_EQ(r.log.size(), 3u);
  EXPECT_EQ(r.log.records()[0].iteration, 10u);
  EXPECT_EQ(r.log.records()[2].iteration, 25u);
  for (const auto& rec : r.log.records()) {
    ASSERT_EQ(rec.levels.size(), 3u);
    double mean = 0.0;
    for (double w : rec.weighted) mean += w / 3.0;
    EXPECT_NEAR(rec.total, mean, 1e-12);
  }
  const std::string csv = r.log.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,total,level,sigma,raw,weighted");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 3);

  LossLog log = r.log;
  EXPECT_THROW(log.append(record_at(25)), Error);
  EXPECT_THROW(log.append(record_at(3)), Error);
  EXPECT_NO_THROW(log.append(record_at(26)));
}

TEST(Train, ObserverSeesEveryStep) {
  Rng rng(7);
  auto net = NcsnMlp::build({2, 4, 1}, NoiseSchedule({1.0}), rng);
  std::vector<std::size_t> seen;
  train(net, narrow_gaussian(), dsm_config(12), [&](std::size_t it, const NcsnMlp&, double) { seen.push_back(it); });
  ASSERT_EQ(seen.size(), 12u);
  EXPECT_EQ(seen.front(), 1u);
  EXPECT_EQ(seen.back(), 12u);
}

TEST(Train, DebugGradientCheckPassesForEveryObjective) {
  for (auto objective : {Objective::Esm, Objective::Ssm, Objective::Dsm, Objective::Ncsn}) {
    Rng rng(8);
    auto net = NcsnMlp::build({2, 8, 2}, NoiseSchedule::geometric(2.0, 0.5, 3), rng);
    TrainConfig c;
    c.iterations = 5;
    c.batch_size = 8;
    c.objective = objective;
    c.debug_grad_check = true;
    EXPECT_NO_THROW(train(net, narrow_gaussian(), c)) << objective_name(objective);
  }
}

TEST(Train, NonFiniteLossAbortsWithIteration) {
  Rng rng(9);
  auto net = NcsnMlp::build({2, 4, 1}, NoiseSchedule({1.0}), rng);
  DataSource poisoned = [calls = 0](std::size_t n, Rng& r) mutable {
    Tensor x = r.normal_tensor(Shape(n, 2));
    if (++calls == 3) x[0] = std::numeric_limits<double>::quiet_NaN();
    return x;
  };
  try {
    train(net, poisoned, dsm_config(10));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 3"), std::string::npos) << e.what();
  }
}

TEST(Train, WritesPeriodicCheckpoints) {
  const auto dir = test::scratch_dir("train_checkpoints");
  Rng rng(10);
  auto net = NcsnMlp::build({2, 4, 1}, NoiseSchedule({1.0}), rng);
  auto c = dsm_config(6);
  c.checkpoint_every = 3;
  c.checkpoint_dir = dir;
  train(net, narrow_gaussian(), c);
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_3.ncsn"));
  const auto ck = load_checkpoint(dir / "checkpoint_6.ncsn");
  EXPECT_EQ(ck.meta.iteration, 6u);
  EXPECT_EQ(ck.meta.seed, 7u);
  EXPECT_EQ(ck.meta.objective, Objective::Dsm);
  for (std::size_t i = 0; i < ck.params.size(); ++i) EXPECT_TRUE(ck.params[i].identical(net.parameters()[i].value()));
}

TEST(Train, TrainerDoesNotDependOnSamplers) {
  // Walk the include closure of the trainer header.
  const std::filesystem::path root = NCSN_INCLUDE_DIR;
  std::vector<std::string> queue{"ncsn/trainer.hpp"};
  std::set<std::string> seen;
  const std::regex include_re(R"re(#include "(ncsn/[a-z_]+\.hpp)")re");
  while (!queue.empty()) {
    const std::string h = queue.back();
    queue.pop_back();
    if (!seen.insert(h).second) continue;
    const std::string text = test::slurp(root / h);
    ASSERT_FALSE(text.empty()) << h;
    for (std::sregex_iterator it(text.begin(), text.end(), include_re), end; it != end; ++it) queue.push_back((*it)[1]);
  }
  EXPECT_TRUE(seen.count("ncsn/objectives.hpp"));
  EXPECT_FALSE(seen.count("ncsn/samplers.hpp"));
}

NcsnMlp trained_like_net(Rng& rng) {
  auto net = NcsnMlp::build({3, 5, 2}, NoiseSchedule::geometric(4.0, 0.25, 4), rng);
  for (auto& p : net.parameters()) p.mutable_value() = rng.normal_tensor(p.shape());
  return net;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = test::scratch_dir("checkpoint_round_trip");
  Rng rng(11);
  const auto net = trained_like_net(rng);
  const TrainingMeta meta{1234, 0xdeadbeefcafeULL, Objective::Ssm};
  save_checkpoint(net, meta, dir / "a.ncsn");
  const auto ck = load_checkpoint(dir / "a.ncsn");
  EXPECT_EQ(ck.shape.dim, 3u);
  EXPECT_EQ(ck.shape.hidden, 5u);
  EXPECT_EQ(ck.shape.layers, 2u);
  EXPECT_EQ(ck.schedule.sigmas(), net.schedule().sigmas());
  EXPECT_EQ(ck.meta.iteration, 1234u);
  EXPECT_EQ(ck.meta.seed, 0xdeadbeefcafeULL);
  EXPECT_EQ(ck.meta.objective, Objective::Ssm);
  ASSERT_EQ(ck.params.size(), net.parameters().size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) EXPECT_TRUE(ck.params[i].identical(net.parameters()[i].value()));
  // Re-encoding the loaded network gives the same bytes.
  EXPECT_EQ(encode_checkpoint(ck.network(), ck.meta), test::slurp(dir / "a.ncsn"));
  const Tensor x = rng.normal_tensor(Shape(4, 3));
  EXPECT_TRUE(ck.network()(x, 3).identical(net(x, 3)));
}

TEST(Checkpoint, HeaderLayout) {
  Rng rng(12);
  const auto net = trained_like_net(rng);
  const std::string bytes = encode_checkpoint(net, TrainingMeta{9, 0, Objective::Ncsn});
  EXPECT_EQ(bytes.substr(0, 4), "NCSN");
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(bytes[off + b]);
    return v;
  };
  EXPECT_EQ(u32_at(4), 1u);
  EXPECT_EQ(u32_at(8), 3u);
  EXPECT_EQ(u32_at(12), 5u);
  EXPECT_EQ(u32_at(16), 2u);
  EXPECT_EQ(u32_at(20), 4u);
  EXPECT_EQ(u32_at(24), 9u);
  double first_sigma = 0.0;
  std::memcpy(&first_sigma, bytes.data() + 28, 8);
  EXPECT_EQ(first_sigma, 4.0);
  // First tensor record: W_1 as rank 2, 5 x 3.
  const std::size_t t0 = 28 + 8 * 4;
  EXPECT_EQ(u32_at(t0), 2u);
  EXPECT_EQ(u32_at(t0 + 4), 5u);
  EXPECT_EQ(u32_at(t0 + 8), 3u);
  std::size_t expected = t0;
  for (const auto& p : net.parameters()) expected += 4 + 4 * p.shape().rank() + 8 * p.value().size();
  EXPECT_EQ(bytes.size(), expected + 8 + 4);
}

class CheckpointCorruption : public ::testing::Test {
protected:
  void SetUp() override {
    Rng rng(13);
    bytes = encode_checkpoint(trained_like_net(rng), TrainingMeta{1, 2, Objective::Dsm});
  }
  std::string bytes;
};

TEST_F(CheckpointCorruption, EveryTruncationIsDetected) {
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    try {
      decode_checkpoint(bytes.substr(0, n));
      FAIL() << "prefix " << n << " decoded";
    } catch (const TruncatedError&) {
    } catch (const BadMagicError&) {
      EXPECT_LT(n, 4u);
    }
  }
}

TEST_F(CheckpointCorruption, BadMagic) {
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), BadMagicError);
}

TEST_F(CheckpointCorruption, VersionErrorNamesBothVersions) {
  bytes[4] = 7;
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const VersionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1"), std::string::npos) << msg;
  }
}

TEST_F(CheckpointCorruption, TrailingBytes) {
  EXPECT_THROW(decode_checkpoint(bytes + "x"), CorruptError);
}

TEST_F(CheckpointCorruption, WrongTensorShape) {
  bytes[28 + 8 * 4 + 4] = 6;  // W_1 rows
  EXPECT_THROW(decode_checkpoint(bytes), CorruptError);
}

TEST_F(CheckpointCorruption, UnsortedSchedule) {
  const double bad = 100.0;
  std::memcpy(bytes.data() + 28 + 8, &bad, 8);
  EXPECT_THROW(decode_checkpoint(bytes), CorruptError);
}

TEST_F(CheckpointCorruption, ErrorKindsAreDistinct) {
  EXPECT_STRNE(BadMagicError("").kind(), VersionError("").kind());
  EXPECT_STRNE(TruncatedError("").kind(), CorruptError("").kind());
  EXPECT_STRNE(TruncatedError("").kind(), VersionError("").kind());
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint(std::filesystem::temp_directory_path() / "ncsn_no_such_file.ncsn"), IoError);
}

}  // namespace
}  // namespace ncsn

#pragma once

// Command implementations behind the CLI. Every command takes a parsed config,
// a seed and an output directory, writes its artifacts there, and returns a
// small report with the headline numbers. Acceptance checks read the CSVs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ncsn/checkpoint.hpp"
#include "ncsn/config.hpp"
#include "ncsn/csv.hpp"
#include "ncsn/distributions.hpp"
#include "ncsn/network.hpp"
#include "ncsn/objectives.hpp"
#include "ncsn/plot.hpp"
#include "ncsn/random.hpp"
#include "ncsn/samplers.hpp"
#include "ncsn/schedule.hpp"
#include "ncsn/trainer.hpp"

namespace ncsn::experiments {

namespace fs = std::filesystem;

struct Run {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  fs::path out;
};

// Applies the command-line overrides on top of [run] seed / out.
inline Run make_run(ExperimentConfig config, std::optional<std::uint64_t> seed, std::optional<fs::path> out) {
  Run run;
  run.seed = seed ? *seed : config.count("run.seed", 0);
  run.out = out ? *out : config.path("run.out", "out");
  if (run.out.empty()) throw ConfigError("config: output directory is empty");
  run.config = std::move(config);
  return run;
}

// RNG streams. The trainer consumes streams 2 and up of the root generator,
// so the low numbers below stay disjoint from training noise.
inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kSampleStream = 1;
inline constexpr std::uint64_t kAuxStream = std::uint64_t{1} << 62;

// Library validation errors raised while building objects from a config are
// configuration errors from the command's point of view.
template <class F>
auto from_config(const char* what, F&& build) -> decltype(build()) {
  try {
    return build();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: invalid ") + what + ": " + e.what());
  }
}

// ---- config readers --------------------------------------------------------

inline IsotropicGaussianMixture mixture_from(const ExperimentConfig& c) {
  const std::string kind = c.str("data.kind", "mixture");
  if (kind != "mixture") throw ConfigError("config: data.kind must be 'mixture' for this command, got '" + kind + "'");
  return from_config("mixture", [&] {
    const auto weights = c.reals("data.weights", {0.2, 0.8});
    const auto rows = c.matrix("data.means", {{-5.0, -5.0}, {5.0, 5.0}});
    const auto variances = c.reals("data.variances", std::vector<double>(rows.size(), 1.0));
    if (rows.empty() || rows.front().empty()) throw ConfigError("config: data.means is empty");
    Tensor means(Shape(rows.size(), rows.front().size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].size() != means.cols()) throw ConfigError("config: data.means rows differ in length");
      for (std::size_t d = 0; d < means.cols(); ++d) means(k, d) = rows[k][d];
    }
    return IsotropicGaussianMixture(weights, means, variances);
  });
}

inline ManifoldDataset manifold_from(const ExperimentConfig& c) {
  return from_config("manifold", [&] {
    const std::string shape = c.str("data.manifold", "segment");
    const double noise_variance = c.real("data.noise_variance", 0.0);
    if (!(noise_variance >= 0.0)) throw ConfigError("config: data.noise_variance must be >= 0");
    const double sigma = std::sqrt(noise_variance);
    if (shape == "segment") {
      const auto from = c.reals("data.segment_from", {-1.0, 0.0});
      const auto to = c.reals("data.segment_to", {1.0, 0.0});
      return ManifoldDataset::segment(Tensor::vector(from), Tensor::vector(to), sigma);
    }
    if (shape == "circle") return ManifoldDataset::circle(c.real("data.radius", 1.0), 2, sigma);
    throw ConfigError("config: data.manifold must be segment|circle, got '" + shape + "'");
  });
}

// Presets: toy (10 -> 0.1, L = 10) for the two-mode mixtures, image
// (1 -> 0.01, L = 10) for [0,1]-range data, custom (all keys required).
inline NoiseSchedule schedule_from(const ExperimentConfig& c, const std::string& fallback = "toy") {
  const std::string preset = c.str("schedule.preset", fallback);
  double first = 0, last = 0;
  std::size_t levels = 10;
  if (preset == "toy") {
    first = 10.0;
    last = 0.1;
  } else if (preset == "image") {
    first = 1.0;
    last = 0.01;
    std::cerr << "warning: the image schedule (1 -> 0.01) is scaled for [0,1]-range data\n";
  } else if (preset == "custom") {
    for (const char* k : {"schedule.sigma_first", "schedule.sigma_last", "schedule.levels"})
      if (!c.has(k)) throw ConfigError(std::string("config: custom schedule needs ") + k);
  } else {
    throw ConfigError("config: schedule.preset must be toy|image|custom, got '" + preset + "'");
  }
  first = c.real("schedule.sigma_first", first);
  last = c.real("schedule.sigma_last", last);
  levels = c.count("schedule.levels", levels);
  return from_config("schedule", [&] {
    if (levels == 1) {
      if (first != last) throw ConfigError("config: a one-level schedule needs sigma_first == sigma_last");
      return NoiseSchedule({first});
    }
    return NoiseSchedule::geometric(first, last, levels);
  });
}

inline NetworkShape network_from(const ExperimentConfig& c, std::size_t dim) {
  NetworkShape s;
  s.dim = dim;
  s.hidden = c.count("network.hidden", 128);
  s.layers = c.count("network.layers", 3);
  if (s.hidden == 0 || s.layers == 0) throw ConfigError("config: network.hidden and network.layers must be >= 1");
  return s;
}

inline TrainConfig train_from(const ExperimentConfig& c, std::uint64_t seed, Objective fallback) {
  TrainConfig t;
  t.iterations = c.count("train.iterations", 10000);
  t.batch_size = c.count("train.batch_size", 128);
  t.lr = c.real("train.lr", 1e-3);
  t.seed = seed;
  t.objective = c.has("train.objective") ? parse_objective(c.str("train.objective", "")) : fallback;
  t.checkpoint_every = c.count("train.checkpoint_every", 0);
  t.log_every = c.count("train.log_every", 1);
  t.projections = c.count("train.projections", 1);
  t.level = c.count("train.level", 1);
  t.debug_grad_check = c.flag("train.debug_grad_check", false);
  const std::string w = c.str("train.weighting", "sigma2");
  if (w == "sigma2") t.weighting = sigma_squared_weighting();
  else if (w == "one") t.weighting = [](double) { return 1.0; };
  else throw ConfigError("config: train.weighting must be sigma2|one, got '" + w + "'");
  t.validate();
  return t;
}

inline LangevinConfig langevin_from(const ExperimentConfig& c, const std::string& section, double eps,
                                    std::size_t steps) {
  LangevinConfig l;
  l.epsilon = c.real(section + ".epsilon", eps);
  l.steps = c.count(section + ".steps", steps);
  if (section == "sampler") l.record_every = c.count("sampler.record_every", 0);
  if (!(l.epsilon > 0.0)) throw ConfigError("config: " + section + ".epsilon must be positive");
  if (l.steps == 0) throw ConfigError("config: " + section + ".steps must be >= 1");
  return l;
}

struct InitBox {
  std::size_t chains;
  double lo, hi;
};

inline InitBox init_from(const ExperimentConfig& c, double lo, double hi) {
  InitBox b{c.count("sampler.chains", 1280), c.real("sampler.init_low", lo), c.real("sampler.init_high", hi)};
  if (b.chains == 0) throw ConfigError("config: sampler.chains must be >= 1");
  if (!(b.hi > b.lo)) throw ConfigError("config: sampler.init_high must exceed sampler.init_low");
  return b;
}

// Loads sampler.checkpoint; an explicit [schedule] must match the stored one.
inline Checkpoint checkpoint_from(const ExperimentConfig& c) {
  if (!c.has("sampler.checkpoint")) throw ConfigError("config: sampler.checkpoint is required");
  Checkpoint ck = load_checkpoint(c.path("sampler.checkpoint", ""));
  if (c.has_section("schedule")) {
    const NoiseSchedule configured = schedule_from(c);
    if (!(configured == ck.schedule))
      throw ConfigError("config: schedule does not match the checkpoint (" + std::to_string(configured.levels()) +
                        " levels from " + csv::format(configured.first()) + " vs " +
                        std::to_string(ck.schedule.levels()) + " levels from " + csv::format(ck.schedule.first()) + ")");
  }
  return ck;
}

// ---- small shared helpers --------------------------------------------------

// Relative spread (max - min) / |mean| over the final 10% of a series.
inline double tail_spread(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t k = std::max<std::size_t>(1, v.size() / 10);
  const auto first = v.end() - static_cast<std::ptrdiff_t>(k);
  const auto [mn, mx] = std::minmax_element(first, v.end());
  double mean = 0.0;
  for (auto it = first; it != v.end(); ++it) mean += *it;
  mean /= static_cast<double>(k);
  return (*mx - *mn) / std::abs(mean);
}

inline std::string samples_csv(const Tensor& x, std::size_t level, std::size_t step) {
  Trajectory t;
  t.snapshots.push_back({level, step, x});
  return trajectory_to_csv(t, x.cols());
}

inline plot::Bounds box(double lo, double hi) { return {lo, hi, lo, hi}; }

// ---- repro fig3 ------------------------------------------------------------

struct MethodResult {
  std::string name;
  bool diverged = false;
  std::string message;
  std::vector<double> fractions;
};

struct Fig3Report {
  std::vector<MethodResult> methods;
};

// Exact sampling, vanilla Langevin and annealed Langevin from the analytic
// mixture scores, starting from uniform noise.
inline Fig3Report repro_fig3(const Run& run) {
  const auto& c = run.config;
  const IsotropicGaussianMixture dist = mixture_from(c);
  const NoiseSchedule schedule = schedule_from(c);
  const LangevinConfig vanilla = langevin_from(c, "vanilla", 0.1, 1000);
  const LangevinConfig annealed = langevin_from(c, "sampler", 0.1, 100);
  const InitBox init = init_from(c, -8.0, 8.0);
  const std::size_t d = dist.dim();
  const Rng root(run.seed);

  Fig3Report report;
  auto finish = [&](const std::string& name, const Tensor* samples, const std::string& error) {
    MethodResult m{name, samples == nullptr, error, {}};
    if (samples) {
      m.fractions = mode_weight(*samples, dist.means());
      csv::write_batch(run.out / ("fig3_" + name + ".csv"), *samples);
      if (d >= 2) plot::scatter(run.out / ("fig3_" + name + ".png"), *samples, box(init.lo, init.hi));
    }
    report.methods.push_back(std::move(m));
  };

  {
    Rng rng = root.split(10);
    Tensor x = dist.sample(init.chains, rng);
    finish("exact", &x, "");
  }
  for (const bool is_annealed : {false, true}) {
    const std::string name = is_annealed ? "annealed" : "vanilla";
    Rng rng = root.split(is_annealed ? 12 : 11);
    Tensor x0 = uniform_init(init.chains, d, init.lo, init.hi, rng);
    try {
      Tensor x = is_annealed
                     ? annealed_langevin(ScoreSource::analytic(dist, schedule), schedule, x0, annealed, rng).samples
                     : langevin(ScoreSource::analytic(dist), 1, x0, vanilla.epsilon, vanilla.steps, rng);
      finish(name, &x, "");
    } catch (const NumericalError& e) {
      finish(name, nullptr, e.what());
    }
  }

  std::ostringstream os;
  os << "method,status";
  for (std::size_t k = 0; k < dist.components(); ++k) os << ",fraction_mode_" << k + 1;
  os << '\n';
  for (const auto& m : report.methods) {
    os << m.name << ',' << (m.diverged ? "diverged" : "ok");
    for (std::size_t k = 0; k < dist.components(); ++k)
      os << ',' << (m.diverged ? "nan" : csv::format(m.fractions[k]));
    os << '\n';
  }
  csv::atomic_write(run.out / "fig3_modes.csv", os.str());

  for (const auto& m : report.methods)
    if (m.diverged) throw NumericalError("repro fig3: " + m.name + " sampler diverged: " + m.message);
  return report;
}

// ---- repro fig2 ------------------------------------------------------------

struct Fig2Report {
  std::size_t near_cells = 0, low_cells = 0;
  double near_mse = 0.0, low_mse = 0.0;
};

// Trains an unconditional score model with sliced score matching and compares
// it with the analytic score on a grid over [-bound, bound]^2.
inline Fig2Report repro_fig2(const Run& run) {
  const auto& c = run.config;
  const IsotropicGaussianMixture dist = mixture_from(c);
  if (dist.dim() != 2) throw ConfigError("config: repro fig2 needs a 2-D mixture");
  TrainConfig tc = train_from(c, run.seed, Objective::Ssm);
  if (tc.objective != Objective::Ssm && tc.objective != Objective::Esm)
    throw ConfigError("config: repro fig2 trains an unconditional model (objective ssm or esm)");
  tc.checkpoint_dir = run.out / "checkpoints";
  const std::size_t grid = c.count("eval.grid", 50);
  const double bound = c.real("eval.bound", 8.0);
  const double radius = c.real("eval.near_radius", 2.0);
  if (grid == 0) throw ConfigError("config: eval.grid must be >= 1");
  if (!(bound > 0.0)) throw ConfigError("config: eval.bound must be positive");

  Rng init = Rng(run.seed).split(kInitStream);
  NcsnMlp net = NcsnMlp::build(network_from(c, 2), NoiseSchedule({1.0}), init);
  tc.level = 1;
  const TrainResult trained =
      train(net, [&dist](std::size_t n, Rng& r) { return dist.sample(n, r); }, tc);
  csv::atomic_write(run.out / "fig2_loss.csv", trained.log.to_csv());
  save_checkpoint(net, TrainingMeta{static_cast<std::uint32_t>(tc.iterations), run.seed, tc.objective},
                  run.out / "fig2_model.ncsn");

  // Cell centres, row-major with y outer.
  Tensor points(Shape(grid * grid, 2));
  const double cell = 2.0 * bound / static_cast<double>(grid);
  for (std::size_t r = 0; r < grid; ++r)
    for (std::size_t q = 0; q < grid; ++q) {
      points(r * grid + q, 0) = -bound + (static_cast<double>(q) + 0.5) * cell;
      points(r * grid + q, 1) = -bound + (static_cast<double>(r) + 0.5) * cell;
    }
  const Tensor truth = dist.score_batch(points);
  const Tensor est = net(points, 1);

  Fig2Report rep;
  Tensor err_map(Shape(grid, grid)), density_map(Shape(grid, grid));
  std::ostringstream os;
  os << "x1,x2,true_s1,true_s2,est_s1,est_s2,sq_error,region\n";
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double e = std::pow(truth(i, 0) - est(i, 0), 2) + std::pow(truth(i, 1) - est(i, 1), 2);
    bool near = false;
    for (std::size_t k = 0; k < dist.components(); ++k)
      near = near || std::hypot(points(i, 0) - dist.means()(k, 0), points(i, 1) - dist.means()(k, 1)) <= radius;
    (near ? rep.near_mse : rep.low_mse) += e;
    ++(near ? rep.near_cells : rep.low_cells);
    err_map(i / grid, i % grid) = std::log10(e + 1e-12);
    density_map(i / grid, i % grid) = dist.log_density(points.row(i));
    os << csv::format(points(i, 0)) << ',' << csv::format(points(i, 1)) << ',' << csv::format(truth(i, 0)) << ','
       << csv::format(truth(i, 1)) << ',' << csv::format(est(i, 0)) << ',' << csv::format(est(i, 1)) << ','
       << csv::format(e) << ',' << (near ? "near_mode" : "low_density") << '\n';
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.near_mse = rep.near_cells ? rep.near_mse / static_cast<double>(rep.near_cells) : nan;
  rep.low_mse = rep.low_cells ? rep.low_mse / static_cast<double>(rep.low_cells) : nan;
  csv::atomic_write(run.out / "fig2_score_field.csv", os.str());
  csv::atomic_write(run.out / "fig2_regions.csv", "region,cells,mse\nnear_mode," + std::to_string(rep.near_cells) +
                                                      ',' + csv::format(rep.near_mse) + "\nlow_density," +
                                                      std::to_string(rep.low_cells) + ',' + csv::format(rep.low_mse) +
                                                      '\n');
  const int px = static_cast<int>(std::max<std::size_t>(1, 400 / grid));
  plot::heatmap(run.out / "fig2_log_density.png", density_map, px);
  plot::heatmap(run.out / "fig2_log_sq_error.png", err_map, px);
  return rep;
}

// ---- repro manifold --------------------------------------------------------

struct ManifoldRun {
  std::string name;
  double noise_variance = 0.0;
  std::vector<double> train_loss;
  std::vector<double> eval_loss;
};

struct ManifoldReport {
  std::vector<ManifoldRun> runs;
};

// Two identical SSM fits, on the noiseless manifold data and on the same data
// with Gaussian noise. Besides the minibatch loss, each iteration records the
// loss on a fixed held-out batch with fixed projections, which isolates the
// effect of the parameters from minibatch noise.
inline ManifoldReport repro_manifold(const Run& run) {
  ExperimentConfig c = run.config;
  const ManifoldDataset perturbed_data = [&] {
    if (!c.has("data.noise_variance")) c.set("data.noise_variance", "0.0001");
    return manifold_from(c);
  }();
  if (perturbed_data.noise_sigma() == 0.0) throw ConfigError("config: data.noise_variance must be positive here");
  if (!c.has("train.iterations")) c.set("train.iterations", "3000");
  TrainConfig tc = train_from(c, run.seed, Objective::Ssm);
  if (tc.objective != Objective::Ssm) throw ConfigError("config: repro manifold uses the ssm objective");
  tc.level = 1;
  tc.log_every = 1;
  const std::size_t eval_n = c.count("train.eval_batch", 512);
  if (eval_n == 0) throw ConfigError("config: train.eval_batch must be >= 1");

  ManifoldReport report;
  for (const bool noisy : {false, true}) {
    const ManifoldDataset ds = noisy ? perturbed_data : perturbed_data.with_noise(0.0);
    ManifoldRun r{noisy ? "perturbed" : "unperturbed", noisy ? std::pow(perturbed_data.noise_sigma(), 2) : 0.0, {}, {}};
    Rng init = Rng(run.seed).split(kInitStream);
    NcsnMlp net = NcsnMlp::build(network_from(c, ds.dim()), NoiseSchedule({1.0}), init);
    Rng eval_rng = Rng(run.seed).split(kAuxStream);
    const Tensor eval_batch = ds.sample(eval_n, eval_rng);
    const std::vector<Tensor> eval_proj{eval_rng.normal_tensor(eval_batch.shape())};
    train(
        net, [&ds](std::size_t n, Rng& g) { return ds.sample(n, g); }, tc,
        [&](std::size_t, const NcsnMlp& m, double loss) {
          r.train_loss.push_back(loss);
          r.eval_loss.push_back(ssm_with_projections(at_level(m, 1), eval_batch, eval_proj).value());
        });
    std::ostringstream os;
    os << "iteration,train_loss,eval_loss\n";
    for (std::size_t i = 0; i < r.train_loss.size(); ++i)
      os << i + 1 << ',' << csv::format(r.train_loss[i]) << ',' << csv::format(r.eval_loss[i]) << '\n';
    csv::atomic_write(run.out / ("manifold_" + r.name + ".csv"), os.str());
    plot::lines(run.out / ("manifold_" + r.name + ".png"), {r.eval_loss, r.train_loss}, {plot::kBlue, plot::kOrange});
    report.runs.push_back(std::move(r));
  }

  std::ostringstream os;
  os << "run,noise_variance,eval_spread,train_spread\n";
  for (const auto& r : report.runs)
    os << r.name << ',' << csv::format(r.noise_variance) << ',' << csv::format(tail_spread(r.eval_loss)) << ','
       << csv::format(tail_spread(r.train_loss)) << '\n';
  csv::atomic_write(run.out / "manifold_summary.csv", os.str());
  return report;
}

// ---- train / sample / inpaint / eval ----------------------------------------

struct TrainReport {
  double first_loss = 0.0, final_loss = 0.0;
  fs::path checkpoint;
};

// Fits a noise-conditional network (default objective: the weighted sum over
// all levels) on a mixture or manifold data source.
inline TrainReport cmd_train(const Run& run) {
  const auto& c = run.config;
  const std::string kind = c.str("data.kind", "mixture");
  DataSource data;
  std::size_t dim = 0;
  if (kind == "mixture") {
    auto dist = mixture_from(c);
    dim = dist.dim();
    data = [dist](std::size_t n, Rng& r) { return dist.sample(n, r); };
  } else if (kind == "manifold") {
    auto ds = manifold_from(c);
    dim = ds.dim();
    data = [ds](std::size_t n, Rng& r) { return ds.sample(n, r); };
  } else {
    throw ConfigError("config: data.kind must be mixture|manifold, got '" + kind + "'");
  }
  const NoiseSchedule schedule = schedule_from(c);
  TrainConfig tc = train_from(c, run.seed, Objective::Ncsn);
  tc.checkpoint_dir = run.out / "checkpoints";
  if (tc.objective != Objective::Ncsn) from_config("train.level", [&] { schedule.check_level(tc.level); return 0; });
  Rng init = Rng(run.seed).split(kInitStream);
  NcsnMlp net = NcsnMlp::build(network_from(c, dim), schedule, init);
  const TrainResult res = train(net, data, tc);
  csv::atomic_write(run.out / "loss.csv", res.log.to_csv());
  plot::lines(run.out / "loss.png", {res.log.totals()}, {plot::kBlue});
  TrainReport rep{res.log.front().total, res.log.back().total, run.out / "model.ncsn"};
  save_checkpoint(net, TrainingMeta{static_cast<std::uint32_t>(tc.iterations), run.seed, tc.objective}, rep.checkpoint);
  return rep;
}

// Annealed Langevin sampling from a checkpoint.
inline Tensor cmd_sample(const Run& run) {
  const auto& c = run.config;
  const Checkpoint ck = checkpoint_from(c);
  const NcsnMlp net = ck.network();
  const LangevinConfig lc = langevin_from(c, "sampler", 2e-5, 100);
  const InitBox init = init_from(c, 0.0, 1.0);
  Rng rng = Rng(run.seed).split(kSampleStream);
  Tensor x0 = uniform_init(init.chains, net.dim(), init.lo, init.hi, rng);
  SampleResult res = annealed_langevin(ScoreSource::learned(net), ck.schedule, x0, lc, rng);
  csv::atomic_write(run.out / "samples.csv", samples_csv(res.samples, ck.schedule.levels(), lc.steps));
  if (lc.record_every) csv::atomic_write(run.out / "trajectory.csv", trajectory_to_csv(res.trajectory, net.dim()));
  if (net.dim() >= 2) plot::scatter(run.out / "samples.png", res.samples, box(init.lo, init.hi));
  return res.samples;
}

inline DimensionMask mask_from(const ExperimentConfig& c, std::size_t dim) {
  if (!c.has("inpaint.mask")) throw ConfigError("config: inpaint.mask is required");
  const auto bits = c.reals("inpaint.mask", {});
  if (bits.size() != dim) throw ConfigError("config: inpaint.mask needs " + std::to_string(dim) + " entries");
  std::vector<bool> observed;
  for (double b : bits) {
    if (b != 0.0 && b != 1.0) throw ConfigError("config: inpaint.mask entries must be 0 or 1");
    observed.push_back(b == 1.0);
  }
  DimensionMask mask(observed);
  if (mask.count_hidden() == 0) throw ConfigError("config: inpaint.mask must leave a dimension unobserved");
  return mask;
}

// Annealed Langevin inpainting from a checkpoint: observed coordinates come
// from inpaint.observed (a full D-vector; hidden entries are ignored).
inline Tensor cmd_inpaint(const Run& run) {
  const auto& c = run.config;
  const Checkpoint ck = checkpoint_from(c);
  const NcsnMlp net = ck.network();
  const DimensionMask mask = mask_from(c, net.dim());
  const auto observed = c.reals("inpaint.observed", {});
  if (observed.size() != net.dim())
    throw ConfigError("config: inpaint.observed needs " + std::to_string(net.dim()) + " entries");
  const LangevinConfig lc = langevin_from(c, "sampler", 2e-5, 100);
  const InitBox init = init_from(c, 0.0, 1.0);
  Rng rng = Rng(run.seed).split(kSampleStream);
  Tensor x0 = uniform_init(init.chains, net.dim(), init.lo, init.hi, rng);
  SampleResult res = inpaint(ScoreSource::learned(net), ck.schedule, Tensor::vector(observed), mask, lc, rng, x0);
  csv::atomic_write(run.out / "inpaint.csv", samples_csv(res.samples, ck.schedule.levels(), lc.steps));
  if (lc.record_every) csv::atomic_write(run.out / "inpaint_trajectory.csv", trajectory_to_csv(res.trajectory, net.dim()));
  if (net.dim() >= 2) plot::scatter(run.out / "inpaint.png", res.samples, box(init.lo, init.hi));
  return res.samples;
}

struct LevelStats {
  std::size_t level = 0;
  double sigma = 0.0;
  double mean_sigma_norm = 0.0;  // mean of sigma_i |s(x, i)| over x ~ data
  double score_mse = 0.0;        // mean |s(x, i) - true perturbed score|^2 over x ~ q_sigma_i
  double mean_sq_true = 0.0;     // mean |true perturbed score|^2 over the same x
};

struct EvalReport {
  std::vector<LevelStats> levels;
  std::vector<double> mode_fractions;
  double sigma_norm_ratio = 0.0;  // max / min of mean_sigma_norm over levels
};

// Scores a checkpoint against the analytic mixture: per-level score error and
// sigma-scaled score norms, plus mode weights of annealed Langevin samples.
inline EvalReport cmd_eval(const Run& run) {
  const auto& c = run.config;
  const Checkpoint ck = checkpoint_from(c);
  const NcsnMlp net = ck.network();
  const IsotropicGaussianMixture dist = mixture_from(c);
  if (dist.dim() != net.dim()) throw ConfigError("config: mixture dimension does not match the checkpoint");
  const std::size_t n = c.count("eval.samples", 10000);
  if (n == 0) throw ConfigError("config: eval.samples must be >= 1");

  EvalReport rep;
  Rng data_rng = Rng(run.seed).split(kAuxStream);
  const Tensor x = dist.sample(n, data_rng);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 1; i <= ck.schedule.levels(); ++i) {
    LevelStats s;
    s.level = i;
    s.sigma = ck.schedule.sigma(i);
    const Tensor est = net(x, i);
    for (std::size_t r = 0; r < n; ++r) {
      double sq = 0.0;
      for (std::size_t d = 0; d < net.dim(); ++d) sq += est(r, d) * est(r, d);
      s.mean_sigma_norm += s.sigma * std::sqrt(sq);
    }
    s.mean_sigma_norm /= static_cast<double>(n);
    Rng noise = Rng(run.seed).split(kAuxStream + i);
    Tensor xt = x;
    for (std::size_t k = 0; k < xt.size(); ++k) xt[k] += s.sigma * noise.normal();
    const Tensor truth = dist.perturb(s.sigma).score_batch(xt);
    const Tensor est_t = net(xt, i);
    for (std::size_t k = 0; k < xt.size(); ++k) {
      s.score_mse += std::pow(est_t[k] - truth[k], 2);
      s.mean_sq_true += truth[k] * truth[k];
    }
    s.score_mse /= static_cast<double>(n);
    s.mean_sq_true /= static_cast<double>(n);
    lo = std::min(lo, s.mean_sigma_norm);
    hi = std::max(hi, s.mean_sigma_norm);
    rep.levels.push_back(s);
  }
  rep.sigma_norm_ratio = hi / lo;

  const LangevinConfig lc = langevin_from(c, "sampler", 2e-5, 100);
  const InitBox init = init_from(c, 0.0, 1.0);
  Rng rng = Rng(run.seed).split(kSampleStream);
  Tensor x0 = uniform_init(init.chains, net.dim(), init.lo, init.hi, rng);
  const Tensor samples = annealed_langevin(ScoreSource::learned(net), ck.schedule, x0, lc, rng).samples;
  rep.mode_fractions = mode_weight(samples, dist.means());

  std::ostringstream lv;
  lv << "level,sigma,mean_sigma_norm,score_mse,mean_sq_true_score\n";
  for (const auto& s : rep.levels)
    lv << s.level << ',' << csv::format(s.sigma) << ',' << csv::format(s.mean_sigma_norm) << ','
       << csv::format(s.score_mse) << ',' << csv::format(s.mean_sq_true) << '\n';
  csv::atomic_write(run.out / "eval_levels.csv", lv.str());
  std::ostringstream md;
  md << "mode," << csv::header_x(dist.dim()) << ",fraction\n";
  for (std::size_t k = 0; k < dist.components(); ++k) {
    md << k + 1;
    for (std::size_t d = 0; d < dist.dim(); ++d) md << ',' << csv::format(dist.means()(k, d));
    md << ',' << csv::format(rep.mode_fractions[k]) << '\n';
  }
  csv::atomic_write(run.out / "eval_modes.csv", md.str());
  csv::atomic_write(run.out / "eval_summary.csv", "metric,value\nsigma_norm_ratio," + csv::format(rep.sigma_norm_ratio) +
                                                      '\n');
  csv::atomic_write(run.out / "eval_samples.csv", samples_csv(samples, ck.schedule.levels(), lc.steps));
  if (net.dim() >= 2) plot::scatter(run.out / "eval_samples.png", samples, box(-8.0, 8.0));
  return rep;
}

}  // namespace ncsn::experiments

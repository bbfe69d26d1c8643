#pragma once

// Deterministic Adam training loop for any of the score-matching objectives.
// Every iteration draws a fresh batch from its own RNG stream, so a run is a
// pure function of (initial parameters, data source, config).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ncsn/adam.hpp"
#include "ncsn/checkpoint.hpp"
#include "ncsn/csv.hpp"
#include "ncsn/network.hpp"
#include "ncsn/objectives.hpp"
#include "ncsn/random.hpp"

namespace ncsn {

using DataSource = std::function<Tensor(std::size_t n, Rng& rng)>;

struct TrainConfig {
  std::size_t iterations = 10000;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  Objective objective = Objective::Ncsn;
  std::size_t checkpoint_every = 0;  // 0 = never
  std::filesystem::path checkpoint_dir;
  std::size_t log_every = 1;
  std::size_t projections = 1;  // ssm only
  std::size_t level = 1;        // esm/ssm/dsm: network level that is trained
  Weighting weighting = sigma_squared_weighting();
  bool debug_grad_check = false;

  void validate() const {
    if (iterations == 0) throw ConfigError("train: iterations must be >= 1");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (log_every == 0) throw ConfigError("train: log_every must be >= 1");
    if (projections == 0) throw ConfigError("train: projections must be >= 1");
  }
};

struct LossRecord {
  std::size_t iteration = 0;
  double total = 0.0;
  std::vector<std::size_t> levels;
  std::vector<double> sigmas;
  std::vector<double> raw;
  std::vector<double> weighted;
};

// Append-only; iterations must increase strictly.
class LossLog {
public:
  void append(LossRecord r) {
    if (!records_.empty() && r.iteration <= records_.back().iteration)
      throw Error("loss log: iteration " + std::to_string(r.iteration) + " is not after " +
                  std::to_string(records_.back().iteration));
    records_.push_back(std::move(r));
  }
  const std::vector<LossRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const LossRecord& front() const { return records_.front(); }
  const LossRecord& back() const { return records_.back(); }

  std::vector<double> totals() const {
    std::vector<double> t;
    t.reserve(records_.size());
    for (const auto& r : records_) t.push_back(r.total);
    return t;
  }

  // iteration,total,level,sigma,raw,weighted; one row per level.
  std::string to_csv() const {
    std::ostringstream os;
    os << "iteration,total,level,sigma,raw,weighted\n";
    for (const auto& r : records_)
      for (std::size_t i = 0; i < r.raw.size(); ++i)
        os << r.iteration << ',' << csv::format(r.total) << ',' << r.levels[i] << ',' << csv::format(r.sigmas[i]) << ','
           << csv::format(r.raw[i]) << ',' << csv::format(r.weighted[i]) << '\n';
    return os.str();
  }

private:
  std::vector<LossRecord> records_;
};

// Builds the configured objective for one iteration. `rng` supplies all
// noise (perturbations or projections) for that loss.
inline LossValue build_loss(const NcsnMlp& net, const Tensor& batch, const TrainConfig& config, Rng& rng) {
  switch (config.objective) {
    case Objective::Esm: return esm_exact(at_level(net, config.level), batch);
    case Objective::Ssm: return ssm(at_level(net, config.level), batch, config.projections, rng);
    case Objective::Dsm: return dsm_level(as_conditional(net), batch, config.level, net.schedule(), rng);
    case Objective::Ncsn: return ncsn_loss(as_conditional(net), batch, net.schedule(), config.weighting, rng);
  }
  throw Error("train: unknown objective");
}

// Central-difference check of 5 random gradient entries; throws when the
// relative error exceeds `tolerance`.
inline double spot_check_gradient(NcsnMlp& net, const Tensor& batch, const TrainConfig& config, const Rng& loss_rng,
                                  const ad::GradientMap& grads, Rng pick, double tolerance = 1e-4) {
  const double h = 1e-5;
  double worst = 0.0;
  auto& params = net.parameters();
  for (int k = 0; k < 5; ++k) {
    const std::size_t p = pick.below(params.size());
    Tensor& value = params[p].mutable_value();
    const std::size_t i = pick.below(value.size());
    const double saved = value[i];
    Rng r1 = loss_rng;
    value[i] = saved + h;
    const double up = build_loss(net, batch, config, r1).value();
    Rng r2 = loss_rng;
    value[i] = saved - h;
    const double down = build_loss(net, batch, config, r2).value();
    value[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double exact = grads.at_index(p)[i];
    const double err = std::abs(numeric - exact) / std::max({std::abs(numeric), std::abs(exact), 1e-8});
    worst = std::max(worst, err);
  }
  if (worst > tolerance)
    throw NumericalError("train: gradient spot check failed with relative error " + std::to_string(worst));
  return worst;
}

struct TrainResult {
  LossLog log;
  AdamState optimizer;
};

// Called after every optimizer step with the iteration, the updated network
// and the loss that produced the step.
using TrainObserver = std::function<void(std::size_t iteration, const NcsnMlp& net, double loss)>;

inline TrainResult train(NcsnMlp& net, const DataSource& data, const TrainConfig& config,
                         const TrainObserver& observer = {}) {
  config.validate();
  if (config.objective != Objective::Ncsn) net.schedule().check_level(config.level);
  TrainResult result;
  result.optimizer = AdamState(AdamConfig{config.lr}, net.parameters());
  const Rng root(config.seed);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    Rng data_rng = root.split(2 * it);
    const Rng loss_rng = root.split(2 * it + 1);
    Tensor batch = data(config.batch_size, data_rng);
    Rng rng = loss_rng;
    LossValue loss;
    try {
      loss = build_loss(net, batch, config, rng);
    } catch (const NumericalError& e) {
      throw NumericalError("train: iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!std::isfinite(loss.value()))
      throw NumericalError("train: non-finite loss at iteration " + std::to_string(it));
    ad::GradientMap grads = ad::grad(loss.total, net.parameters());
    if (config.debug_grad_check) spot_check_gradient(net, batch, config, loss_rng, grads, root.split(~it));
    adam_step(net.parameters(), grads, result.optimizer);
    if (observer) observer(it, net, loss.value());

    if (it % config.log_every == 0 || it == config.iterations) {
      LossRecord rec;
      rec.iteration = it;
      rec.total = loss.value();
      rec.levels = loss.levels;
      rec.sigmas = loss.sigmas;
      rec.raw = loss.raw;
      for (std::size_t i = 0; i < loss.raw.size(); ++i) rec.weighted.push_back(loss.weights[i] * loss.raw[i]);
      result.log.append(std::move(rec));
    }
    if (config.checkpoint_every && it % config.checkpoint_every == 0 && !config.checkpoint_dir.empty()) {
      save_checkpoint(net, TrainingMeta{static_cast<std::uint32_t>(it), config.seed, config.objective},
                      config.checkpoint_dir / ("checkpoint_" + std::to_string(it) + ".ncsn"));
    }
  }
  return result;
}

}  // namespace ncsn

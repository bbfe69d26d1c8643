#pragma once

// Langevin samplers over any score source: plain Langevin dynamics, annealed
// Langevin dynamics across a noise schedule, and masked inpainting that
// clamps observed coordinates after every step.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ncsn/csv.hpp"
#include "ncsn/distributions.hpp"
#include "ncsn/network.hpp"
#include "ncsn/random.hpp"
#include "ncsn/schedule.hpp"
#include "ncsn/tensor.hpp"

namespace ncsn {

// Evaluates scores of an n x D batch at a 1-based noise level.
struct ScoreSource {
  enum class Flavor { LearnedNetwork, AnalyticOracle };

  std::function<Tensor(const Tensor& batch, std::size_t level)> eval;
  Flavor flavor = Flavor::AnalyticOracle;

  Tensor operator()(const Tensor& batch, std::size_t level) const {
    Tensor s = eval(batch, level);
    if (!(s.shape() == batch.shape()))
      throw ShapeError("score source: output " + s.shape().str() + " for input " + batch.shape().str());
    return s;
  }

  // Exact score of `dist` perturbed by sigma_i at level i.
  static ScoreSource analytic(const IsotropicGaussianMixture& dist, const NoiseSchedule& schedule) {
    std::vector<IsotropicGaussianMixture> perturbed;
    for (double s : schedule.sigmas()) perturbed.push_back(dist.perturb(s));
    return {[perturbed = std::move(perturbed)](const Tensor& x, std::size_t level) {
              return perturbed.at(level - 1).score_batch(x);
            },
            Flavor::AnalyticOracle};
  }

  // Exact unperturbed score, for every level.
  static ScoreSource analytic(const IsotropicGaussianMixture& dist) {
    return {[dist](const Tensor& x, std::size_t) { return dist.score_batch(x); }, Flavor::AnalyticOracle};
  }

  // The network must outlive the source.
  static ScoreSource learned(const NcsnMlp& net) {
    return {[&net](const Tensor& x, std::size_t level) { return net(x, level); }, Flavor::LearnedNetwork};
  }
};

struct LangevinConfig {
  double epsilon = 0.1;
  std::size_t steps = 100;
  std::size_t record_every = 0;  // 0 disables trajectory recording

  void validate() const {
    if (!(epsilon > 0.0)) throw Error("langevin: epsilon must be positive");
    if (steps == 0) throw Error("langevin: at least one step required");
  }
};

struct Snapshot {
  std::size_t level = 0;
  std::size_t step = 0;
  Tensor samples;
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
};

// Chains whose sup-norm exceeds this are treated as diverged.
inline constexpr double kDivergenceBound = 1e6;

namespace detail {

inline void guard_iterate(const Tensor& x, std::size_t level, std::size_t step) {
  for (double v : x.values()) {
    if (!std::isfinite(v) || std::abs(v) > kDivergenceBound)
      throw NumericalError("langevin: chain diverged at level " + std::to_string(level) + " step " +
                           std::to_string(step));
  }
}

// One update x <- x + a/2 s(x) + sqrt(a) z in place.
inline void langevin_step(Tensor& x, const ScoreSource& score, std::size_t level, double step_size, Rng& rng) {
  Tensor s = score(x, level);
  const double half = 0.5 * step_size;
  const double noise = std::sqrt(step_size);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += half * s[i] + noise * rng.normal();
}

}  // namespace detail

// T steps of Langevin dynamics with a fixed step size at one level.
inline Tensor langevin(const ScoreSource& score, std::size_t level, Tensor x0, double epsilon, std::size_t steps,
                       Rng& rng, Trajectory* trajectory = nullptr, std::size_t record_every = 0) {
  if (!(epsilon > 0.0)) throw Error("langevin: epsilon must be positive");
  if (steps == 0) throw Error("langevin: at least one step required");
  Tensor x = std::move(x0).as_batch();
  for (std::size_t t = 1; t <= steps; ++t) {
    detail::langevin_step(x, score, level, epsilon, rng);
    detail::guard_iterate(x, level, t);
    if (trajectory && record_every && t % record_every == 0) trajectory->snapshots.push_back({level, t, x});
  }
  return x;
}

struct SampleResult {
  Tensor samples;
  Trajectory trajectory;
};

// Anneals through levels 1..L with step sizes eps * sigma_i^2 / sigma_L^2,
// seeding each level with the previous level's final samples.
inline SampleResult annealed_langevin(const ScoreSource& score, const NoiseSchedule& schedule, Tensor x0,
                                      const LangevinConfig& config, Rng& rng) {
  config.validate();
  SampleResult result;
  Tensor x = std::move(x0).as_batch();
  for (std::size_t i = 1; i <= schedule.levels(); ++i) {
    const double alpha = schedule.step_size(i, config.epsilon);
    x = langevin(score, i, std::move(x), alpha, config.steps, rng, &result.trajectory, config.record_every);
  }
  result.samples = std::move(x);
  return result;
}

// Annealed Langevin inpainting. Per level a single perturbed copy
// y = x_known + sigma_i z of the observation is drawn per chain; after every
// step the observed coordinates are reset to y.
inline SampleResult inpaint(const ScoreSource& score, const NoiseSchedule& schedule, const Tensor& x_known,
                            const DimensionMask& mask, const LangevinConfig& config, Rng& rng, Tensor x0) {
  config.validate();
  const std::size_t d = x_known.size();
  if (mask.dim() != d) throw ShapeError("inpaint: mask dimension does not match the known point");
  if (mask.count_hidden() == 0) throw Error("inpaint: mask must leave at least one dimension unobserved");
  Tensor x = std::move(x0).as_batch();
  if (x.cols() != d) throw ShapeError("inpaint: initial chains have " + std::to_string(x.cols()) + " columns");
  const std::size_t n = x.rows();
  SampleResult result;
  for (std::size_t i = 1; i <= schedule.levels(); ++i) {
    const double alpha = schedule.step_size(i, config.epsilon);
    const double sigma = schedule.sigma(i);
    Tensor y(Shape(n, d));
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t k = 0; k < d; ++k) y(c, k) = x_known[k] + sigma * rng.normal();
    for (std::size_t t = 1; t <= config.steps; ++t) {
      detail::langevin_step(x, score, i, alpha, rng);
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t k = 0; k < d; ++k)
          if (mask.observed(k)) x(c, k) = y(c, k);
      detail::guard_iterate(x, i, t);
      if (config.record_every && t % config.record_every == 0) result.trajectory.snapshots.push_back({i, t, x});
    }
  }
  result.samples = std::move(x);
  return result;
}

// n x D chains uniform on the box [lo, hi]^D.
inline Tensor uniform_init(std::size_t n, std::size_t dim, double lo, double hi, Rng& rng) {
  return rng.uniform_tensor(Shape(n, dim), lo, hi);
}

// Fraction of samples nearest (Euclidean) to each mode; ties go to the lowest index.
inline std::vector<double> mode_weight(const Tensor& samples, const Tensor& modes) {
  const Tensor m = modes.as_batch();
  if (m.rows() == 0) throw Error("mode_weight: at least one mode required");
  const Tensor x = samples.as_batch();
  if (x.cols() != m.cols()) throw ShapeError("mode_weight: sample and mode dimensions differ");
  std::vector<double> counts(m.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.rows(); ++k) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) {
        const double diff = x(i, j) - m(k, j);
        d2 += diff * diff;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = k;
      }
    }
    counts[best] += 1.0;
  }
  if (x.rows() > 0)
    for (double& c : counts) c /= static_cast<double>(x.rows());
  return counts;
}

// Columns chain, level, step, x1..xD; final samples get level L and step T.
inline std::string trajectory_to_csv(const Trajectory& traj, std::size_t dim) {
  std::string out = "chain,level,step";
  for (std::size_t d = 0; d < dim; ++d) out += ",x" + std::to_string(d + 1);
  out += '\n';
  for (const auto& snap : traj.snapshots) {
    for (std::size_t c = 0; c < snap.samples.rows(); ++c) {
      out += std::to_string(c) + ',' + std::to_string(snap.level) + ',' + std::to_string(snap.step);
      for (std::size_t d = 0; d < dim; ++d) out += ',' + csv::format(snap.samples(c, d));
      out += '\n';
    }
  }
  return out;
}

}  // namespace ncsn

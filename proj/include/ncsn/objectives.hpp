#pragma once

// Score-matching objectives as differentiable scalars over a data batch:
// exact score matching (Jacobian trace), sliced score matching (random
// projections through forward-mode tangents), denoising score matching at one
// noise level, and the lambda-weighted sum over all levels.

#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ncsn/autodiff.hpp"
#include "ncsn/network.hpp"
#include "ncsn/random.hpp"
#include "ncsn/schedule.hpp"

namespace ncsn {

// Unconditional score model: n x D batch -> n x D scores.
using ScoreFn = std::function<ad::Var(const ad::Var&)>;
// Noise-conditional score model; level is 1-based.
using ConditionalScoreFn = std::function<ad::Var(const ad::Var&, std::size_t)>;
using Weighting = std::function<double(double sigma)>;

enum class Objective { Esm, Ssm, Dsm, Ncsn };

inline const char* objective_name(Objective o) {
  switch (o) {
    case Objective::Esm: return "esm";
    case Objective::Ssm: return "ssm";
    case Objective::Dsm: return "dsm";
    case Objective::Ncsn: return "ncsn";
  }
  return "?";
}

inline Objective parse_objective(const std::string& s) {
  if (s == "esm") return Objective::Esm;
  if (s == "ssm") return Objective::Ssm;
  if (s == "dsm") return Objective::Dsm;
  if (s == "ncsn") return Objective::Ncsn;
  throw ConfigError("unknown objective '" + s + "' (expected esm|ssm|dsm|ncsn)");
}

inline Weighting sigma_squared_weighting() {
  return [](double s) { return s * s; };
}

inline ConditionalScoreFn as_conditional(const NcsnMlp& net) {
  return [&net](const ad::Var& x, std::size_t level) { return net.forward(x, level); };
}
inline ScoreFn at_level(const NcsnMlp& net, std::size_t level) {
  net.schedule().check_level(level);
  return [&net, level](const ad::Var& x) { return net.forward(x, level); };
}

struct LossValue {
  ad::Var total;
  // Per-level breakdown: raw loss, its weight, and the level's sigma. Single
  // objectives carry one entry with weight 1.
  std::vector<std::size_t> levels;
  std::vector<double> sigmas;
  std::vector<double> raw;
  std::vector<double> weights;

  double value() const { return total.value().item(); }

  double weighted_mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) s += weights[i] * raw[i];
    return raw.empty() ? 0.0 : s / static_cast<double>(raw.size());
  }
};

namespace detail {

inline ad::Var tangent_or_zero(const ad::Var& out) {
  return out.has_tangent() ? out.tangent() : ad::constant(Tensor(out.shape()));
}

inline void require_batch(const Tensor& batch, const char* who) {
  if (batch.rank() != 2 || batch.rows() == 0)
    throw ShapeError(std::string(who) + ": expected a non-empty n x D batch, got " + batch.shape().str());
}

inline LossValue single(ad::Var total, std::size_t level = 0, double sigma = 0.0) {
  LossValue l;
  l.raw = {total.value().item()};
  l.weights = {1.0};
  l.levels = {level};
  l.sigmas = {sigma};
  l.total = std::move(total);
  return l;
}

}  // namespace detail

// Per-sample Jacobian trace tr(d s / d x) from D basis-direction tangents.
inline std::vector<double> jacobian_trace(const ScoreFn& s, const Tensor& batch) {
  detail::require_batch(batch, "jacobian_trace");
  const std::size_t n = batch.rows(), d = batch.cols();
  std::vector<double> trace(n, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    Tensor basis(batch.shape());
    for (std::size_t i = 0; i < n; ++i) basis(i, k) = 1.0;
    ad::Var jv = detail::tangent_or_zero(s(ad::dual(batch, basis)));
    for (std::size_t i = 0; i < n; ++i) trace[i] += jv.value()(i, k);
  }
  return trace;
}

// mean_x [ tr(d s / d x) + 1/2 |s(x)|^2 ], trace assembled exactly.
inline LossValue esm_exact(const ScoreFn& s, const Tensor& batch) {
  detail::require_batch(batch, "esm_exact");
  const std::size_t n = batch.rows(), d = batch.cols();
  if (d > 16) throw Error("esm_exact: exact trace limited to D <= 16, got " + std::to_string(d));
  std::optional<ad::Var> acc;
  for (std::size_t k = 0; k < d; ++k) {
    Tensor basis(batch.shape());
    for (std::size_t i = 0; i < n; ++i) basis(i, k) = 1.0;
    ad::Var out = s(ad::dual(batch, basis));
    ad::Var term = ad::dot(ad::constant(basis), detail::tangent_or_zero(out));
    if (k == 0) term = ad::add(term, ad::scale(ad::sqnorm(out), 0.5));
    acc = acc ? ad::add(*acc, term) : term;
  }
  return detail::single(ad::scale(*acc, 1.0 / static_cast<double>(n)));
}

// Sliced score matching with caller-supplied projection batches (each n x D).
inline LossValue ssm_with_projections(const ScoreFn& s, const Tensor& batch, const std::vector<Tensor>& projections) {
  detail::require_batch(batch, "ssm");
  if (projections.empty()) throw Error("ssm: at least one projection required");
  std::optional<ad::Var> acc;
  for (const Tensor& v : projections) {
    ad::Var out = s(ad::dual(batch, v));
    ad::Var term = ad::add(ad::dot(ad::constant(v), detail::tangent_or_zero(out)), ad::scale(ad::sqnorm(out), 0.5));
    acc = acc ? ad::add(*acc, term) : term;
  }
  const double norm = static_cast<double>(batch.rows() * projections.size());
  return detail::single(ad::scale(*acc, 1.0 / norm));
}

// mean over x and v ~ N(0, I) of [ v^T (d s / d x) v + 1/2 |s(x)|^2 ].
inline LossValue ssm(const ScoreFn& s, const Tensor& batch, std::size_t n_projections, Rng& rng) {
  if (n_projections == 0) throw Error("ssm: at least one projection required");
  std::vector<Tensor> projections;
  for (std::size_t p = 0; p < n_projections; ++p) projections.push_back(rng.normal_tensor(batch.shape()));
  return ssm_with_projections(s, batch, projections);
}

// Denoising score matching at one noise level:
// 1/2 mean | s(x~, i) + (x~ - x) / sigma_i^2 |^2 with x~ = x + sigma_i z.
inline LossValue dsm_level(const ConditionalScoreFn& s, const Tensor& batch, std::size_t level,
                           const NoiseSchedule& schedule, Rng& rng) {
  detail::require_batch(batch, "dsm");
  const double sigma = schedule.sigma(level);
  if (!(sigma > 0.0)) throw Error("dsm: sigma must be positive");
  Tensor noisy = batch;
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += sigma * rng.normal();
  Tensor diff = noisy;
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= batch[i];
  ad::Var out = s(ad::constant(std::move(noisy)), level);
  ad::Var residual = ad::add(out, ad::scale(ad::constant(std::move(diff)), 1.0 / (sigma * sigma)));
  ad::Var loss = ad::scale(ad::sqnorm(residual), 0.5 / static_cast<double>(batch.rows()));
  return detail::single(loss, level, sigma);
}

// (1/L) sum_i lambda(sigma_i) l(theta; sigma_i), all levels on the same batch
// with independent noise.
inline LossValue ncsn_loss(const ConditionalScoreFn& s, const Tensor& batch, const NoiseSchedule& schedule,
                           const Weighting& lambda, Rng& rng) {
  detail::require_batch(batch, "ncsn_loss");
  const std::size_t levels = schedule.levels();
  LossValue result;
  std::optional<ad::Var> acc;
  for (std::size_t i = 1; i <= levels; ++i) {
    LossValue level = dsm_level(s, batch, i, schedule, rng);
    const double w = lambda(schedule.sigma(i));
    ad::Var term = ad::scale(level.total, w / static_cast<double>(levels));
    acc = acc ? ad::add(*acc, term) : term;
    result.levels.push_back(i);
    result.sigmas.push_back(schedule.sigma(i));
    result.raw.push_back(level.raw.front());
    result.weights.push_back(w);
  }
  result.total = *acc;
  return result;
}

}  // namespace ncsn

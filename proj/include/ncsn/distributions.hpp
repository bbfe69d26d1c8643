#pragma once

// Analytic toy distributions: isotropic Gaussian mixtures with exact
// densities, scores, Gaussian perturbations and coordinate conditionals, plus
// a low-dimensional manifold dataset. These double as test oracles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "ncsn/error.hpp"
#include "ncsn/random.hpp"
#include "ncsn/tensor.hpp"

namespace ncsn {

// Per-dimension observation flags; true = observed / kept.
class DimensionMask {
public:
  DimensionMask() = default;
  explicit DimensionMask(std::vector<bool> observed) : observed_(std::move(observed)) {}

  std::size_t dim() const { return observed_.size(); }
  bool observed(std::size_t d) const { return observed_[d]; }
  std::size_t count_observed() const { return static_cast<std::size_t>(std::count(observed_.begin(), observed_.end(), true)); }
  std::size_t count_hidden() const { return dim() - count_observed(); }

  std::vector<std::size_t> hidden_dims() const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < dim(); ++d)
      if (!observed_[d]) out.push_back(d);
    return out;
  }
  std::vector<std::size_t> observed_dims() const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < dim(); ++d)
      if (observed_[d]) out.push_back(d);
    return out;
  }

private:
  std::vector<bool> observed_;
};

class IsotropicGaussianMixture {
public:
  // means: K x D matrix; one weight and one variance per component.
  IsotropicGaussianMixture(std::vector<double> weights, Tensor means, std::vector<double> variances)
      : weights_(std::move(weights)), means_(std::move(means).as_batch()), variances_(std::move(variances)) {
    const std::size_t k = weights_.size();
    if (k == 0) throw Error("mixture: at least one component required");
    if (means_.rows() != k || variances_.size() != k)
      throw ShapeError("mixture: " + std::to_string(k) + " weights but means " + means_.shape().str() + " and " +
                       std::to_string(variances_.size()) + " variances");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0)) throw Error("mixture: weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error("mixture: weights sum to " + std::to_string(total) + ", not 1");
    for (double v : variances_)
      if (!(v > 0.0)) throw Error("mixture: variances must be positive");
    log_weights_.reserve(k);
    for (double w : weights_) log_weights_.push_back(std::log(w));
  }

  static IsotropicGaussianMixture standard_normal(std::size_t dim) {
    return IsotropicGaussianMixture({1.0}, Tensor(Shape(1, dim)), {1.0});
  }

  // 1/5 N((-5,-5), I) + 4/5 N((5,5), I).
  static IsotropicGaussianMixture two_mode() {
    return IsotropicGaussianMixture({0.2, 0.8}, Tensor::matrix({{-5.0, -5.0}, {5.0, 5.0}}), {1.0, 1.0});
  }

  std::size_t dim() const { return means_.cols(); }
  std::size_t components() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& variances() const { return variances_; }
  const Tensor& means() const { return means_; }
  Tensor mean(std::size_t k) const { return means_.row_tensor(k); }

  Tensor sample(std::size_t n, Rng& rng) const {
    if (n == 0) throw Error("mixture: sample count must be positive");
    Tensor out(Shape(n, dim()));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = pick_component(rng.uniform());
      const double sd = std::sqrt(variances_[k]);
      for (std::size_t d = 0; d < dim(); ++d) out(i, d) = means_(k, d) + sd * rng.normal();
    }
    return out;
  }

  // log pi_k + log N(x; mu_k, v_k I) for every component.
  std::vector<double> component_log_joint(std::span<const double> x) const {
    check_dim(x.size());
    std::vector<double> lp(components());
    const double dd = static_cast<double>(dim());
    for (std::size_t k = 0; k < components(); ++k) {
      double sq = 0.0;
      for (std::size_t d = 0; d < dim(); ++d) {
        const double diff = x[d] - means_(k, d);
        sq += diff * diff;
      }
      lp[k] = log_weights_[k] - 0.5 * dd * std::log(2.0 * std::numbers::pi * variances_[k]) -
              0.5 * sq / variances_[k];
    }
    return lp;
  }

  double log_density(std::span<const double> x) const { return log_sum_exp(component_log_joint(x)); }
  double log_density(const Tensor& x) const { return log_density(x.values()); }

  // Posterior responsibilities, computed in log space with max subtraction.
  std::vector<double> responsibilities(std::span<const double> x) const {
    auto lp = component_log_joint(x);
    const double m = *std::max_element(lp.begin(), lp.end());
    double total = 0.0;
    for (double& v : lp) {
      v = std::exp(v - m);
      total += v;
    }
    for (double& v : lp) v /= total;
    return lp;
  }

  Tensor score(std::span<const double> x) const {
    auto r = responsibilities(x);
    Tensor s{Shape(dim())};
    for (std::size_t k = 0; k < components(); ++k)
      for (std::size_t d = 0; d < dim(); ++d) s[d] += r[k] * (means_(k, d) - x[d]) / variances_[k];
    return s;
  }
  Tensor score(const Tensor& x) const { return score(x.values()); }

  // Row-wise score of an n x D batch.
  Tensor score_batch(const Tensor& batch) const {
    Tensor out(Shape(batch.rows(), dim()));
    for (std::size_t i = 0; i < batch.rows(); ++i) {
      Tensor s = score(batch.row(i));
      std::copy(s.values().begin(), s.values().end(), out.row(i).begin());
    }
    return out;
  }

  // Exact convolution with N(0, sigma^2 I).
  IsotropicGaussianMixture perturb(double sigma) const {
    if (!(sigma >= 0.0)) throw Error("mixture: perturbation sigma must be non-negative");
    std::vector<double> v = variances_;
    for (double& x : v) x += sigma * sigma;
    return IsotropicGaussianMixture(weights_, means_, std::move(v));
  }

  // Distribution of the hidden coordinates given the observed ones. `observed`
  // is a full D-vector; entries at hidden coordinates are ignored.
  IsotropicGaussianMixture conditional(const DimensionMask& mask, std::span<const double> observed) const {
    if (mask.dim() != dim() || observed.size() != dim())
      throw ShapeError("mixture: conditional mask/observation dimension mismatch");
    if (mask.count_observed() == 0 || mask.count_hidden() == 0)
      throw Error("mixture: conditional needs at least one observed and one hidden dimension");
    const auto hid = mask.hidden_dims();
    const auto lw = conditional_log_weights(mask, observed);
    if (!std::isfinite(*std::max_element(lw.begin(), lw.end())))
      throw NumericalError("mixture: conditional weights underflow");
    std::vector<double> w;
    std::vector<double> vars;
    std::vector<double> mu;
    for (std::size_t k = 0; k < components(); ++k) {
      const double wk = std::exp(lw[k]);
      // Components with zero posterior weight drop out of the conditional.
      if (wk <= 0.0) continue;
      w.push_back(wk);
      vars.push_back(variances_[k]);
      for (std::size_t d : hid) mu.push_back(means_(k, d));
    }
    if (w.empty()) throw NumericalError("mixture: all conditional weights underflow to zero");
    // Renormalise so the sum is 1 to rounding.
    double s = 0.0;
    for (double x : w) s += x;
    for (double& x : w) x /= s;
    Tensor means = Tensor::matrix(vars.size(), hid.size(), std::move(mu));
    return IsotropicGaussianMixture(std::move(w), std::move(means), std::move(vars));
  }

  // Normalised log posterior weight of each component given the observed
  // coordinates.
  std::vector<double> conditional_log_weights(const DimensionMask& mask, std::span<const double> observed) const {
    std::vector<double> lw(components());
    const auto obs = mask.observed_dims();
    for (std::size_t k = 0; k < components(); ++k) {
      double sq = 0.0;
      for (std::size_t d : obs) {
        const double diff = observed[d] - means_(k, d);
        sq += diff * diff;
      }
      lw[k] = log_weights_[k] - 0.5 * static_cast<double>(obs.size()) * std::log(2.0 * std::numbers::pi * variances_[k]) -
              0.5 * sq / variances_[k];
    }
    const double lse = log_sum_exp(lw);
    for (double& v : lw) v -= lse;
    return lw;
  }

  static double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
  }

private:
  std::size_t pick_component(double u) const {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < weights_.size(); ++k) {
      acc += weights_[k];
      if (u < acc) return k;
    }
    return weights_.size() - 1;
  }

  void check_dim(std::size_t n) const {
    if (n != dim()) throw ShapeError("mixture: point of dimension " + std::to_string(n) + ", expected " + std::to_string(dim()));
  }

  std::vector<double> weights_;
  Tensor means_;
  std::vector<double> variances_;
  std::vector<double> log_weights_;
};

// Points on a 1-D curve embedded in R^D, optionally blurred by isotropic noise.
class ManifoldDataset {
public:
  enum class Kind { Segment, Circle };

  static ManifoldDataset segment(Tensor from, Tensor to, double noise_sigma = 0.0) {
    if (from.size() != to.size() || from.size() == 0) throw ShapeError("manifold: segment endpoints differ in dimension");
    ManifoldDataset ds(Kind::Segment, from.size(), noise_sigma);
    ds.from_ = std::move(from);
    ds.to_ = std::move(to);
    return ds;
  }

  // Circle of `radius` about the origin in the first two coordinates.
  static ManifoldDataset circle(double radius, std::size_t dim = 2, double noise_sigma = 0.0) {
    if (dim < 2) throw ShapeError("manifold: circle needs at least two dimensions");
    ManifoldDataset ds(Kind::Circle, dim, noise_sigma);
    ds.radius_ = radius;
    return ds;
  }

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  double noise_sigma() const { return noise_sigma_; }
  ManifoldDataset with_noise(double sigma) const {
    ManifoldDataset ds = *this;
    if (!(sigma >= 0.0)) throw Error("manifold: noise sigma must be non-negative");
    ds.noise_sigma_ = sigma;
    return ds;
  }

  Tensor sample(std::size_t n, Rng& rng) const {
    if (n == 0) throw Error("manifold: sample count must be positive");
    Tensor out(Shape(n, dim_));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = rng.uniform();
      if (kind_ == Kind::Segment) {
        for (std::size_t d = 0; d < dim_; ++d) out(i, d) = from_[d] + t * (to_[d] - from_[d]);
      } else {
        const double angle = 2.0 * std::numbers::pi * t;
        out(i, 0) = radius_ * std::cos(angle);
        out(i, 1) = radius_ * std::sin(angle);
      }
      if (noise_sigma_ > 0.0)
        for (std::size_t d = 0; d < dim_; ++d) out(i, d) += noise_sigma_ * rng.normal();
    }
    return out;
  }

private:
  ManifoldDataset(Kind kind, std::size_t dim, double noise_sigma) : kind_(kind), dim_(dim), noise_sigma_(noise_sigma) {
    if (!(noise_sigma >= 0.0)) throw Error("manifold: noise sigma must be non-negative");
  }

  Kind kind_;
  std::size_t dim_;
  double noise_sigma_;
  Tensor from_;
  Tensor to_;
  double radius_ = 1.0;
};

}  // namespace ncsn

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ncsn/autodiff.hpp"
#include "ncsn/random.hpp"
#include "ncsn/schedule.hpp"
#include "ncsn/tensor.hpp"

namespace ncsn {

struct NetworkShape {
  std::size_t dim = 2;
  std::size_t hidden = 128;
  std::size_t layers = 3;

  bool operator==(const NetworkShape&) const = default;
};

// Noise-conditional score network s(x, i): R^D x {1..L} -> R^D.
//
// Each hidden layer computes softplus(gamma[i] * (W h + b) + beta[i]) where
// gamma and beta are rows of per-layer L x W conditioning tables. Parameters
// are stored in a fixed order, which is also the checkpoint order:
//
//   W_1, b_1, ..., W_H, b_H, W_out, b_out, gamma_1, beta_1, ..., gamma_H, beta_H
//
// W_1 is W x D, W_k (k > 1) is W x W, W_out is D x W, and every gamma/beta
// table is L x W.
class NcsnMlp {
public:
  NcsnMlp(NetworkShape shape, NoiseSchedule schedule, std::vector<ad::Var> params)
      : shape_(shape), schedule_(std::move(schedule)), params_(std::move(params)) {
    if (shape_.dim == 0 || shape_.hidden == 0 || shape_.layers == 0) throw Error("network: dimensions must be >= 1");
    auto expected = expected_shapes(shape_, schedule_.levels());
    if (params_.size() != expected.size())
      throw ShapeError("network: expected " + std::to_string(expected.size()) + " parameter tensors, got " +
                       std::to_string(params_.size()));
    for (std::size_t i = 0; i < expected.size(); ++i)
      if (!(params_[i].shape() == expected[i]))
        throw ShapeError("network: parameter " + std::to_string(i) + " has shape " + params_[i].shape().str() +
                         ", expected " + expected[i].str());
  }

  // Fan-in scaled uniform weights and biases; conditioning scales 1, biases 0.
  static NcsnMlp build(NetworkShape shape, NoiseSchedule schedule, Rng& rng) {
    if (shape.dim == 0 || shape.hidden == 0 || shape.layers == 0) throw Error("network: dimensions must be >= 1");
    std::vector<ad::Var> params;
    auto init = [&](std::size_t out, std::size_t in) {
      const double bound = std::sqrt(1.0 / static_cast<double>(in));
      params.push_back(ad::variable(rng.uniform_tensor(Shape(out, in), -bound, bound)));
      params.push_back(ad::variable(rng.uniform_tensor(Shape(out), -bound, bound)));
    };
    init(shape.hidden, shape.dim);
    for (std::size_t l = 1; l < shape.layers; ++l) init(shape.hidden, shape.hidden);
    init(shape.dim, shape.hidden);
    const std::size_t levels = schedule.levels();
    for (std::size_t l = 0; l < shape.layers; ++l) {
      params.push_back(ad::variable(Tensor(Shape(levels, shape.hidden), 1.0)));
      params.push_back(ad::variable(Tensor(Shape(levels, shape.hidden), 0.0)));
    }
    return NcsnMlp(shape, std::move(schedule), std::move(params));
  }

  static std::vector<Shape> expected_shapes(const NetworkShape& s, std::size_t levels) {
    std::vector<Shape> out;
    out.emplace_back(s.hidden, s.dim);
    out.emplace_back(s.hidden);
    for (std::size_t l = 1; l < s.layers; ++l) {
      out.emplace_back(s.hidden, s.hidden);
      out.emplace_back(s.hidden);
    }
    out.emplace_back(s.dim, s.hidden);
    out.emplace_back(s.dim);
    for (std::size_t l = 0; l < s.layers; ++l) {
      out.emplace_back(levels, s.hidden);
      out.emplace_back(levels, s.hidden);
    }
    return out;
  }

  // Copies own fresh parameter leaves.
  NcsnMlp(const NcsnMlp& o) : shape_(o.shape_), schedule_(o.schedule_) { clone_params(o); }
  NcsnMlp& operator=(const NcsnMlp& o) {
    if (this != &o) {
      shape_ = o.shape_;
      schedule_ = o.schedule_;
      clone_params(o);
    }
    return *this;
  }
  NcsnMlp(NcsnMlp&&) noexcept = default;
  NcsnMlp& operator=(NcsnMlp&&) noexcept = default;

  const NetworkShape& shape() const { return shape_; }
  std::size_t dim() const { return shape_.dim; }
  std::size_t levels() const { return schedule_.levels(); }
  const NoiseSchedule& schedule() const { return schedule_; }

  const std::vector<ad::Var>& parameters() const { return params_; }
  std::vector<ad::Var>& parameters() { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value().size();
    return n;
  }

  ad::Var& gamma(std::size_t layer) { return params_[2 * shape_.layers + 2 + 2 * layer]; }
  ad::Var& beta(std::size_t layer) { return params_[2 * shape_.layers + 3 + 2 * layer]; }

  // x is an n x D batch; returns n x D scores at noise level `level` (1-based).
  ad::Var forward(const ad::Var& x, std::size_t level) const {
    schedule_.check_level(level);
    if (x.shape().rank() != 2 || x.value().cols() != shape_.dim)
      throw ShapeError("network: input " + x.shape().str() + " does not have " + std::to_string(shape_.dim) + " columns");
    const std::size_t row = level - 1;
    const std::size_t h = shape_.layers;
    ad::Var act = x;
    for (std::size_t l = 0; l < h; ++l) {
      ad::Var pre = ad::add_row(ad::matmul_nt(act, params_[2 * l]), params_[2 * l + 1]);
      pre = ad::mul_row(pre, ad::select_row(params_[2 * h + 2 + 2 * l], row));
      pre = ad::add_row(pre, ad::select_row(params_[2 * h + 3 + 2 * l], row));
      act = ad::softplus(pre);
    }
    return ad::add_row(ad::matmul_nt(act, params_[2 * h]), params_[2 * h + 1]);
  }

  // Plain evaluation of a vector or a batch.
  Tensor operator()(const Tensor& x, std::size_t level) const {
    const bool single = x.rank() == 1;
    Tensor out = forward(ad::constant(x.as_batch()), level).value();
    return single ? out.reshaped(Shape(out.cols())) : out;
  }

private:
  void clone_params(const NcsnMlp& o) {
    params_.clear();
    params_.reserve(o.params_.size());
    for (const auto& p : o.params_) params_.push_back(ad::variable(p.value()));
  }

  NetworkShape shape_;
  NoiseSchedule schedule_;
  std::vector<ad::Var> params_;
};

}  // namespace ncsn

#pragma once

// Minimal reverse-mode autodiff over rank<=2 double tensors with forward-mode
// tangents that are themselves graph nodes. A primitive whose input carries a
// tangent emits an output tangent built from ordinary primitives, so a scalar
// assembled from tangents can be differentiated again by `grad`
// (forward-over-reverse second order).

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ncsn/error.hpp"
#include "ncsn/tensor.hpp"

namespace ncsn::ad {

enum class Op {
  Leaf,
  Constant,
  MatVec,
  MatMulNT,
  Add,
  Sub,
  Mul,
  Scale,
  AddRow,
  MulRow,
  SelectRow,
  Softplus,
  Sigmoid,
  Sum,
  SqNorm,
  Dot,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::MatVec: return "matvec";
    case Op::MatMulNT: return "matmul_nt";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddRow: return "add_row";
    case Op::MulRow: return "mul_row";
    case Op::SelectRow: return "select_row";
    case Op::Softplus: return "softplus";
    case Op::Sigmoid: return "sigmoid";
    case Op::Sum: return "sum";
    case Op::SqNorm: return "sqnorm";
    case Op::Dot: return "dot";
  }
  return "?";
}

struct Node {
  Tensor value;
  Op op = Op::Constant;
  std::vector<std::shared_ptr<Node>> parents;
  std::shared_ptr<Node> tangent;
  double factor = 0.0;    // Scale
  std::size_t index = 0;  // SelectRow
  std::uint64_t id = 0;   // nonzero for differentiable leaves
};

namespace detail {

inline std::uint64_t next_leaf_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

// Set while a primitive builds the tangent of its output: primitives invoked
// from a tangent rule must not grow tangents of their own.
inline bool& tangents_suspended() {
  thread_local bool suspended = false;
  return suspended;
}

class SuspendTangents {
public:
  SuspendTangents() : previous_(tangents_suspended()) { tangents_suspended() = true; }
  ~SuspendTangents() { tangents_suspended() = previous_; }
  SuspendTangents(const SuspendTangents&) = delete;
  SuspendTangents& operator=(const SuspendTangents&) = delete;

private:
  bool previous_;
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap as_mat(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MatMap as_mat(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }
inline double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  double e = std::exp(a);
  return e / (1.0 + e);
}

inline void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace detail

// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Op op() const { return node_->op; }
  std::uint64_t id() const { return node_->id; }
  bool valid() const { return static_cast<bool>(node_); }

  bool has_tangent() const { return static_cast<bool>(node_->tangent); }
  Var tangent() const {
    if (!node_->tangent) throw Error("autodiff: node '" + std::string(op_name(op())) + "' carries no tangent");
    return Var(node_->tangent);
  }
  std::optional<Var> maybe_tangent() const {
    if (!node_->tangent) return std::nullopt;
    return Var(node_->tangent);
  }

  // Leaves only: parameters are updated in place between graph builds.
  Tensor& mutable_value() {
    if (node_->op != Op::Leaf) throw Error("autodiff: only leaves may be mutated");
    return node_->value;
  }

  const std::shared_ptr<Node>& node() const { return node_; }

private:
  std::shared_ptr<Node> node_;
};

// Differentiable leaf (parameter or input).
inline Var variable(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = Op::Leaf;
  n->id = detail::next_leaf_id();
  return Var(std::move(n));
}

inline Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = Op::Constant;
  return Var(std::move(n));
}

// Differentiable leaf seeded with a forward-mode direction.
inline Var dual(Tensor value, const Tensor& direction) {
  if (!(value.shape() == direction.shape()))
    throw ShapeError("dual: value " + value.shape().str() + " vs direction " + direction.shape().str());
  Var v = variable(std::move(value));
  v.node()->tangent = constant(direction).node();
  return v;
}

namespace detail {

inline Var make(Op op, Tensor value, std::vector<std::shared_ptr<Node>> parents) {
  if (!value.all_finite())
    throw NumericalError(std::string("autodiff: primitive '") + op_name(op) + "' produced a non-finite value");
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->parents = std::move(parents);
  return Var(std::move(n));
}

inline bool wants_tangent(std::initializer_list<const Var*> inputs) {
  if (tangents_suspended()) return false;
  for (const Var* v : inputs)
    if (v->has_tangent()) return true;
  return false;
}

inline void attach(Var& out, const std::optional<Var>& tangent) {
  if (tangent) out.node()->tangent = tangent->node();
}

[[noreturn]] inline void shape_mismatch(const char* prim, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(prim) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace detail

Var add(const Var& a, const Var& b);

namespace detail {
inline std::optional<Var> plus(std::optional<Var> a, std::optional<Var> b) {
  if (a && b) return add(*a, *b);
  return a ? a : b;
}
}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  if (!(a.shape() == b.shape())) detail::shape_mismatch("add", a.shape(), b.shape());
  Tensor out = a.value();
  detail::add_into(out, b.value());
  Var r = detail::make(Op::Add, std::move(out), {a.node(), b.node()});
  if (detail::wants_tangent({&a, &b})) {
    detail::SuspendTangents guard;
    detail::attach(r, detail::plus(a.maybe_tangent(), b.maybe_tangent()));
  }
  return r;
}

Var scale(const Var& a, double factor);

inline Var sub(const Var& a, const Var& b) {
  if (!(a.shape() == b.shape())) detail::shape_mismatch("sub", a.shape(), b.shape());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  Var r = detail::make(Op::Sub, std::move(out), {a.node(), b.node()});
  if (detail::wants_tangent({&a, &b})) {
    detail::SuspendTangents guard;
    auto ta = a.maybe_tangent();
    auto tb = b.maybe_tangent();
    if (ta && tb) detail::attach(r, sub(*ta, *tb));
    else if (ta) detail::attach(r, ta);
    else detail::attach(r, scale(*tb, -1.0));
  }
  return r;
}

// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  if (!(a.shape() == b.shape())) detail::shape_mismatch("mul", a.shape(), b.shape());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  Var r = detail::make(Op::Mul, std::move(out), {a.node(), b.node()});
  if (detail::wants_tangent({&a, &b})) {
    detail::SuspendTangents guard;
    std::optional<Var> t;
    if (auto ta = a.maybe_tangent()) t = mul(*ta, b);
    if (auto tb = b.maybe_tangent()) t = detail::plus(t, mul(a, *tb));
    detail::attach(r, t);
  }
  return r;
}

inline Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  Var r = detail::make(Op::Scale, std::move(out), {a.node()});
  r.node()->factor = factor;
  if (detail::wants_tangent({&a})) {
    detail::SuspendTangents guard;
    detail::attach(r, scale(a.tangent(), factor));
  }
  return r;
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

// Matrix-vector product W[m x k] . x[k] -> [m].
inline Var matvec(const Var& w, const Var& x) {
  if (w.shape().rank() != 2 || x.shape().rank() != 1 || w.value().cols() != x.value().size())
    detail::shape_mismatch("matvec", w.shape(), x.shape());
  Tensor out(Shape(w.value().rows()));
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())).noalias() =
      detail::as_mat(w.value()) *
      Eigen::Map<const Eigen::VectorXd>(x.value().data(), static_cast<Eigen::Index>(x.value().size()));
  Var r = detail::make(Op::MatVec, std::move(out), {w.node(), x.node()});
  if (detail::wants_tangent({&w, &x})) {
    detail::SuspendTangents guard;
    std::optional<Var> t;
    if (auto tw = w.maybe_tangent()) t = matvec(*tw, x);
    if (auto tx = x.maybe_tangent()) t = detail::plus(t, matvec(w, *tx));
    detail::attach(r, t);
  }
  return r;
}

// Batched affine core: X[n x k] . W[m x k]^T -> [n x m].
inline Var matmul_nt(const Var& x, const Var& w) {
  if (x.shape().rank() != 2 || w.shape().rank() != 2 || x.value().cols() != w.value().cols())
    detail::shape_mismatch("matmul_nt", x.shape(), w.shape());
  Tensor out(Shape(x.value().rows(), w.value().rows()));
  detail::as_mat(out).noalias() = detail::as_mat(x.value()) * detail::as_mat(w.value()).transpose();
  Var r = detail::make(Op::MatMulNT, std::move(out), {x.node(), w.node()});
  if (detail::wants_tangent({&x, &w})) {
    detail::SuspendTangents guard;
    std::optional<Var> t;
    if (auto tx = x.maybe_tangent()) t = matmul_nt(*tx, w);
    if (auto tw = w.maybe_tangent()) t = detail::plus(t, matmul_nt(x, *tw));
    detail::attach(r, t);
  }
  return r;
}

// X[n x m] + b[m] added to every row.
inline Var add_row(const Var& x, const Var& b) {
  if (x.shape().rank() != 2 || b.shape().rank() != 1 || x.value().cols() != b.value().size())
    detail::shape_mismatch("add_row", x.shape(), b.shape());
  Tensor out = x.value();
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) += b.value()[j];
  Var r = detail::make(Op::AddRow, std::move(out), {x.node(), b.node()});
  if (detail::wants_tangent({&x, &b})) {
    detail::SuspendTangents guard;
    auto tx = x.maybe_tangent();
    auto tb = b.maybe_tangent();
    if (tx && tb) detail::attach(r, add_row(*tx, *tb));
    else if (tx) detail::attach(r, tx);
    else detail::attach(r, add_row(constant(Tensor(x.shape())), *tb));
  }
  return r;
}

// X[n x m] scaled columnwise by g[m].
inline Var mul_row(const Var& x, const Var& g) {
  if (x.shape().rank() != 2 || g.shape().rank() != 1 || x.value().cols() != g.value().size())
    detail::shape_mismatch("mul_row", x.shape(), g.shape());
  Tensor out = x.value();
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) *= g.value()[j];
  Var r = detail::make(Op::MulRow, std::move(out), {x.node(), g.node()});
  if (detail::wants_tangent({&x, &g})) {
    detail::SuspendTangents guard;
    std::optional<Var> t;
    if (auto tx = x.maybe_tangent()) t = mul_row(*tx, g);
    if (auto tg = g.maybe_tangent()) t = detail::plus(t, mul_row(x, *tg));
    detail::attach(r, t);
  }
  return r;
}

// Row `index` of a matrix as a vector.
inline Var select_row(const Var& table, std::size_t index) {
  if (table.shape().rank() != 2 || index >= table.value().rows())
    throw ShapeError("select_row: row " + std::to_string(index) + " out of range for " + table.shape().str());
  Var r = detail::make(Op::SelectRow, table.value().row_tensor(index), {table.node()});
  r.node()->index = index;
  if (detail::wants_tangent({&table})) {
    detail::SuspendTangents guard;
    detail::attach(r, select_row(table.tangent(), index));
  }
  return r;
}

inline Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::sigmoid(out[i]);
  Var r = detail::make(Op::Sigmoid, std::move(out), {a.node()});
  if (detail::wants_tangent({&a})) {
    detail::SuspendTangents guard;
    Var s = sigmoid(a);
    Var slope = mul(s, sub(constant(Tensor(a.shape(), 1.0)), s));
    detail::attach(r, mul(slope, a.tangent()));
  }
  return r;
}

inline Var softplus(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::softplus(out[i]);
  Var r = detail::make(Op::Softplus, std::move(out), {a.node()});
  if (detail::wants_tangent({&a})) {
    detail::SuspendTangents guard;
    detail::attach(r, mul(sigmoid(a), a.tangent()));
  }
  return r;
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  Var r = detail::make(Op::Sum, Tensor::scalar(s), {a.node()});
  if (detail::wants_tangent({&a})) {
    detail::SuspendTangents guard;
    detail::attach(r, sum(a.tangent()));
  }
  return r;
}

inline Var dot(const Var& a, const Var& b);

// Squared L2 norm of all entries.
inline Var sqnorm(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  Var r = detail::make(Op::SqNorm, Tensor::scalar(s), {a.node()});
  if (detail::wants_tangent({&a})) {
    detail::SuspendTangents guard;
    detail::attach(r, scale(dot(a, a.tangent()), 2.0));
  }
  return r;
}

// Full contraction of two same-shape tensors.
inline Var dot(const Var& a, const Var& b) {
  if (!(a.shape() == b.shape())) detail::shape_mismatch("dot", a.shape(), b.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i] * b.value()[i];
  Var r = detail::make(Op::Dot, Tensor::scalar(s), {a.node(), b.node()});
  if (detail::wants_tangent({&a, &b})) {
    detail::SuspendTangents guard;
    std::optional<Var> t;
    if (auto ta = a.maybe_tangent()) t = dot(*ta, b);
    if (auto tb = b.maybe_tangent()) t = detail::plus(t, dot(a, *tb));
    detail::attach(r, t);
  }
  return r;
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// Gradients keyed by leaf id, in the order they were requested.
class GradientMap {
public:
  void insert(std::uint64_t id, Tensor g) { entries_.emplace_back(id, std::move(g)); }

  const Tensor& operator[](const Var& v) const { return at(v.id()); }
  const Tensor& at(std::uint64_t id) const {
    for (const auto& [key, g] : entries_)
      if (key == id) return g;
    throw Error("autodiff: no gradient recorded for leaf " + std::to_string(id));
  }
  const Tensor& at_index(std::size_t i) const { return entries_.at(i).second; }
  std::size_t size() const { return entries_.size(); }

private:
  std::vector<std::pair<std::uint64_t, Tensor>> entries_;
};

namespace detail {

inline std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_map<Node*, bool> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen[root] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (!seen[p]) {
        seen[p] = true;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

inline void accumulate(std::unordered_map<Node*, Tensor>& adj, Node* n, Tensor g) {
  auto it = adj.find(n);
  if (it == adj.end()) adj.emplace(n, std::move(g));
  else add_into(it->second, g);
}

inline void backprop(Node* n, const Tensor& g, std::unordered_map<Node*, Tensor>& adj) {
  auto parent = [&](std::size_t i) { return n->parents[i].get(); };
  auto needs = [&](std::size_t i) {
    Op op = n->parents[i]->op;
    return op != Op::Constant;
  };
  switch (n->op) {
    case Op::Leaf:
    case Op::Constant:
      break;
    case Op::Add:
      if (needs(0)) accumulate(adj, parent(0), g);
      if (needs(1)) accumulate(adj, parent(1), g);
      break;
    case Op::Sub:
      if (needs(0)) accumulate(adj, parent(0), g);
      if (needs(1)) {
        Tensor t = g;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = -t[i];
        accumulate(adj, parent(1), std::move(t));
      }
      break;
    case Op::Mul: {
      const Tensor& a = parent(0)->value;
      const Tensor& b = parent(1)->value;
      if (needs(0)) {
        Tensor t = g;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] *= b[i];
        accumulate(adj, parent(0), std::move(t));
      }
      if (needs(1)) {
        Tensor t = g;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] *= a[i];
        accumulate(adj, parent(1), std::move(t));
      }
      break;
    }
    case Op::Scale: {
      if (!needs(0)) break;
      Tensor t = g;
      for (std::size_t i = 0; i < t.size(); ++i) t[i] *= n->factor;
      accumulate(adj, parent(0), std::move(t));
      break;
    }
    case Op::MatVec: {
      const Tensor& w = parent(0)->value;
      const Tensor& x = parent(1)->value;
      Eigen::Map<const Eigen::VectorXd> gv(g.data(), static_cast<Eigen::Index>(g.size()));
      if (needs(0)) {
        Tensor gw(w.shape());
        as_mat(gw).noalias() =
            gv * Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())).transpose();
        accumulate(adj, parent(0), std::move(gw));
      }
      if (needs(1)) {
        Tensor gx(x.shape());
        Eigen::Map<Eigen::VectorXd>(gx.data(), static_cast<Eigen::Index>(gx.size())).noalias() =
            as_mat(w).transpose() * gv;
        accumulate(adj, parent(1), std::move(gx));
      }
      break;
    }
    case Op::MatMulNT: {
      const Tensor& x = parent(0)->value;
      const Tensor& w = parent(1)->value;
      if (needs(0)) {
        Tensor gx(x.shape());
        as_mat(gx).noalias() = as_mat(g) * as_mat(w);
        accumulate(adj, parent(0), std::move(gx));
      }
      if (needs(1)) {
        Tensor gw(w.shape());
        as_mat(gw).noalias() = as_mat(g).transpose() * as_mat(x);
        accumulate(adj, parent(1), std::move(gw));
      }
      break;
    }
    case Op::AddRow: {
      if (needs(0)) accumulate(adj, parent(0), g);
      if (needs(1)) {
        Tensor gb(parent(1)->value.shape());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
        accumulate(adj, parent(1), std::move(gb));
      }
      break;
    }
    case Op::MulRow: {
      const Tensor& x = parent(0)->value;
      const Tensor& r = parent(1)->value;
      if (needs(0)) {
        Tensor gx = g;
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) *= r[j];
        accumulate(adj, parent(0), std::move(gx));
      }
      if (needs(1)) {
        Tensor gr(r.shape());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j) * x(i, j);
        accumulate(adj, parent(1), std::move(gr));
      }
      break;
    }
    case Op::SelectRow: {
      if (!needs(0)) break;
      Tensor gt(parent(0)->value.shape());
      auto row = gt.row(n->index);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = g[j];
      accumulate(adj, parent(0), std::move(gt));
      break;
    }
    case Op::Softplus: {
      if (!needs(0)) break;
      const Tensor& a = parent(0)->value;
      Tensor t = g;
      for (std::size_t i = 0; i < t.size(); ++i) t[i] *= sigmoid(a[i]);
      accumulate(adj, parent(0), std::move(t));
      break;
    }
    case Op::Sigmoid: {
      if (!needs(0)) break;
      const Tensor& s = n->value;
      Tensor t = g;
      for (std::size_t i = 0; i < t.size(); ++i) t[i] *= s[i] * (1.0 - s[i]);
      accumulate(adj, parent(0), std::move(t));
      break;
    }
    case Op::Sum: {
      if (!needs(0)) break;
      accumulate(adj, parent(0), Tensor(parent(0)->value.shape(), g.item()));
      break;
    }
    case Op::SqNorm: {
      if (!needs(0)) break;
      Tensor t = parent(0)->value;
      const double c = 2.0 * g.item();
      for (std::size_t i = 0; i < t.size(); ++i) t[i] *= c;
      accumulate(adj, parent(0), std::move(t));
      break;
    }
    case Op::Dot: {
      const double c = g.item();
      if (needs(0)) {
        Tensor t = parent(1)->value;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] *= c;
        accumulate(adj, parent(0), std::move(t));
      }
      if (needs(1)) {
        Tensor t = parent(0)->value;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] *= c;
        accumulate(adj, parent(1), std::move(t));
      }
      break;
    }
  }
}

}  // namespace detail

// Reverse-mode gradient of a scalar with respect to the given leaves.
// Leaves that do not influence `output` get zero gradients.
inline GradientMap grad(const Var& output, std::span<const Var> wrt) {
  if (output.value().size() != 1 || output.shape().rank() > 1)
    throw ShapeError("grad: output must be scalar, got " + output.shape().str());
  std::unordered_map<Node*, Tensor> adj;
  auto order = detail::topo_order(output.node().get());
  adj.emplace(output.node().get(), Tensor(output.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto found = adj.find(*it);
    if (found == adj.end()) continue;
    detail::backprop(*it, found->second, adj);
  }
  GradientMap result;
  for (const Var& v : wrt) {
    auto found = adj.find(v.node().get());
    result.insert(v.id(), found == adj.end() ? Tensor(v.shape()) : found->second);
  }
  return result;
}

inline GradientMap grad(const Var& output, std::initializer_list<Var> wrt) {
  return grad(output, std::span<const Var>(wrt.begin(), wrt.size()));
}

// Directional derivative (d f / d x) . v at x. The result is a graph node, so
// scalars built from it remain differentiable with respect to whatever
// parameters `f` closes over.
inline Var jvp(const std::function<Var(const Var&)>& f, const Tensor& x, const Tensor& v) {
  if (!(x.shape() == v.shape())) throw ShapeError("jvp: x " + x.shape().str() + " vs v " + v.shape().str());
  Var out = f(dual(x, v));
  if (out.has_tangent()) return out.tangent();
  return constant(Tensor(out.shape()));
}

// Worst relative error between `grad` and central differences over every
// entry of every parameter. The denominator is floored at 1e-8.
inline double check_gradient(const std::function<Var()>& loss_builder, std::vector<Var> params, double h) {
  if (!(h > 0)) throw Error("check_gradient: step must be positive");
  GradientMap analytic = grad(loss_builder(), params);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params[p].mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = loss_builder().value().item();
      value[i] = saved - h;
      const double down = loss_builder().value().item();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic.at_index(p)[i];
      const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-8});
      worst = std::max(worst, std::abs(numeric - exact) / denom);
    }
  }
  return worst;
}

}  // namespace ncsn::ad

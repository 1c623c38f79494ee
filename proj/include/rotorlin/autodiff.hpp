#pragma once

// Scalar reverse-mode differentiation.
//
// A Tape records one node per scalar operation together with the indices of
// its parents and the local partial derivative along each edge. Var is a
// value handle: constants carry no tape, so arithmetic between constants stays
// off the tape entirely. Nodes are appended in evaluation order, which makes
// the record topologically sorted by construction.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rotorlin/errors.hpp"

namespace rotorlin::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: implicit constants are the point

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::int32_t index() const { return index_; }

 private:
  friend class Tape;
  Var(double value, Tape* tape, std::int32_t index) : value_(value), tape_(tape), index_(index) {}

  double value_ = 0.0;
  Tape* tape_ = nullptr;
  std::int32_t index_ = -1;
};

class Tape {
 public:
  Tape() { offsets_.push_back(0); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // New independent variable (a leaf with no parents).
  Var variable(double value) { return finish(value); }

  std::vector<Var> variables(std::span<const double> values) {
    std::vector<Var> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(variable(v));
    return out;
  }

  std::size_t node_count() const { return offsets_.size() - 1; }
  std::size_t edge_count() const { return parents_.size(); }

  void clear() {
    offsets_.resize(1);
    parents_.clear();
    partials_.clear();
  }

  // Reverse accumulation from `output`; returns one adjoint per node.
  std::vector<double> adjoints(const Var& output) const {
    if (output.tape_ != this) throw InvalidArgument("adjoints: output is not recorded on this tape");
    std::vector<double> adj(node_count(), 0.0);
    adj[static_cast<std::size_t>(output.index_)] = 1.0;
    for (std::int64_t i = output.index_; i >= 0; --i) {
      const double a = adj[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      for (std::uint32_t e = offsets_[i]; e < offsets_[i + 1]; ++e) adj[parents_[e]] += a * partials_[e];
    }
    return adj;
  }

  // Marks every node that the output depends on.
  std::vector<bool> reachable(const Var& output) const {
    std::vector<bool> seen(node_count(), false);
    if (output.tape_ != this) return seen;
    seen[static_cast<std::size_t>(output.index_)] = true;
    for (std::int64_t i = output.index_; i >= 0; --i) {
      if (!seen[static_cast<std::size_t>(i)]) continue;
      for (std::uint32_t e = offsets_[i]; e < offsets_[i + 1]; ++e) seen[parents_[e]] = true;
    }
    return seen;
  }

  // Low-level node construction; edges are appended first, then finish().
  void edge(const Var& parent, double partial) {
    if (parent.tape_ == nullptr) return;
    if (parent.tape_ != this) throw InvalidArgument("autodiff: operands recorded on different tapes");
    parents_.push_back(parent.index_);
    partials_.push_back(partial);
  }

  Var finish(double value) {
    offsets_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return Var(value, this, static_cast<std::int32_t>(offsets_.size() - 2));
  }

 private:
  std::vector<std::uint32_t> offsets_;
  std::vector<std::int32_t> parents_;
  std::vector<double> partials_;
};

namespace detail {

inline Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape() && b.tape() && a.tape() != b.tape())
    throw InvalidArgument("autodiff: operands recorded on different tapes");
  return a.tape() ? a.tape() : b.tape();
}

inline Var unary(const Var& x, double value, double partial) {
  if (x.is_constant()) return Var(value);
  Tape* t = x.tape();
  t->edge(x, partial);
  return t->finish(value);
}

inline Var binary(const Var& a, const Var& b, double value, double pa, double pb) {
  Tape* t = common_tape(a, b);
  if (!t) return Var(value);
  t->edge(a, pa);
  t->edge(b, pb);
  return t->finish(value);
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a, b, a.value() + b.value(), 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a, b, a.value() - b.value(), 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) {
  return detail::binary(a, b, a.value() * b.value(), b.value(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  return detail::binary(a, b, q, 1.0 / b.value(), -q / b.value());
}
inline Var operator-(const Var& x) { return detail::unary(x, -x.value(), -1.0); }

inline Var operator+(const Var& a, double b) { return detail::unary(a, a.value() + b, 1.0); }
inline Var operator+(double a, const Var& b) { return detail::unary(b, a + b.value(), 1.0); }
inline Var operator-(const Var& a, double b) { return detail::unary(a, a.value() - b, 1.0); }
inline Var operator-(double a, const Var& b) { return detail::unary(b, a - b.value(), -1.0); }
inline Var operator*(const Var& a, double b) { return detail::unary(a, a.value() * b, b); }
inline Var operator*(double a, const Var& b) { return detail::unary(b, a * b.value(), a); }
inline Var operator/(const Var& a, double b) { return detail::unary(a, a.value() / b, 1.0 / b); }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return detail::unary(x, s, 0.5 / s);
}
inline Var sin(const Var& x) { return detail::unary(x, std::sin(x.value()), std::cos(x.value())); }
inline Var cos(const Var& x) { return detail::unary(x, std::cos(x.value()), -std::sin(x.value())); }
inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return detail::unary(x, e, e);
}
inline Var log(const Var& x) { return detail::unary(x, std::log(x.value()), 1.0 / x.value()); }

// Parametric ReLU with a learnable slope. The slope edge is recorded even on
// the positive branch so the slope is always reachable from the output.
inline Var prelu(const Var& x, const Var& slope) {
  if (x.value() > 0.0) return detail::binary(x, slope, x.value(), 1.0, 0.0);
  return detail::binary(x, slope, slope.value() * x.value(), slope.value(), x.value());
}

// Accumulates sum_k c_k * a_k * b_k (+ linear terms) into a single node.
class ProductSum {
 public:
  void add(double c, const Var& a, const Var& b) {
    value_ += c * a.value() * b.value();
    attach(a, c * b.value());
    attach(b, c * a.value());
  }
  void add(double c, const Var& a) {
    value_ += c * a.value();
    attach(a, c);
  }
  void add_constant(double c) { value_ += c; }

  Var finish() {
    const double v = value_;
    value_ = 0.0;
    if (!tape_) return Var(v);
    for (std::size_t k = 0; k < parents_.size(); ++k) tape_->edge(parents_[k], partials_[k]);
    parents_.clear();
    partials_.clear();
    Tape* t = tape_;
    tape_ = nullptr;
    return t->finish(v);
  }

 private:
  // Edges are buffered so that nodes created between add() calls do not
  // pick them up.
  void attach(const Var& x, double partial) {
    if (x.is_constant()) return;
    if (!tape_) tape_ = x.tape();
    else if (x.tape() != tape_) throw InvalidArgument("autodiff: operands recorded on different tapes");
    parents_.push_back(x);
    partials_.push_back(partial);
  }

  double value_ = 0.0;
  Tape* tape_ = nullptr;
  std::vector<Var> parents_;
  std::vector<double> partials_;
};

// Gradient of `output` with respect to each of `parameters`. A parameter that
// was never recorded on the tape, or that the output does not depend on,
// raises MissingGradient: it signals an untracked path.
inline std::vector<double> backward_gradients(const Tape& tape, const Var& output, std::span<const Var> parameters) {
  if (output.tape() != &tape) throw InvalidArgument("backward_gradients: loss is not recorded on this tape");
  const auto adj = tape.adjoints(output);
  const auto seen = tape.reachable(output);
  std::vector<double> grads(parameters.size());
  for (std::size_t p = 0; p < parameters.size(); ++p) {
    const Var& v = parameters[p];
    if (v.tape() != &tape || !seen[static_cast<std::size_t>(v.index())])
      throw MissingGradient("parameter " + std::to_string(p) + " is absent from the tape", p);
    grads[p] = adj[static_cast<std::size_t>(v.index())];
  }
  return grads;
}

}  // namespace rotorlin::ad

namespace rotorlin {

using ad::Var;

// Scalar traits shared by every template in the library.
inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

inline bool is_structural_zero(double x) { return x == 0.0; }
inline bool is_structural_zero(const Var& x) { return x.is_constant() && x.value() == 0.0; }

template <class T>
inline constexpr bool is_tracked_v = std::is_same_v<T, Var>;

// sum_k c_k a_k b_k for either scalar type, collapsing to one tape node for Var.
template <class T>
class ProductSum;

template <>
class ProductSum<double> {
 public:
  void add(double c, double a, double b) { value_ += c * a * b; }
  void add(double c, double a) { value_ += c * a; }
  void add_constant(double c) { value_ += c; }
  double finish() {
    const double v = value_;
    value_ = 0.0;
    return v;
  }

 private:
  double value_ = 0.0;
};

template <>
class ProductSum<Var> : public ad::ProductSum {};

inline double prelu(double x, double slope) { return x > 0.0 ? x : slope * x; }

}  // namespace rotorlin

#pragma once

// Rotors: even unit multivectors acting by x -> r x s^dagger.

#include <cmath>
#include <string>
#include <vector>

#include "rotorlin/decomposition.hpp"

namespace rotorlin {

inline constexpr double kRotorUnitTol = 1e-10;

template <class T = double>
class Rotor {
 public:
  explicit Rotor(AlgebraDim dim) : value_(Multivector<T>::scalar(dim, T(1.0))) {}

  // Checks evenness and <r r~>_0 = 1.
  explicit Rotor(Multivector<T> value, double tol = kRotorUnitTol) : value_(std::move(value)) {
    for (BladeMask m = 0; m < value_.size(); ++m)
      if (grade_of(m) % 2 == 1 && value_of(value_[m]) != 0.0)
        throw PreconditionError("rotor has odd-grade coefficient on " + blade_name(m, value_.dim()));
    double sq = 0.0;
    for (const auto& c : value_.coeffs()) sq += value_of(c) * value_of(c);
    unit_residual_ = std::abs(sq - 1.0);
    if (!(unit_residual_ <= tol))
      throw PreconditionError("rotor is not unit: |<r r~>_0 - 1| = " + std::to_string(unit_residual_));
  }

  const Multivector<T>& value() const { return value_; }
  AlgebraDim dim() const { return value_.dim(); }
  double unit_residual() const { return unit_residual_; }

 private:
  Multivector<T> value_;
  double unit_residual_ = 0.0;
};

inline Rotor<double> values(const Rotor<Var>& r) { return Rotor<double>(values(r.value())); }

// cos|b| + sin|b|/|b| b, with the sinc replaced by 1 - |b|^2/6 (and cos by
// 1 - |b|^2/2) below |b| = 1e-8 so the map stays differentiable at 0.
template <class T>
Rotor<T> clexp_simple(const Bivector<T>& b, double tol_simple = 1e-8, bool check = true) {
  const Bivector<double> bv = [&] {
    if constexpr (is_tracked_v<T>) return values(b);
    else return b;
  }();
  const double res = simplicity_residual(bv);
  const double n2v = norm_squared(bv);
  if (check && res > tol_simple * std::max(n2v, 1e-300))
    throw PreconditionError("clexp_simple: bivector is not simple, ||b^b|| = " + std::to_string(res) +
                            " for ||b||^2 = " + std::to_string(n2v));
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T n2 = norm_squared(b);
  T c, s;
  if (n2v < 1e-16) {
    c = T(1.0) - n2 * 0.5;
    s = T(1.0) - n2 * (1.0 / 6.0);
  } else {
    const T len = sqrt(n2);
    c = cos(len);
    s = sin(len) / len;
  }
  Multivector<T> r(b.dim());
  r[0] = c;
  const int n = b.n();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!is_structural_zero(b(i, j))) r[(BladeMask{1} << i) | (BladeMask{1} << j)] = s * b(i, j);
  return Rotor<T>(std::move(r));
}

// Sum_{i < terms} b^i / i! by direct products.
inline Multivector<double> exp_series(const Multivector<double>& b, int terms = 50) {
  Multivector<double> sum = Multivector<double>::scalar(b.dim(), 1.0);
  Multivector<double> term = sum;
  for (int i = 1; i < terms; ++i) {
    term = geometric_product(term, b) * (1.0 / i);
    sum += term;
  }
  return sum;
}

// r1 r2 rescaled by 1/sqrt(<r r~>_0).
template <class T>
Rotor<T> rotor_product(const Rotor<T>& r1, const Rotor<T>& r2) {
  using std::sqrt;
  auto p = geometric_product(r1.value(), r2.value());
  const T inv = T(1.0) / sqrt(norm_squared(p));
  p *= inv;
  return Rotor<T>(std::move(p));
}

template <class T>
Rotor<T> rotor_from_components(AlgebraDim dim, const std::vector<Bivector<T>>& components,
                               double tol_simple = 1e-8) {
  double scale = 0.0;
  for (const auto& c : components) scale = std::max(scale, value_norm(c));
  Rotor<T> r(dim);
  bool first = true;
  for (const auto& c : components) {
    // Round-off sized components carry no plane worth checking.
    auto f = clexp_simple(c, tol_simple, value_norm(c) > kDropRelative * scale);
    r = first ? std::move(f) : rotor_product(r, f);
    first = false;
  }
  return r;
}

// exp(b) through the invariant decomposition.
inline Rotor<double> rotor_from_bivector(const Bivector<double>& b, const PowerIterConfig& cfg = {},
                                         const std::vector<VectorR>& warm = {}) {
  const auto d = invariant_decompose(b, warm, cfg);
  return rotor_from_components(b.dim(), d.components, cfg.tol_simple);
}

// Tracked exp(b): untracked solve for the vectors, then one recorded pass.
// `warm` is updated in place with the converged vectors.
inline Rotor<Var> rotor_from_bivector_tracked(const Bivector<Var>& b, std::vector<VectorR>& warm,
                                              const PowerIterConfig& cfg, int* iterations = nullptr) {
  const auto solved = invariant_decompose(values(b), warm, cfg);
  if (iterations) {
    *iterations = 0;
    for (int it : solved.iterations_used) *iterations += it;
  }
  warm = solved.singular_vectors;
  const auto tracked = decompose_tracked(b, warm, cfg);
  return rotor_from_components(b.dim(), tracked.components, cfg.tol_simple);
}

template <class T>
Multivector<T> sandwich_two_rotor(const Rotor<T>& r, const Rotor<T>& s, const Multivector<T>& x) {
  return geometric_product(geometric_product(r.value(), x), reversion(s.value()));
}

template <class T>
Multivector<T> sandwich(const Rotor<T>& r, const Multivector<T>& x) {
  return sandwich_two_rotor(r, r, x);
}

// Row-major 2^n x 2^n matrix in blade-mask order whose row J holds r e_J s~,
// so that coeffs(r x s~) = coeffs(x) * N.
template <class T>
std::vector<T> sandwich_matrix(const Rotor<T>& r, const Rotor<T>& s) {
  const AlgebraDim dim = r.dim();
  const auto size = static_cast<BladeMask>(dim.blade_count());
  const Multivector<T> st = reversion(s.value());
  const auto& table = CayleyTable::get(dim);
  std::vector<BladeMask> live;
  for (BladeMask A = 0; A < size; ++A)
    if (!is_structural_zero(r.value()[A])) live.push_back(A);
  std::vector<T> out(static_cast<std::size_t>(size) * size, T(0.0));
  ProductSum<T> sum;
  // (r e_J) s~ = sum_A sign(A, J) r_A e_{A^J} s~.
  for (BladeMask J = 0; J < size; ++J)
    for (BladeMask I = 0; I < size; ++I) {
      for (BladeMask A : live) {
        const BladeMask AJ = A ^ J;
        const BladeMask B = AJ ^ I;
        if (is_structural_zero(st[B])) continue;
        sum.add(table.sign(A, J) * table.sign(AJ, B), r.value()[A], st[B]);
      }
      out[static_cast<std::size_t>(J) * size + I] = sum.finish();
    }
  return out;
}

}  // namespace rotorlin

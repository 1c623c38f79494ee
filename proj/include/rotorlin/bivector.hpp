#pragma once

// Bivectors stored as C(n,2) coefficients over pairs i < j in lexicographic
// order, plus the vector-level operations the decomposition needs. The skew
// matrix of b has B[i][j] = b_ij and B[j][i] = -b_ij, so b _| v = Bv.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rotorlin/clifford.hpp"

namespace rotorlin {

using VectorR = std::vector<double>;

inline std::size_t pair_count(int n) { return static_cast<std::size_t>(n) * (n - 1) / 2; }

// Position of (i, j), i < j, 0-based.
inline std::size_t pair_index(int n, int i, int j) {
  return static_cast<std::size_t>(i) * (2 * n - i - 1) / 2 + (j - i - 1);
}

template <class T = double>
class Bivector {
 public:
  explicit Bivector(AlgebraDim dim) : dim_(dim), coeffs_(dim.bivector_count(), T(0.0)) {}

  Bivector(AlgebraDim dim, std::vector<T> coeffs) : dim_(dim), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != dim.bivector_count())
      throw InvalidArgument("Bivector: expected " + std::to_string(dim.bivector_count()) + " coefficients, got " +
                            std::to_string(coeffs_.size()));
  }

  AlgebraDim dim() const { return dim_; }
  int n() const { return dim_.n(); }
  std::size_t size() const { return coeffs_.size(); }

  T& operator()(int i, int j) { return coeffs_[pair_index(n(), i, j)]; }
  const T& operator()(int i, int j) const { return coeffs_[pair_index(n(), i, j)]; }

  T& operator[](std::size_t k) { return coeffs_[k]; }
  const T& operator[](std::size_t k) const { return coeffs_[k]; }

  std::span<T> coeffs() { return coeffs_; }
  std::span<const T> coeffs() const { return coeffs_; }

  Bivector& operator+=(const Bivector& o) {
    check_same(o);
    for (std::size_t k = 0; k < coeffs_.size(); ++k) coeffs_[k] = coeffs_[k] + o.coeffs_[k];
    return *this;
  }
  Bivector& operator-=(const Bivector& o) {
    check_same(o);
    for (std::size_t k = 0; k < coeffs_.size(); ++k) coeffs_[k] = coeffs_[k] - o.coeffs_[k];
    return *this;
  }
  Bivector& operator*=(const T& s) {
    for (auto& c : coeffs_) c = c * s;
    return *this;
  }

  void check_same(const Bivector& o) const {
    if (!(dim_ == o.dim_)) throw InvalidArgument("bivector dimension mismatch");
  }

 private:
  AlgebraDim dim_;
  std::vector<T> coeffs_;
};

template <class T>
Bivector<T> operator+(Bivector<T> a, const Bivector<T>& b) {
  return a += b;
}
template <class T>
Bivector<T> operator-(Bivector<T> a, const Bivector<T>& b) {
  return a -= b;
}
template <class T>
Bivector<T> operator*(Bivector<T> a, const T& s) {
  return a *= s;
}
template <class T>
Bivector<T> operator*(const T& s, Bivector<T> a) {
  return a *= s;
}

template <class T>
Multivector<T> to_multivector(const Bivector<T>& b) {
  Multivector<T> m(b.dim());
  const int n = b.n();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m[(BladeMask{1} << i) | (BladeMask{1} << j)] = b(i, j);
  return m;
}

// Grade-2 part of a multivector.
template <class T>
Bivector<T> bivector_part(const Multivector<T>& m) {
  Bivector<T> b(m.dim());
  const int n = m.dim().n();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) b(i, j) = m[(BladeMask{1} << i) | (BladeMask{1} << j)];
  return b;
}

template <class T>
T norm_squared(const Bivector<T>& b) {
  ProductSum<T> sum;
  for (const auto& c : b.coeffs())
    if (!is_structural_zero(c)) sum.add(1.0, c, c);
  return sum.finish();
}

template <class T>
T norm(const Bivector<T>& b) {
  using std::sqrt;
  return sqrt(norm_squared(b));
}

// Norm of the values, recording nothing.
template <class T>
double value_norm(const Bivector<T>& b) {
  double s = 0.0;
  for (const auto& c : b.coeffs()) s += value_of(c) * value_of(c);
  return std::sqrt(s);
}

// b _| v as the skew-matrix product Bv.
template <class T>
std::vector<T> contract(const Bivector<T>& b, std::span<const T> v) {
  const int n = b.n();
  if (v.size() != static_cast<std::size_t>(n)) throw InvalidArgument("contract: vector length must equal n");
  std::vector<T> out(n, T(0.0));
  ProductSum<T> sum;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const T& bij = i < j ? b(i, j) : b(j, i);
      if (is_structural_zero(bij) || is_structural_zero(v[j])) continue;
      sum.add(i < j ? 1.0 : -1.0, bij, v[j]);
    }
    out[i] = sum.finish();
  }
  return out;
}

template <class T>
std::vector<T> contract(const Bivector<T>& b, const std::vector<T>& v) {
  return contract(b, std::span<const T>(v));
}

// u ^ v with coefficients u_i v_j - u_j v_i.
template <class T>
Bivector<T> wedge(std::span<const T> u, std::span<const T> v, AlgebraDim dim) {
  const int n = dim.n();
  if (u.size() != static_cast<std::size_t>(n) || v.size() != static_cast<std::size_t>(n))
    throw InvalidArgument("wedge: vector length must equal n");
  Bivector<T> b(dim);
  ProductSum<T> sum;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      sum.add(1.0, u[i], v[j]);
      sum.add(-1.0, u[j], v[i]);
      b(i, j) = sum.finish();
    }
  return b;
}

template <class T>
Bivector<T> wedge(const std::vector<T>& u, const std::vector<T>& v, AlgebraDim dim) {
  return wedge(std::span<const T>(u), std::span<const T>(v), dim);
}

// ||b ^ b||. The grade-4 coefficient on {i<j<k<l} is
// 2 (b_ij b_kl - b_ik b_jl + b_il b_jk).
inline double simplicity_residual(const Bivector<double>& b) {
  const int n = b.n();
  double sq = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k)
        for (int l = k + 1; l < n; ++l) {
          const double c = 2.0 * (b(i, j) * b(k, l) - b(i, k) * b(j, l) + b(i, l) * b(j, k));
          sq += c * c;
        }
  return std::sqrt(sq);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double vector_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

template <class T>
std::vector<T> normalized(std::vector<T> v) {
  using std::sqrt;
  ProductSum<T> sum;
  for (const auto& x : v) sum.add(1.0, x, x);
  const T inv = T(1.0) / sqrt(sum.finish());
  for (auto& x : v) x = x * inv;
  return v;
}

inline Bivector<double> values(const Bivector<Var>& b) {
  Bivector<double> out(b.dim());
  for (std::size_t k = 0; k < b.size(); ++k) out[k] = b[k].value();
  return out;
}

inline Bivector<Var> constants(const Bivector<double>& b) {
  return Bivector<Var>(b.dim(), std::vector<Var>(b.coeffs().begin(), b.coeffs().end()));
}

// Uniform coefficients in [-scale, scale].
inline Bivector<double> random_bivector(AlgebraDim dim, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Bivector<double> b(dim);
  for (auto& c : b.coeffs()) c = dist(rng);
  return b;
}

inline VectorR random_unit_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  VectorR v(n);
  double len = 0.0;
  while (len < 1e-8) {
    for (auto& x : v) x = dist(rng);
    len = vector_norm(v);
  }
  for (auto& x : v) x /= len;
  return v;
}

// u ^ v for a random pair scaled to the requested norm.
inline Bivector<double> random_simple_bivector(AlgebraDim dim, std::mt19937_64& rng, double magnitude) {
  const auto u = random_unit_vector(dim.n(), rng);
  const auto v = random_unit_vector(dim.n(), rng);
  auto b = wedge(u, v, dim);
  const double len = norm(b);
  if (len > 0.0) b *= magnitude / len;
  return b;
}

}  // namespace rotorlin

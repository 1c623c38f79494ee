#pragma once

// Dense Cl(n,0) multivectors over a blade bitmask basis.
//
// Bit i of a blade mask marks generator e_{i+1}; blades are stored in
// ascending order of their generators, coefficients are indexed by mask.
// Every product is a bilinear sweep over blade pairs whose sign is the parity
// of the transpositions needed to sort the concatenated generators, with
// e_i^2 = +1.

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rotorlin/autodiff.hpp"
#include "rotorlin/errors.hpp"

namespace rotorlin {

using BladeMask = std::uint32_t;

class AlgebraDim {
 public:
  static constexpr int kMaxGenerators = 16;

  explicit AlgebraDim(int n) : n_(n) {
    if (n < 1 || n > kMaxGenerators)
      throw InvalidArgument("AlgebraDim: n must be in [1, 16], got " + std::to_string(n));
  }

  int n() const { return n_; }
  std::size_t blade_count() const { return std::size_t{1} << n_; }
  std::size_t bivector_count() const { return static_cast<std::size_t>(n_) * (n_ - 1) / 2; }

  friend bool operator==(AlgebraDim a, AlgebraDim b) { return a.n_ == b.n_; }

 private:
  int n_;
};

inline int grade_of(BladeMask m) { return std::popcount(m); }

// Sign of e_a e_b: each generator j of b passes every generator of a above j.
constexpr int reorder_sign(BladeMask a, BladeMask b) {
  int swaps = 0;
  for (BladeMask bits = b; bits != 0; bits &= bits - 1) {
    const int j = std::countr_zero(bits);
    swaps += std::popcount(a & ~((BladeMask{2} << j) - 1));
  }
  return (swaps & 1) ? -1 : 1;
}

// (-1)^{k(k-1)/2}
constexpr int reversion_sign(BladeMask m) {
  const int k = std::popcount(m);
  return ((k * (k - 1) / 2) & 1) ? -1 : 1;
}

// Precomputed blade-product signs, shared read-only per dimension. Dimensions
// above kTabulatedMax fall back to computing the sign on the fly; the table
// would need 4^n bytes.
class CayleyTable {
 public:
  static constexpr int kTabulatedMax = 10;

  static const CayleyTable& get(AlgebraDim dim) {
    static std::array<std::once_flag, AlgebraDim::kMaxGenerators + 1> flags;
    static std::array<std::unique_ptr<CayleyTable>, AlgebraDim::kMaxGenerators + 1> tables;
    const int n = dim.n();
    std::call_once(flags[n], [&] { tables[n].reset(new CayleyTable(n)); });
    return *tables[n];
  }

  int sign(BladeMask a, BladeMask b) const {
    if (signs_.empty()) return reorder_sign(a, b);
    return signs_[(static_cast<std::size_t>(a) << n_) | b];
  }

 private:
  explicit CayleyTable(int n) : n_(n) {
    if (n > kTabulatedMax) return;
    const std::size_t size = std::size_t{1} << n;
    signs_.resize(size * size);
    for (BladeMask a = 0; a < size; ++a)
      for (BladeMask b = 0; b < size; ++b) signs_[(static_cast<std::size_t>(a) << n) | b] =
          static_cast<std::int8_t>(reorder_sign(a, b));
  }

  int n_;
  std::vector<std::int8_t> signs_;
};

template <class T = double>
class Multivector {
 public:
  using value_type = T;

  explicit Multivector(AlgebraDim dim) : dim_(dim), coeffs_(dim.blade_count(), T(0.0)) {}

  Multivector(AlgebraDim dim, std::vector<T> coeffs) : dim_(dim), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != dim.blade_count())
      throw InvalidArgument("Multivector: expected " + std::to_string(dim.blade_count()) + " coefficients, got " +
                            std::to_string(coeffs_.size()));
  }

  static Multivector scalar(AlgebraDim dim, T value) {
    Multivector m(dim);
    m.coeffs_[0] = value;
    return m;
  }

  static Multivector blade(AlgebraDim dim, BladeMask mask, T value = T(1.0)) {
    if (mask >= dim.blade_count()) throw InvalidArgument("Multivector::blade: mask out of range");
    Multivector m(dim);
    m.coeffs_[mask] = value;
    return m;
  }

  // Grade-1 embedding of an n-component vector.
  static Multivector vector(AlgebraDim dim, std::span<const T> components) {
    if (components.size() != static_cast<std::size_t>(dim.n()))
      throw InvalidArgument("Multivector::vector: expected n components");
    Multivector m(dim);
    for (int i = 0; i < dim.n(); ++i) m.coeffs_[BladeMask{1} << i] = components[i];
    return m;
  }

  AlgebraDim dim() const { return dim_; }
  std::size_t size() const { return coeffs_.size(); }

  T& operator[](BladeMask mask) { return coeffs_[mask]; }
  const T& operator[](BladeMask mask) const { return coeffs_[mask]; }

  std::span<T> coeffs() { return coeffs_; }
  std::span<const T> coeffs() const { return coeffs_; }

  const T& scalar_part() const { return coeffs_[0]; }

  Multivector& operator+=(const Multivector& o) {
    check_same(o);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] = coeffs_[i] + o.coeffs_[i];
    return *this;
  }
  Multivector& operator-=(const Multivector& o) {
    check_same(o);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] = coeffs_[i] - o.coeffs_[i];
    return *this;
  }
  Multivector& operator*=(const T& s) {
    for (auto& c : coeffs_) c = c * s;
    return *this;
  }

  void check_same(const Multivector& o) const {
    if (!(dim_ == o.dim_))
      throw InvalidArgument("multivector dimension mismatch: Cl(" + std::to_string(dim_.n()) + ") vs Cl(" +
                            std::to_string(o.dim_.n()) + ")");
  }

 private:
  AlgebraDim dim_;
  std::vector<T> coeffs_;
};

template <class T>
Multivector<T> operator+(Multivector<T> a, const Multivector<T>& b) {
  return a += b;
}
template <class T>
Multivector<T> operator-(Multivector<T> a, const Multivector<T>& b) {
  return a -= b;
}
template <class T>
Multivector<T> operator-(Multivector<T> a) {
  for (auto& c : a.coeffs()) c = -c;
  return a;
}
template <class T>
Multivector<T> operator*(Multivector<T> a, const T& s) {
  return a *= s;
}
template <class T>
Multivector<T> operator*(const T& s, Multivector<T> a) {
  return a *= s;
}
inline Multivector<Var> operator*(Multivector<Var> a, double s) { return a *= Var(s); }
inline Multivector<Var> operator*(double s, Multivector<Var> a) { return a *= Var(s); }

namespace detail {

// Shared sweep for the blade-pair products; Keep(a_mask, b_mask) selects the
// contributing pairs.
template <class T, class Keep>
Multivector<T> blade_product(const Multivector<T>& a, const Multivector<T>& b, Keep keep) {
  a.check_same(b);
  const auto& table = CayleyTable::get(a.dim());
  const auto size = static_cast<BladeMask>(a.size());
  Multivector<T> out(a.dim());
  if constexpr (!is_tracked_v<T>) {
    auto acc = out.coeffs();
    for (BladeMask i = 0; i < size; ++i) {
      const double ai = a[i];
      if (ai == 0.0) continue;
      for (BladeMask j = 0; j < size; ++j) {
        const double bj = b[j];
        if (bj == 0.0 || !keep(i, j)) continue;
        acc[i ^ j] += table.sign(i, j) * ai * bj;
      }
    }
  } else {
    std::vector<BladeMask> live_a;
    for (BladeMask i = 0; i < size; ++i)
      if (!is_structural_zero(a[i])) live_a.push_back(i);
    ProductSum<T> sum;
    for (BladeMask k = 0; k < size; ++k) {
      for (BladeMask i : live_a) {
        const BladeMask j = i ^ k;
        if (is_structural_zero(b[j]) || !keep(i, j)) continue;
        sum.add(table.sign(i, j), a[i], b[j]);
      }
      out[k] = sum.finish();
    }
  }
  return out;
}

}  // namespace detail

template <class T>
Multivector<T> geometric_product(const Multivector<T>& a, const Multivector<T>& b) {
  return detail::blade_product(a, b, [](BladeMask, BladeMask) { return true; });
}

template <class T>
Multivector<T> operator*(const Multivector<T>& a, const Multivector<T>& b) {
  return geometric_product(a, b);
}

template <class T>
Multivector<T> wedge_product(const Multivector<T>& a, const Multivector<T>& b) {
  return detail::blade_product(a, b, [](BladeMask i, BladeMask j) { return (i & j) == 0; });
}

// Grade-(s - r) part of <a>_s <b>_r summed over s >= r. On a bivector and a
// vector this is the skew-matrix action: (e_i ^ e_j) _| v = v_j e_i - v_i e_j.
template <class T>
Multivector<T> right_contraction(const Multivector<T>& a, const Multivector<T>& b) {
  return detail::blade_product(a, b, [](BladeMask i, BladeMask j) { return (i & j) == j; });
}

// Product whose left operand is restricted to the blades in `support`; with
// support = {1} + grade-2 blades this is the sandwich-side product of a pure
// rotor, which touches only 1 + C(n,2) left coefficients.
template <class T>
Multivector<T> sparse_left_product(std::span<const BladeMask> support, const Multivector<T>& a,
                                   const Multivector<T>& b) {
  a.check_same(b);
  const auto& table = CayleyTable::get(a.dim());
  const auto size = static_cast<BladeMask>(a.size());
  Multivector<T> out(a.dim());
  if constexpr (!is_tracked_v<T>) {
    for (BladeMask i : support) {
      const double ai = a[i];
      if (ai == 0.0) continue;
      for (BladeMask j = 0; j < size; ++j) out[i ^ j] += table.sign(i, j) * ai * b[j];
    }
  } else {
    ProductSum<T> sum;
    for (BladeMask k = 0; k < size; ++k) {
      for (BladeMask i : support) sum.add(table.sign(i, i ^ k), a[i], b[i ^ k]);
      out[k] = sum.finish();
    }
  }
  return out;
}

inline std::vector<BladeMask> pure_rotor_support(AlgebraDim dim) {
  std::vector<BladeMask> support{0};
  for (BladeMask m = 0; m < dim.blade_count(); ++m)
    if (grade_of(m) == 2) support.push_back(m);
  return support;
}

template <class T>
Multivector<T> reversion(Multivector<T> a) {
  for (BladeMask m = 0; m < a.size(); ++m)
    if (reversion_sign(m) < 0) a[m] = -a[m];
  return a;
}

template <class T>
Multivector<T> grade_projection(const Multivector<T>& a, int k) {
  if (k < 0 || k > a.dim().n())
    throw InvalidArgument("grade_projection: grade " + std::to_string(k) + " outside [0, " +
                          std::to_string(a.dim().n()) + "]");
  Multivector<T> out(a.dim());
  for (BladeMask m = 0; m < a.size(); ++m)
    if (grade_of(m) == k) out[m] = a[m];
  return out;
}

template <class T>
T norm_squared(const Multivector<T>& a) {
  ProductSum<T> sum;
  for (const auto& c : a.coeffs())
    if (!is_structural_zero(c)) sum.add(1.0, c, c);
  return sum.finish();
}

template <class T>
T norm(const Multivector<T>& a) {
  using std::sqrt;
  return sqrt(norm_squared(a));
}

// Largest coefficient magnitude of the odd-grade part.
inline double odd_mass(const Multivector<double>& a) {
  double worst = 0.0;
  for (BladeMask m = 0; m < a.size(); ++m)
    if (grade_of(m) % 2 == 1) worst = std::max(worst, std::abs(a[m]));
  return worst;
}

inline Multivector<double> values(const Multivector<Var>& a) {
  Multivector<double> out(a.dim());
  for (BladeMask m = 0; m < a.size(); ++m) out[m] = a[m].value();
  return out;
}

inline Multivector<Var> constants(const Multivector<double>& a) {
  std::vector<Var> c(a.coeffs().begin(), a.coeffs().end());
  return Multivector<Var>(a.dim(), std::move(c));
}

// ---------------------------------------------------------------------------
// Text form: terms sorted by blade mask, e.g. "1.0 + 2.0*e1 - 1.0*e13".
// Generators are 1-based; from n = 10 on the indices of a blade are joined
// with '_' (e1_10), otherwise they are written as consecutive digits.

inline std::string blade_name(BladeMask mask, AlgebraDim dim) {
  if (mask == 0) return "1";
  std::string s = "e";
  bool first = true;
  for (int i = 0; i < dim.n(); ++i) {
    if (!(mask & (BladeMask{1} << i))) continue;
    if (!first && dim.n() >= 10) s += '_';
    s += std::to_string(i + 1);
    first = false;
  }
  return s;
}

namespace detail {

inline std::string format_real(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace detail

inline std::string to_string(const Multivector<double>& a) {
  std::string out;
  for (BladeMask m = 0; m < a.size(); ++m) {
    double c = a[m];
    if (c == 0.0) continue;
    if (out.empty()) {
      if (std::signbit(c)) out += "-";
    } else {
      out += std::signbit(c) ? " - " : " + ";
    }
    c = std::abs(c);
    out += detail::format_real(c);
    if (m != 0) out += "*" + blade_name(m, a.dim());
  }
  return out.empty() ? "0.0" : out;
}

inline Multivector<double> parse_multivector(std::string_view text, AlgebraDim dim) {
  Multivector<double> out(dim);
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  };
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError("multivector text: " + why + " at offset " + std::to_string(pos));
  };
  auto parse_blade = [&]() -> BladeMask {
    if (pos >= text.size() || text[pos] != 'e') throw fail("expected blade");
    ++pos;
    std::vector<int> indices;
    if (dim.n() >= 10) {
      while (true) {
        std::size_t start = pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        if (start == pos) throw fail("expected generator index");
        indices.push_back(std::stoi(std::string(text.substr(start, pos - start))));
        if (pos < text.size() && text[pos] == '_') {
          ++pos;
          continue;
        }
        break;
      }
    } else {
      while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) indices.push_back(text[pos++] - '0');
      if (indices.empty()) throw fail("expected generator index");
    }
    BladeMask mask = 0;
    int last = 0;
    for (int idx : indices) {
      if (idx < 1 || idx > dim.n()) throw fail("generator e" + std::to_string(idx) + " outside the algebra");
      if (idx <= last) throw fail("blade generators must be strictly ascending");
      mask |= BladeMask{1} << (idx - 1);
      last = idx;
    }
    return mask;
  };

  skip_ws();
  bool first = true;
  while (pos < text.size()) {
    double sign = 1.0;
    if (text[pos] == '+' || text[pos] == '-') {
      sign = text[pos] == '-' ? -1.0 : 1.0;
      ++pos;
      skip_ws();
    } else if (!first) {
      throw fail("expected '+' or '-'");
    }
    if (pos >= text.size()) throw fail("dangling sign");
    if (text[pos] == 'e') {
      out[parse_blade()] += sign;
    } else {
      double value = 0.0;
      auto res = std::from_chars(text.data() + pos, text.data() + text.size(), value);
      if (res.ec != std::errc()) throw fail("expected number");
      pos = static_cast<std::size_t>(res.ptr - text.data());
      skip_ws();
      BladeMask mask = 0;
      if (pos < text.size() && text[pos] == '*') {
        ++pos;
        skip_ws();
        mask = parse_blade();
      }
      out[mask] += sign * value;
    }
    first = false;
    skip_ws();
  }
  return out;
}

}  // namespace rotorlin

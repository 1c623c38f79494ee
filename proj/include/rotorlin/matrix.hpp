#pragma once

// Dense matrices and the matrix-side view of rotor actions: exp(2B),
// compound matrices, graded block assembly and the change-of-basis check.
//
// Graded basis order: blades grouped by grade, lexicographic index subsets
// within a grade, e.g. n = 3: 1, e1, e2, e3, e12, e13, e23, e123. Compound
// matrices use the same subset order, which is what makes the entrywise
// comparison between N_r and the stacked compounds meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rotorlin/rotor.hpp"

namespace rotorlin {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw InvalidArgument("DenseMatrix: data length does not match shape");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  DenseMatrix& operator*=(double s) {
    for (auto& x : data_) x *= s;
    return *this;
  }
  DenseMatrix& operator+=(const DenseMatrix& o) {
    same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseMatrix& operator-=(const DenseMatrix& o) {
    same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }

  void same_shape(const DenseMatrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw InvalidArgument("DenseMatrix: shape mismatch");
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
inline DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
inline DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }
inline DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

inline DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("DenseMatrix: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline std::vector<double> operator*(const DenseMatrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw InvalidArgument("DenseMatrix: vector length mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

inline double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  a.same_shape(b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline std::size_t count_nonzero(const DenseMatrix& a, double threshold = 1e-12) {
  return static_cast<std::size_t>(
      std::count_if(a.data().begin(), a.data().end(), [&](double x) { return std::abs(x) > threshold; }));
}

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

inline DenseMatrix skew_from_bivector(const Bivector<double>& b) {
  const int n = b.n();
  DenseMatrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      m(i, j) = b(i, j);
      m(j, i) = -b(i, j);
    }
  return m;
}

// Reads the strict upper triangle.
inline Bivector<double> bivector_from_skew(const DenseMatrix& m) {
  if (!m.square()) throw InvalidArgument("bivector_from_skew: matrix is not square");
  Bivector<double> b(AlgebraDim(static_cast<int>(m.rows())));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.rows(); ++j) b(static_cast<int>(i), static_cast<int>(j)) = m(i, j);
  return b;
}

// Scaling and squaring: halve until the max row sum is <= 0.5, 18-term
// Taylor core, then square back.
inline DenseMatrix matrix_exponential(const DenseMatrix& a) {
  if (!a.square()) throw InvalidArgument("matrix_exponential: matrix is not square");
  const std::size_t n = a.rows();
  double row_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::abs(a(i, j));
    row_norm = std::max(row_norm, s);
  }
  if (!std::isfinite(row_norm)) throw NumericError("matrix_exponential: non-finite input");
  int squarings = 0;
  double scale = 1.0;
  while (row_norm * scale > 0.5) {
    scale *= 0.5;
    ++squarings;
  }
  const DenseMatrix x = a * scale;
  DenseMatrix sum = DenseMatrix::identity(n);
  DenseMatrix term = sum;
  for (int i = 1; i <= 18; ++i) {
    term = term * x;
    term *= 1.0 / i;
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

// LU with partial pivoting.
inline double determinant(DenseMatrix a) {
  if (!a.square()) throw InvalidArgument("determinant: matrix is not square");
  const std::size_t n = a.rows();
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    if (a(p, c) == 0.0) return 0.0;
    if (p != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(p, j), a(c, j));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      if (f == 0.0) continue;
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
    }
  }
  return det;
}

// k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<int>> lex_subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

// Blade masks in graded order.
inline std::vector<BladeMask> graded_order(AlgebraDim dim) {
  std::vector<BladeMask> order;
  for (int k = 0; k <= dim.n(); ++k)
    for (const auto& s : lex_subsets(dim.n(), k)) {
      BladeMask m = 0;
      for (int i : s) m |= BladeMask{1} << i;
      order.push_back(m);
    }
  return order;
}

inline DenseMatrix compound_matrix(const DenseMatrix& r, int k) {
  if (!r.square()) throw InvalidArgument("compound_matrix: matrix is not square");
  const int n = static_cast<int>(r.rows());
  if (k < 0 || k > n) throw InvalidArgument("compound_matrix: grade " + std::to_string(k) + " outside [0, " +
                                            std::to_string(n) + "]");
  const auto subsets = lex_subsets(n, k);
  DenseMatrix c(subsets.size(), subsets.size());
  DenseMatrix minor(k, k);
  for (std::size_t p = 0; p < subsets.size(); ++p)
    for (std::size_t q = 0; q < subsets.size(); ++q) {
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) minor(i, j) = r(subsets[p][i], subsets[q][j]);
      c(p, q) = k == 0 ? 1.0 : determinant(minor);
    }
  return c;
}

struct GradedBlockMatrix {
  AlgebraDim dim;
  std::vector<DenseMatrix> blocks;
};

inline DenseMatrix assemble_graded(const GradedBlockMatrix& g) {
  const int n = g.dim.n();
  if (g.blocks.size() != static_cast<std::size_t>(n + 1))
    throw InvalidArgument("assemble_graded: expected " + std::to_string(n + 1) + " blocks, got " +
                          std::to_string(g.blocks.size()));
  DenseMatrix out(g.dim.blade_count(), g.dim.blade_count());
  std::size_t offset = 0;
  for (int k = 0; k <= n; ++k) {
    const auto& blk = g.blocks[k];
    const auto size = binomial(n, k);
    if (blk.rows() != size || blk.cols() != size)
      throw InvalidArgument("assemble_graded: block " + std::to_string(k) + " must be " + std::to_string(size) + "x" +
                            std::to_string(size));
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) out(offset + i, offset + j) = blk(i, j);
    offset += size;
  }
  return out;
}

// Diagonal block k of a graded-order matrix.
inline DenseMatrix graded_block(const DenseMatrix& m, AlgebraDim dim, int k) {
  std::size_t offset = 0;
  for (int g = 0; g < k; ++g) offset += binomial(dim.n(), g);
  const auto size = binomial(dim.n(), k);
  DenseMatrix blk(size, size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) blk(i, j) = m(offset + i, offset + j);
  return blk;
}

// Row J (graded order) holds the coefficients of r e_J r~, so the action is
// on row vectors: coeffs(r x r~) = coeffs(x) * N_r.
inline DenseMatrix change_of_basis_matrix(const Rotor<double>& r) {
  const auto order = graded_order(r.dim());
  const auto raw = sandwich_matrix(r, r);
  const std::size_t size = order.size();
  DenseMatrix n(size, size);
  for (std::size_t p = 0; p < size; ++p)
    for (std::size_t q = 0; q < size; ++q) n(p, q) = raw[static_cast<std::size_t>(order[p]) * size + order[q]];
  return n;
}

struct RepresentationReport {
  int n = 0;
  double tol = 0.0;
  // max |N_r - M^T|: the row-action form of diag(C_k(exp(2B))).
  double max_diff = 0.0;
  // max |N_r - M| without the transpose, for reference.
  double max_diff_untransposed = 0.0;
  double cross_grade_max = 0.0;
  std::vector<double> block_orthogonality;
  std::vector<double> block_det_residual;
  double det_product_residual = 0.0;
  std::size_t nonzeros = 0;
  std::uint64_t nonzero_budget = 0;
  bool equivalence_ok = false;
  bool orthogonality_ok = false;
  bool determinant_ok = false;
  bool sparsity_ok = false;
  bool passed = false;

  double worst_orthogonality() const {
    return block_orthogonality.empty() ? 0.0 : *std::max_element(block_orthogonality.begin(), block_orthogonality.end());
  }
  double worst_det_residual() const {
    return block_det_residual.empty() ? 0.0 : *std::max_element(block_det_residual.begin(), block_det_residual.end());
  }
  std::string failed_properties() const {
    std::string s;
    auto add = [&](bool ok, const char* name) {
      if (ok) return;
      if (!s.empty()) s += ",";
      s += name;
    };
    add(equivalence_ok, "equivalence");
    add(orthogonality_ok, "orthogonality");
    add(determinant_ok, "determinant");
    add(sparsity_ok, "sparsity");
    return s;
  }
};

inline RepresentationReport verify_representation(const Bivector<double>& b, double tol,
                                                  const PowerIterConfig& cfg = {}) {
  const AlgebraDim dim = b.dim();
  const int n = dim.n();
  RepresentationReport rep;
  rep.n = n;
  rep.tol = tol;

  const auto r = rotor_from_bivector(b, cfg);
  const DenseMatrix nr = change_of_basis_matrix(r);
  const DenseMatrix rot = matrix_exponential(skew_from_bivector(b) * 2.0);
  GradedBlockMatrix g{dim, {}};
  for (int k = 0; k <= n; ++k) g.blocks.push_back(compound_matrix(rot, k));
  const DenseMatrix m = assemble_graded(g);

  rep.max_diff = max_abs_diff(nr, m.transpose());
  rep.max_diff_untransposed = max_abs_diff(nr, m);

  // Entries of N_r outside the diagonal grade blocks.
  std::vector<int> grade_of_row;
  for (BladeMask mask : graded_order(dim)) grade_of_row.push_back(grade_of(mask));
  for (std::size_t i = 0; i < nr.rows(); ++i)
    for (std::size_t j = 0; j < nr.cols(); ++j)
      if (grade_of_row[i] != grade_of_row[j]) rep.cross_grade_max = std::max(rep.cross_grade_max, std::abs(nr(i, j)));

  double det_product = 1.0;
  for (int k = 0; k <= n; ++k) {
    const DenseMatrix& mk = g.blocks[k];
    const DenseMatrix gram = mk.transpose() * mk;
    rep.block_orthogonality.push_back(max_abs_diff(gram, DenseMatrix::identity(mk.rows())));
    const double det = determinant(mk);
    rep.block_det_residual.push_back(std::abs(det - 1.0));
    det_product *= det;
  }
  rep.det_product_residual = std::abs(det_product - 1.0);
  rep.nonzeros = count_nonzero(m);
  rep.nonzero_budget = binomial(2 * n, n);

  rep.equivalence_ok = rep.max_diff <= tol && rep.cross_grade_max <= tol;
  rep.orthogonality_ok = rep.worst_orthogonality() <= tol;
  rep.determinant_ok = rep.worst_det_residual() <= tol && rep.det_product_residual <= tol;
  rep.sparsity_ok = rep.nonzeros <= rep.nonzero_budget;
  rep.passed = rep.equivalence_ok && rep.orthogonality_ok && rep.determinant_ok && rep.sparsity_ok;
  return rep;
}

inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6e", x);
  return buf;
}

inline std::string to_text(const RepresentationReport& rep) {
  std::ostringstream os;
  os << "# action: row vectors, coeffs(r x r~) = coeffs(x) * N_r\n"
     << "# basis: grade-major, lexicographic subsets within each grade\n"
     << "# M = diag(C_k(exp(2B))) acts on column vectors; N_r is compared with M^T\n";
  os << "n: " << rep.n << "\n";
  os << "tol: " << format_real(rep.tol) << "\n";
  os << "max_abs_diff: " << format_real(rep.max_diff) << "\n";
  os << "max_abs_diff_untransposed: " << format_real(rep.max_diff_untransposed) << "\n";
  os << "cross_grade_max: " << format_real(rep.cross_grade_max) << "\n";
  for (std::size_t k = 0; k < rep.block_orthogonality.size(); ++k)
    os << "block_" << k << "_orthogonality: " << format_real(rep.block_orthogonality[k]) << "\n";
  for (std::size_t k = 0; k < rep.block_det_residual.size(); ++k)
    os << "block_" << k << "_det_residual: " << format_real(rep.block_det_residual[k]) << "\n";
  os << "det_product_residual: " << format_real(rep.det_product_residual) << "\n";
  os << "nonzeros: " << rep.nonzeros << "\n";
  os << "nonzero_budget: " << rep.nonzero_budget << "\n";
  os << "passed: " << (rep.passed ? "true" : "false") << "\n";
  if (!rep.passed) os << "failed: " << rep.failed_properties() << "\n";
  return os.str();
}

}  // namespace rotorlin

#include <gtest/gtest.h>

#include <random>

#include "rotorlin/bivector.hpp"
#include "rotorlin/clifford.hpp"

using namespace rotorlin;

namespace {

using MV = Multivector<double>;

MV blade(int n, BladeMask m, double c = 1.0) { return MV::blade(AlgebraDim(n), m, c); }

MV random_mv(AlgebraDim dim, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  MV m(dim);
  for (auto& c : m.coeffs()) c = d(rng);
  return m;
}

// Product by explicit generator lists: concatenate, bubble sort, cancel pairs.
MV naive_product(const MV& a, const MV& b) {
  const int n = a.dim().n();
  MV out(a.dim());
  for (BladeMask i = 0; i < a.size(); ++i)
    for (BladeMask j = 0; j < b.size(); ++j) {
      if (a[i] == 0.0 || b[j] == 0.0) continue;
      std::vector<int> g;
      for (int k = 0; k < n; ++k)
        if (i >> k & 1) g.push_back(k);
      for (int k = 0; k < n; ++k)
        if (j >> k & 1) g.push_back(k);
      int sign = 1;
      for (std::size_t p = 0; p < g.size(); ++p)
        for (std::size_t q = 0; q + 1 < g.size() - p; ++q)
          if (g[q] > g[q + 1]) {
            std::swap(g[q], g[q + 1]);
            sign = -sign;
          }
      BladeMask m = 0;
      for (int k : g) m ^= BladeMask{1} << k;
      out[m] += sign * a[i] * b[j];
    }
  return out;
}

double max_diff(const MV& a, const MV& b) {
  double m = 0.0;
  for (BladeMask k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST(Algebra, DimensionBounds) {
  EXPECT_EQ(AlgebraDim(5).blade_count(), 32u);
  EXPECT_EQ(AlgebraDim(5).bivector_count(), 10u);
  EXPECT_THROW(AlgebraDim(0), InvalidArgument);
  EXPECT_THROW(AlgebraDim(17), InvalidArgument);
}

TEST(Algebra, GeneratorRules) {
  EXPECT_EQ(max_diff(blade(3, 0b001) * blade(3, 0b001), MV::scalar(AlgebraDim(3), 1.0)), 0.0);
  EXPECT_EQ(max_diff(blade(3, 0b010) * blade(3, 0b001), blade(3, 0b011, -1.0)), 0.0);
  const MV a = MV::scalar(AlgebraDim(2), 1.0) + blade(2, 0b01);
  const MV b = MV::scalar(AlgebraDim(2), 1.0) + blade(2, 0b10);
  MV want(AlgebraDim(2));
  for (BladeMask m = 0; m < 4; ++m) want[m] = 1.0;
  EXPECT_EQ(max_diff(a * b, want), 0.0);
}

TEST(Algebra, ProductMatchesNaiveExpansion) {
  std::mt19937_64 rng(11);
  for (int n = 1; n <= 6; ++n) {
    const AlgebraDim dim(n);
    const MV a = random_mv(dim, rng), b = random_mv(dim, rng);
    EXPECT_LT(max_diff(a * b, naive_product(a, b)), 1e-12) << "n = " << n;
  }
}

TEST(Algebra, ProductIsAssociative) {
  std::mt19937_64 rng(12);
  const AlgebraDim dim(5);
  const MV a = random_mv(dim, rng), b = random_mv(dim, rng), c = random_mv(dim, rng);
  EXPECT_LT(max_diff((a * b) * c, a * (b * c)), 1e-11);
}

TEST(Algebra, LargeDimensionsComputeSignsOnTheFly) {
  const AlgebraDim dim(12);
  const BladeMask a = 0b101100000011, b = 0b010110010001;
  EXPECT_EQ(CayleyTable::get(dim).sign(a, b), reorder_sign(a, b));
  const MV e = MV::blade(dim, a) * MV::blade(dim, b);
  EXPECT_EQ(e[a ^ b], reorder_sign(a, b));
}

TEST(Algebra, Wedge) {
  EXPECT_EQ(norm(wedge_product(blade(3, 0b001), blade(3, 0b001))), 0.0);
  EXPECT_EQ(max_diff(wedge_product(blade(3, 0b001), blade(3, 0b010)), blade(3, 0b011)), 0.0);
  EXPECT_EQ(norm(wedge_product(blade(4, 0b0011), blade(4, 0b0011))), 0.0);
}

TEST(Algebra, RightContraction) {
  const MV e12 = blade(3, 0b011);
  EXPECT_EQ(max_diff(right_contraction(e12, blade(3, 0b010)), blade(3, 0b001)), 0.0);
  EXPECT_EQ(max_diff(right_contraction(e12, blade(3, 0b001)), blade(3, 0b010, -1.0)), 0.0);
  EXPECT_EQ(norm(right_contraction(e12, blade(3, 0b100))), 0.0);
}

TEST(Algebra, ContractionIsSkewAction) {
  std::mt19937_64 rng(13);
  const AlgebraDim dim(6);
  const auto b = random_bivector(dim, rng);
  const auto v = random_unit_vector(6, rng);
  MV vm(dim);
  for (int i = 0; i < 6; ++i) vm[BladeMask{1} << i] = v[i];
  const MV got = right_contraction(to_multivector(b), vm);
  const auto want = contract(b, v);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(got[BladeMask{1} << i], want[i], 1e-14);
  EXPECT_LT(norm(got - grade_projection(got, 1)), 1e-15);
}

TEST(Algebra, Reversion) {
  EXPECT_EQ(max_diff(reversion(blade(3, 0b011)), blade(3, 0b011, -1.0)), 0.0);
  EXPECT_EQ(max_diff(reversion(MV::scalar(AlgebraDim(3), 2.5)), MV::scalar(AlgebraDim(3), 2.5)), 0.0);
  EXPECT_EQ(max_diff(reversion(blade(3, 0b111)), blade(3, 0b111, -1.0)), 0.0);
  std::mt19937_64 rng(14);
  const MV a = random_mv(AlgebraDim(4), rng), b = random_mv(AlgebraDim(4), rng);
  EXPECT_LT(max_diff(reversion(a * b), reversion(b) * reversion(a)), 1e-12);
}

TEST(Algebra, GradeProjection) {
  const MV x = MV::scalar(AlgebraDim(3), 1.0) + blade(3, 0b001) + blade(3, 0b101, -1.0);
  EXPECT_EQ(max_diff(grade_projection(x, 2), blade(3, 0b101, -1.0)), 0.0);
  EXPECT_EQ(norm(grade_projection(blade(3, 0b001), 2)), 0.0);
  std::mt19937_64 rng(15);
  const MV y = random_mv(AlgebraDim(4), rng);
  MV sum(AlgebraDim(4));
  for (int k = 0; k <= 4; ++k) sum += grade_projection(y, k);
  EXPECT_EQ(max_diff(sum, y), 0.0);
  EXPECT_THROW(grade_projection(y, 5), InvalidArgument);
}

TEST(Algebra, Norm) {
  EXPECT_EQ(norm(MV(AlgebraDim(2))), 0.0);
  EXPECT_DOUBLE_EQ(norm(blade(2, 0b11, M_PI / 2)), M_PI / 2);
  EXPECT_DOUBLE_EQ(norm(blade(4, 0b0011, 3.0) + blade(4, 0b1100, 4.0)), 5.0);
}

TEST(Algebra, TextRoundTrip) {
  const AlgebraDim dim(3);
  const MV x = MV::scalar(dim, 1.0) + blade(3, 0b001, 2.0) + blade(3, 0b101, -1.0);
  EXPECT_EQ(to_string(x), "1.0 + 2.0*e1 - 1.0*e13");
  EXPECT_EQ(max_diff(parse_multivector(to_string(x), dim), x), 0.0);
  EXPECT_EQ(to_string(MV(dim)), "0.0");
  std::mt19937_64 rng(16);
  const MV y = random_mv(AlgebraDim(11), rng);
  EXPECT_EQ(max_diff(parse_multivector(to_string(y), AlgebraDim(11)), y), 0.0);
  EXPECT_THROW(parse_multivector("1.0 + 2.0*x1", dim), FormatError);
}

TEST(Bivectors, SimplicityResidual) {
  const AlgebraDim dim(4);
  Bivector<double> b(dim);
  b(0, 1) = 1.0;
  b(0, 2) = 1.0;
  EXPECT_EQ(simplicity_residual(b), 0.0);
  b(0, 2) = 0.0;
  b(2, 3) = 1.0;
  // b ^ b = 2 e1234 for e12 + e34.
  EXPECT_DOUBLE_EQ(simplicity_residual(b), 2.0);
  const MV w = wedge_product(to_multivector(b), to_multivector(b));
  EXPECT_DOUBLE_EQ(norm(w), 2.0);
}

TEST(Autodiff, SquareChain) {
  ad::Tape tape;
  const Var p = tape.variable(3.0);
  const Var loss = p * p;
  EXPECT_DOUBLE_EQ(ad::backward_gradients(tape, loss, std::vector<Var>{p})[0], 6.0);
}

TEST(Autodiff, FanOutAccumulates) {
  ad::Tape tape;
  const Var x = tape.variable(2.0);
  const Var y = x * x + sin(x) * x + exp(x) / x;
  const double want = 2 * 2.0 + std::cos(2.0) * 2.0 + std::sin(2.0) + std::exp(2.0) / 2.0 - std::exp(2.0) / 4.0;
  EXPECT_NEAR(ad::backward_gradients(tape, y, std::vector<Var>{x})[0], want, 1e-12);
}

TEST(Autodiff, ProductSumIgnoresInterleavedNodes) {
  ad::Tape tape;
  const Var a = tape.variable(1.5), b = tape.variable(-2.0);
  ad::ProductSum s;
  s.add(2.0, a, b);
  const Var d = a - 1.0;  // node created while the sum is open
  s.add(1.0, d, d);
  const Var out = s.finish();
  const auto g = ad::backward_gradients(tape, out, std::vector<Var>{a, b});
  EXPECT_DOUBLE_EQ(out.value(), 2.0 * 1.5 * -2.0 + 0.25);
  EXPECT_DOUBLE_EQ(g[0], 2.0 * -2.0 + 2.0 * 0.5);
  EXPECT_DOUBLE_EQ(g[1], 2.0 * 1.5);
}

TEST(Autodiff, MissingParameterIsReported) {
  ad::Tape tape;
  const Var a = tape.variable(1.0), b = tape.variable(2.0);
  const Var out = a * 3.0;
  EXPECT_THROW(ad::backward_gradients(tape, out, std::vector<Var>{a, b}), MissingGradient);
  EXPECT_THROW(ad::backward_gradients(tape, out, std::vector<Var>{a, Var(1.0)}), MissingGradient);
}

TEST(Autodiff, TrackedProductMatchesValues) {
  std::mt19937_64 rng(17);
  const AlgebraDim dim(4);
  const MV a = random_mv(dim, rng), b = random_mv(dim, rng);
  ad::Tape tape;
  Multivector<Var> av(dim), bv(dim);
  for (BladeMask m = 0; m < a.size(); ++m) {
    av[m] = tape.variable(a[m]);
    bv[m] = tape.variable(b[m]);
  }
  EXPECT_LT(max_diff(values(av * bv), a * b), 1e-13);
  // d<ab>_0 / d a_m = sign(m, m) b_m
  const Var s = (av * bv)[0];
  std::vector<Var> params(av.coeffs().begin(), av.coeffs().end());
  const auto g = ad::backward_gradients(tape, s, params);
  for (BladeMask m = 0; m < a.size(); ++m) EXPECT_NEAR(g[m], reorder_sign(m, m) * b[m], 1e-14);
}

#include <gtest/gtest.h>

#include <random>

#include "rotorlin/rotor.hpp"

using namespace rotorlin;

namespace {

using MV = Multivector<double>;

double max_diff(const MV& a, const MV& b) {
  double m = 0.0;
  for (BladeMask k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

Bivector<double> plane(int n, int i, int j, double angle) {
  Bivector<double> b{AlgebraDim(n)};
  b(i, j) = angle;
  return b;
}

MV e(int n, BladeMask m, double c = 1.0) { return MV::blade(AlgebraDim(n), m, c); }

}  // namespace

TEST(ClosedFormExp, KnownValues) {
  EXPECT_EQ(max_diff(clexp_simple(Bivector<double>(AlgebraDim(3))).value(), MV::scalar(AlgebraDim(3), 1.0)), 0.0);
  EXPECT_LT(max_diff(clexp_simple(plane(2, 0, 1, M_PI / 2)).value(), e(2, 0b11)), 1e-15);
  const MV want = MV::scalar(AlgebraDim(2), std::sqrt(3.0) / 2) + e(2, 0b11, 0.5);
  EXPECT_LT(max_diff(clexp_simple(plane(2, 0, 1, M_PI / 6)).value(), want), 1e-15);
}

TEST(ClosedFormExp, MatchesSeriesForRandomSimpleBivectors) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> mag(0.0, M_PI);
  for (int n = 2; n <= 8; ++n)
    for (int t = 0; t < 10; ++t) {
      const auto b = random_simple_bivector(AlgebraDim(n), rng, mag(rng));
      const MV series = exp_series(to_multivector(b));
      EXPECT_LT(norm(clexp_simple(b).value() - series) / norm(series), 1e-12);
    }
}

TEST(ClosedFormExp, RejectsNonSimpleInput) {
  Bivector<double> b(AlgebraDim(4));
  b(0, 1) = 1.0;
  b(2, 3) = 0.5;
  EXPECT_THROW(clexp_simple(b), PreconditionError);
}

TEST(ClosedFormExp, SmallAngleBranchIsDifferentiable) {
  ad::Tape tape;
  Bivector<Var> b(AlgebraDim(3));
  std::vector<Var> params;
  for (std::size_t k = 0; k < b.size(); ++k) {
    b[k] = tape.variable(0.0);
    params.push_back(b[k]);
  }
  const auto r = clexp_simple(b);
  // Loss = <r>_0 + sum of bivector coefficients of r.
  Var loss = r.value()[0];
  for (BladeMask m : {0b011u, 0b101u, 0b110u}) loss = loss + r.value()[m];
  const auto g = ad::backward_gradients(tape, loss, params);
  for (double v : g) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, 1.0, 1e-10);  // d sinc(|b|) b / db at 0 = 1, d cos|b| / db at 0 = 0
  }
}

TEST(Rotors, UnitConditionAndEvenness) {
  MV odd(AlgebraDim(3));
  odd[0b001] = 1.0;
  EXPECT_THROW(Rotor<double>{odd}, PreconditionError);
  MV big = MV::scalar(AlgebraDim(3), 2.0);
  EXPECT_THROW(Rotor<double>{big}, PreconditionError);
}

TEST(Rotors, FromBivectorMatchesSeries) {
  std::mt19937_64 rng(22);
  for (int n : {2, 3, 4, 5, 6, 7}) {
    const auto b = random_bivector(AlgebraDim(n), rng);
    const MV series = exp_series(to_multivector(b));
    EXPECT_LT(norm(rotor_from_bivector(b).value() - series), 1e-10) << "n = " << n;
  }
  Bivector<double> b(AlgebraDim(4));
  b(0, 1) = 0.7;
  b(2, 3) = 0.3;
  const MV prod = clexp_simple(plane(4, 0, 1, 0.7)).value() * clexp_simple(plane(4, 2, 3, 0.3)).value();
  EXPECT_LT(max_diff(rotor_from_bivector(b).value(), prod), 1e-14);
  EXPECT_EQ(max_diff(rotor_from_bivector(Bivector<double>(AlgebraDim(4))).value(), MV::scalar(AlgebraDim(4), 1.0)),
            0.0);
}

TEST(Rotors, SimpleInputReproducesClosedForm) {
  std::mt19937_64 rng(23);
  const auto b = random_simple_bivector(AlgebraDim(6), rng, 1.3);
  EXPECT_LT(max_diff(rotor_from_bivector(b).value(), clexp_simple(b).value()), 1e-13);
}

TEST(Sandwich, KnownActions) {
  const auto r = clexp_simple(plane(3, 0, 1, M_PI / 2));
  EXPECT_LT(max_diff(sandwich(r, e(3, 0b001)), e(3, 0b001, -1.0)), 1e-15);
  const auto one = Rotor<double>(AlgebraDim(3));
  EXPECT_EQ(max_diff(sandwich(one, e(3, 0b101, 2.0)), e(3, 0b101, 2.0)), 0.0);
  for (double theta : {0.1, 0.7, 2.0}) {
    const auto rt = clexp_simple(plane(3, 0, 1, theta));
    const MV want = e(3, 0b001, std::cos(2 * theta)) + e(3, 0b010, -std::sin(2 * theta));
    EXPECT_LT(max_diff(sandwich(rt, e(3, 0b001)), want), 1e-15);
  }
}

TEST(Sandwich, TwoRotorForm) {
  const auto r = clexp_simple(plane(3, 0, 1, M_PI / 2));
  const auto one = Rotor<double>(AlgebraDim(3));
  EXPECT_LT(max_diff(sandwich_two_rotor(r, one, e(3, 0b001)), e(3, 0b010, -1.0)), 1e-15);
  EXPECT_EQ(max_diff(sandwich_two_rotor(one, one, e(3, 0b110)), e(3, 0b110)), 0.0);
  std::mt19937_64 rng(24);
  const auto s = rotor_from_bivector(random_bivector(AlgebraDim(4), rng));
  const MV x = e(4, 0b0110, 0.3) + e(4, 0b0001, -1.2);
  EXPECT_EQ(max_diff(sandwich_two_rotor(s, s, x), sandwich(s, x)), 0.0);
}

TEST(Sandwich, MatrixReproducesProducts) {
  std::mt19937_64 rng(25);
  const AlgebraDim dim(4);
  const auto r = rotor_from_bivector(random_bivector(dim, rng));
  const auto s = rotor_from_bivector(random_bivector(dim, rng));
  const auto n = sandwich_matrix(r, s);
  std::normal_distribution<double> d;
  MV x(dim);
  for (auto& c : x.coeffs()) c = d(rng);
  const MV want = sandwich_two_rotor(r, s, x);
  const std::size_t size = dim.blade_count();
  for (std::size_t i = 0; i < size; ++i) {
    double got = 0.0;
    for (std::size_t j = 0; j < size; ++j) got += x[j] * n[j * size + i];
    EXPECT_NEAR(got, want[i], 1e-13);
  }
}

TEST(Sandwich, PreservesGradeNorms) {
  std::mt19937_64 rng(26);
  const AlgebraDim dim(5);
  const auto r = rotor_from_bivector(random_bivector(dim, rng));
  std::normal_distribution<double> d;
  MV x(dim);
  for (auto& c : x.coeffs()) c = d(rng);
  const MV y = sandwich(r, x);
  for (int k = 0; k <= 5; ++k) EXPECT_NEAR(norm(grade_projection(y, k)), norm(grade_projection(x, k)), 1e-12);
}

#include <cmath>
#include <random>

#include "doctest.h"
#include "reg3bp/interval_linalg.hpp"

using namespace reg3bp::ivl;

namespace {

double ulps_wider(const Interval& x, double lo, double hi) {
  // how many ulps the enclosure exceeds [lo, hi] on both sides combined
  double slack = 0.0;
  double t = lo;
  int n = 0;
  while (t > x.lo() && n < 64) {
    t = rnd::next_down(t);
    ++n;
  }
  slack += n;
  t = hi;
  n = 0;
  while (t < x.hi() && n < 64) {
    t = rnd::next_up(t);
    ++n;
  }
  return slack + n;
}

std::mt19937_64 rng(20240517);

Interval random_interval(double scale = 10.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  double a = d(rng), b = d(rng);
  return Interval::hull(a, b);
}

Interval shrink(const Interval& x) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  double a = d(rng), b = d(rng);
  if (a > b) std::swap(a, b);
  double lo = x.lo() + a * (x.hi() - x.lo());
  double hi = x.lo() + b * (x.hi() - x.lo());
  return Interval::hull(lo, hi);
}

}  // namespace

TEST_CASE("scalar op examples") {
  Interval s = Interval(1, 2) + Interval(3, 4);
  CHECK(s.contains(Interval(4, 6)));
  CHECK(ulps_wider(s, 4.0, 6.0) <= 2);

  Interval p = Interval(-1, 2) * Interval(3, 4);
  CHECK(p.contains(Interval(-4, 8)));
  CHECK(ulps_wider(p, -4.0, 8.0) <= 2);

  CHECK_THROWS_AS(Interval(1, 2) / Interval(-1, 1), DivisionByZeroInterval);
  CHECK_THROWS_AS(sqrt(Interval(-2, -1)), DomainError);

  Interval r = sqrt(Interval(4, 9));
  CHECK(r.contains(Interval(2, 3)));
  CHECK(ulps_wider(r, 2.0, 3.0) <= 2);

  // sqrt clamps a partially negative interval
  CHECK(sqrt(Interval(-1, 4)).lo() == 0.0);

  CHECK(sqr(Interval(-2, 1)) == Interval(0, 4));
  CHECK(pow_i(Interval(-2, 1), 3).contains(Interval(-8, 1)));
  CHECK(pow_i(Interval(2, 2), 0) == Interval(1));
}

TEST_CASE("division is correctly rounded") {
  Interval q = Interval(1) / Interval(3);
  CHECK(q.contains(1.0 / 3.0));
  CHECK(q.diam() > 0.0);
  CHECK(ulps_wider(q, 1.0 / 3.0, 1.0 / 3.0) <= 2);

  Interval t = Interval(1, 2) / Interval(4);  // exact endpoints
  CHECK(t == Interval(0.25, 0.5));
}

TEST_CASE("inclusion monotonicity, 1e4 random cases") {
  int violations = 0;
  for (int it = 0; it < 10000; ++it) {
    Interval X = random_interval(), Y = random_interval();
    Interval Xs = shrink(X), Ys = shrink(Y);
    auto check = [&](const Interval& big, const Interval& small) {
      if (!big.contains(small)) ++violations;
    };
    check(X + Y, Xs + Ys);
    check(X - Y, Xs - Ys);
    check(X * Y, Xs * Ys);
    if (!Y.contains_zero() && !Ys.contains_zero()) check(X / Y, Xs / Ys);
    check(sqr(X), sqr(Xs));
    if (X.hi() >= 0 && Xs.hi() >= 0) check(sqrt(X), sqrt(Xs));
  }
  CHECK(violations == 0);
}

TEST_CASE("point consistency with round-to-nearest results") {
  std::uniform_real_distribution<double> d(-100.0, 100.0);
  for (int it = 0; it < 10000; ++it) {
    double a = d(rng), b = d(rng);
    CHECK((Interval(a) + Interval(b)).contains(a + b));
    CHECK((Interval(a) - Interval(b)).contains(a - b));
    CHECK((Interval(a) * Interval(b)).contains(a * b));
    if (b != 0.0) CHECK((Interval(a) / Interval(b)).contains(a / b));
    CHECK(sqrt(Interval(std::fabs(a))).contains(std::sqrt(std::fabs(a))));
  }
}

TEST_CASE("interval linear solve: degenerate and identity cases") {
  IntervalMatrix A(1, 1);
  A(0, 0) = Interval(2, 2);
  IntervalVector b(1);
  b[0] = Interval(4, 4);
  IntervalVector x = linear_solve_enclosure(A, b);
  CHECK(x[0].contains(2.0));
  CHECK(x[0].diam() < 1e-14);

  IntervalMatrix I2 = IntervalMatrix::identity(2);
  IntervalVector c(2);
  c[0] = Interval(1);
  c[1] = Interval(2);
  IntervalVector y = linear_solve_enclosure(I2, c);
  CHECK(y[0].contains(1.0));
  CHECK(y[1].contains(2.0));
  CHECK(y.max_diam() < 1e-14);
}

TEST_CASE("interval linear solve vs corner enumeration") {
  // A = diag([1.9, 2.1]) as intervals, b = (1,1); every corner matrix is
  // diagonal, so the component-wise solution set is exactly [1/2.1, 1/1.9]
  IntervalMatrix A(2, 2);
  A(0, 0) = Interval(1.9, 2.1);
  A(1, 1) = Interval(1.9, 2.1);
  A(0, 1) = Interval(0.0);
  A(1, 0) = Interval(0.0);
  IntervalVector b(2);
  b[0] = Interval(1);
  b[1] = Interval(1);
  IntervalVector x = linear_solve_enclosure(A, b);

  double lo = 1.0 / 2.1, hi = 1.0 / 1.9;  // brute-force over corner matrices
  for (double d0 : {1.9, 2.1})
    for (double d1 : {1.9, 2.1}) {
      CHECK(x[0].contains(1.0 / d0));
      CHECK(x[1].contains(1.0 / d1));
    }
  CHECK(x[0].contains(Interval(rnd::next_up(lo), rnd::next_down(hi))));
  CHECK(x[0].diam() < 3.0 * (hi - lo));  // sane overestimation
}

TEST_CASE("linear solve contains the floating-point solution, 1000 systems") {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  int bad = 0;
  for (int it = 0; it < 1000; ++it) {
    const int n = 3;
    double M[3][3], rhs[3];
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) M[i][j] = d(rng);
      M[i][i] += 4.0;  // well conditioned
      rhs[i] = d(rng);
    }
    // plain double Gaussian elimination
    double a[3][4];
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a[i][j] = M[i][j];
      a[i][3] = rhs[i];
    }
    for (int c = 0; c < n; ++c) {
      for (int r = c + 1; r < n; ++r) {
        double f = a[r][c] / a[c][c];
        for (int j = c; j <= n; ++j) a[r][j] -= f * a[c][j];
      }
    }
    double sol[3];
    for (int r = n - 1; r >= 0; --r) {
      double s = a[r][3];
      for (int j = r + 1; j < n; ++j) s -= a[r][j] * sol[j];
      sol[r] = s / a[r][r];
    }

    IntervalMatrix A(n, n);
    IntervalVector b(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) A(i, j) = Interval(M[i][j]);
      b[i] = Interval(rhs[i]);
    }
    IntervalVector x = linear_solve_enclosure(A, b);
    for (int i = 0; i < n; ++i)
      if (!inflate(x[i], 1e-12).contains(sol[i])) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("verified inverse flags singular enclosures") {
  IntervalMatrix A(2, 2);
  A(0, 0) = Interval(1);
  A(0, 1) = Interval(1);
  A(1, 0) = Interval(1);
  A(1, 1) = Interval(1);
  CHECK_THROWS_AS(verified_inverse(A), SingularEnclosure);

  IntervalMatrix B(2, 2);  // entries wide enough to contain singular members
  B(0, 0) = Interval(0.0, 2.0);
  B(0, 1) = Interval(0.9, 1.1);
  B(1, 0) = Interval(0.9, 1.1);
  B(1, 1) = Interval(0.0, 2.0);
  CHECK_THROWS_AS(verified_inverse(B), SingularEnclosure);
}

#include <cmath>
#include <random>

#include "doctest.h"
#include "reg3bp/newton.hpp"

using namespace reg3bp;
using namespace reg3bp::rootfind;
using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;

namespace {

IntervalVector vec1(const Interval& x) {
  IntervalVector v(1);
  v[0] = x;
  return v;
}
IntervalMatrix mat1(const Interval& x) {
  IntervalMatrix m(1, 1);
  m(0, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("x^2 - 2 on [1,2]") {
  auto F = [](const IntervalVector& x) { return vec1(ivl::sqr(x[0]) - 2.0); };
  auto DF = [](const IntervalVector& X) { return mat1(2.0 * X[0]); };
  auto out = interval_newton(F, DF, vec1(Interval(1.5)), vec1(Interval(1, 2)));
  REQUIRE(out.verified());
  // hand computation: 1.5 - 0.25/[2,4] = [1.375, 1.4375]
  CHECK(Interval(1.375, 1.4375).contains(out.enclosure[0]));
  CHECK(out.enclosure[0].contains(std::sqrt(2.0)));
}

TEST_CASE("linear exact: F(x) = x on [-1,1]") {
  auto F = [](const IntervalVector& x) { return x; };
  auto DF = [](const IntervalVector&) { return mat1(Interval(1.0)); };
  auto out = interval_newton(F, DF, vec1(Interval(0.0)), vec1(Interval(-1, 1)));
  REQUIRE(out.verified());
  CHECK(out.enclosure[0] == Interval(0.0));
}

TEST_CASE("x^2 - 2 on [5,6] proves emptiness") {
  auto F = [](const IntervalVector& x) { return vec1(ivl::sqr(x[0]) - 2.0); };
  auto DF = [](const IntervalVector& X) { return mat1(2.0 * X[0]); };
  auto out = interval_newton(F, DF, vec1(Interval(5.5)), vec1(Interval(5, 6)));
  CHECK(out.status == NewtonStatus::proved_empty);
}

TEST_CASE("boundary contact is not verified") {
  // N(x,X) = X exactly for a linear map with the zero at the boundary
  auto F = [](const IntervalVector& x) { return vec1(x[0] - 1.0); };
  auto DF = [](const IntervalVector&) { return mat1(Interval(1.0)); };
  auto out = interval_newton(F, DF, vec1(Interval(0.0)), vec1(Interval(-1, 1)));
  CHECK(out.status == NewtonStatus::no_conclusion);
}

TEST_CASE("parametrized: x - lambda") {
  auto F = [](const IntervalVector& I, const IntervalVector& x) {
    return vec1(x[0] - I[0]);
  };
  auto DF = [](const IntervalVector&, const IntervalVector&) { return mat1(Interval(1.0)); };
  auto out = interval_newton_parametrized(F, DF, vec1(Interval(1.0)), vec1(Interval(0.9, 1.1)),
                                          vec1(Interval(0, 2)));
  REQUIRE(out.verified());
  CHECK(out.enclosure[0].contains(Interval(0.9, 1.1)));
}

TEST_CASE("parametrized: x^2 - lambda, lambda in [3.9,4.1]") {
  auto F = [](const IntervalVector& I, const IntervalVector& x) {
    return vec1(ivl::sqr(x[0]) - I[0]);
  };
  auto DF = [](const IntervalVector&, const IntervalVector& X) { return mat1(2.0 * X[0]); };
  auto out = interval_newton_parametrized(F, DF, vec1(Interval(2.0)), vec1(Interval(3.9, 4.1)),
                                          vec1(Interval(1.8, 2.2)));
  REQUIRE(out.verified());
  CHECK(out.enclosure[0].contains(std::sqrt(3.9)));
  CHECK(out.enclosure[0].contains(std::sqrt(4.1)));
}

TEST_CASE("no real zero: x^2 + 1") {
  auto F = [](const IntervalVector& x) { return vec1(ivl::sqr(x[0]) + 1.0); };
  auto DF = [](const IntervalVector& X) { return mat1(2.0 * X[0]); };
  auto out = interval_newton(F, DF, vec1(Interval(0.1)), vec1(Interval(-1, 1)));
  CHECK(out.status != NewtonStatus::verified);
}

TEST_CASE("soundness on random cubics; shrink-and-repeat") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  int checked = 0;
  for (int it = 0; it < 100; ++it) {
    double r = d(rng), p = d(rng), q = d(rng);
    // f(x) = (x - r)(x^2 + p x + (q^2 + 1)); single real root at r
    auto poly = [&](const Interval& x) {
      return (x - r) * (ivl::sqr(x) + p * x + (q * q + 1.0));
    };
    auto dpoly = [&](const Interval& x) {
      return (ivl::sqr(x) + p * x + (q * q + 1.0)) + (x - r) * (2.0 * x + p);
    };
    auto F = [&](const IntervalVector& x) { return vec1(poly(x[0])); };
    auto DF = [&](const IntervalVector& X) { return mat1(dpoly(X[0])); };
    Interval X0(r - 0.05, r + 0.05);
    auto out = interval_newton(F, DF, vec1(Interval(X0.mid())), vec1(X0));
    if (!out.verified()) continue;
    ++checked;

    // double-precision Newton from the enclosure midpoint converges inside it
    double x = out.enclosure[0].mid();
    for (int k = 0; k < 50; ++k) {
      double fx = (x - r) * (x * x + p * x + (q * q + 1.0));
      double dfx = (x * x + p * x + (q * q + 1.0)) + (x - r) * (2.0 * x + p);
      x -= fx / dfx;
    }
    CHECK(ivl::inflate(out.enclosure[0], 1e-14).contains(x));

    // re-running on the verified enclosure verifies again, no wider
    auto again = interval_newton(F, DF, vec1(Interval(out.enclosure[0].mid())),
                                 vec1(ivl::inflate(out.enclosure[0], 1e-13)));
    REQUIRE(again.verified());
    CHECK(again.enclosure[0].diam() <= ivl::inflate(out.enclosure[0], 1e-13).diam());
  }
  CHECK(checked > 50);
}

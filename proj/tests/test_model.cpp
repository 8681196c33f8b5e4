#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "reg3bp/model.hpp"

using namespace reg3bp;
using ivl::Interval;
using ivl::IntervalVector;
using model::MassParams;

namespace {

std::mt19937_64 rng(424242);
double rnd_in(double a, double b) {
  std::uniform_real_distribution<double> d(a, b);
  return d(rng);
}

IntervalVector ivec(std::array<double, 4> q) {
  IntervalVector v(4);
  for (int i = 0; i < 4; ++i) v[i] = Interval(q[i]);
  return v;
}

}  // namespace

TEST_CASE("tape evaluation modes agree") {
  ad::Builder b;
  ad::Var x = b.input(), y = b.input();
  b.output(ad::sqr(x) + y);
  b.output(ad::sqrt(x) * y - 3.0);
  ad::Tape t = b.take();

  ad::Evaluator<double> ev(t);
  std::array<double, 2> in{2.0, 5.0}, out{};
  ev.eval(in, out);
  CHECK(out[0] == doctest::Approx(9.0));
  CHECK(out[1] == doctest::Approx(std::sqrt(2.0) * 5.0 - 3.0));

  std::array<double, 2> val{};
  std::array<double, 4> jac{};
  ev.eval_jac(in, val, jac);
  CHECK(jac[0] == doctest::Approx(4.0));                          // d(x^2+y)/dx
  CHECK(jac[1] == doctest::Approx(1.0));                          // d(x^2+y)/dy
  CHECK(jac[2] == doctest::Approx(5.0 / (2 * std::sqrt(2.0))));   // d(sqrt x * y)/dx
  CHECK(jac[3] == doctest::Approx(std::sqrt(2.0)));               // d(.)/dy

  ad::Evaluator<Interval> evi(t);
  std::array<Interval, 2> ini{Interval(2.0), Interval(5.0)}, outi{};
  evi.eval(ini, outi);
  CHECK(outi[0].contains(9.0));
  CHECK(outi[1].contains(std::sqrt(2.0) * 5.0 - 3.0));
}

TEST_CASE("Taylor recurrence on the harmonic oscillator") {
  ad::Builder b;
  ad::Var x = b.input(), y = b.input();
  b.output(y);
  b.output(-x);
  ad::Tape t = b.take();

  ad::TaylorEngine<Interval> eng(t, 12, true);
  std::array<Interval, 2> x0{Interval(1.0), Interval(0.0)};
  eng.run(x0, 10);
  // x(t) = cos t: coefficients 1, 0, -1/2, 0, 1/24, ...
  CHECK(eng.state(0, 0).contains(1.0));
  CHECK(eng.state(0, 1).contains(0.0));
  CHECK(eng.state(0, 2).contains(-0.5));
  CHECK(eng.state(0, 4).contains(1.0 / 24.0));
  CHECK(eng.state(1, 1).contains(-1.0));
  CHECK(eng.state(1, 3).contains(1.0 / 6.0));
  // variational coefficients: d x(t)/d y0 = sin t -> k=1 coefficient 1
  CHECK(eng.state_dual(0, 0, 0).contains(1.0));
  CHECK(eng.state_dual(0, 1, 0).contains(0.0));
  CHECK(eng.state_dual(0, 1, 1).contains(1.0));
  CHECK(eng.state_dual(1, 0, 1).contains(-1.0));
  CHECK(eng.state_dual(0, 0, 2).contains(-0.5));
}

TEST_CASE("standard Hamiltonian and field") {
  MassParams m = MassParams::earth_moon();
  model::check_mu_convention(m);

  double x1 = m.x1.mid();
  // q = (x1 + 1, 0, 0, 0): H = -mu1/1 - mu2/2
  Interval H = model::hamiltonian_std(ivec({x1 + 1.0, 0, 0, 0}), m);
  double expect = -(1.0 / 82.0) - (81.0 / 82.0) / 2.0;
  CHECK(ivl::inflate(H, 1e-14).contains(expect));

  IntervalVector f = model::vector_field_std(ivec({x1 + 1.0, 0, 0, 0}), m);
  CHECK(ivl::inflate(f[0], 1e-15).contains(0.0));
  CHECK(ivl::inflate(f[1], 1e-14).contains(-(x1 + 1.0)));

  // a box containing the second primary position is singular
  IntervalVector bad(4);
  bad[0] = Interval(m.x2.mid() - 1e-3, m.x2.mid() + 1e-3);
  bad[1] = Interval(-1e-3, 1e-3);
  bad[2] = Interval(0.0);
  bad[3] = Interval(0.0);
  CHECK_THROWS_AS(model::hamiltonian_std(bad, m), model::CollisionSingularity);
}

TEST_CASE("S symmetry") {
  std::array<double, 4> q{1, 2, 3, 4};
  auto Sq = model::symmetry_S(q);
  CHECK(Sq == std::array<double, 4>{1, -2, -3, 4});
  CHECK(model::symmetry_S(Sq) == q);
  std::array<double, 4> fixed{1, 0, 0, 4};
  CHECK(model::symmetry_S(fixed) == fixed);

  MassParams m = MassParams::earth_moon();
  for (int it = 0; it < 100; ++it) {
    std::array<double, 4> p{rnd_in(-1.5, 1.5), rnd_in(-1.5, 1.5), rnd_in(-2, 2),
                            rnd_in(-2, 2)};
    IntervalVector pv = ivec(p), Spv = ivec(model::symmetry_S(p));
    Interval H1, H2;
    try {
      H1 = model::hamiltonian_std(pv, m);
      H2 = model::hamiltonian_std(Spv, m);
    } catch (const model::CollisionSingularity&) {
      continue;
    }
    CHECK(!ivl::inflate(H1, 1e-12).disjoint_from(H2));

    // field(S q) = -S field(q)
    IntervalVector f = model::vector_field_std(pv, m);
    IntervalVector g = model::vector_field_std(Spv, m);
    IntervalVector mSf = -model::symmetry_S(f);
    for (int i = 0; i < 4; ++i) CHECK(!ivl::inflate(g[i], 1e-11).disjoint_from(mSf[i]));
  }
}

TEST_CASE("regularized Hamiltonian and field") {
  MassParams m = MassParams::earth_moon();
  Interval h(-0.71);

  // at u=v=0 the Hamiltonian reduces to 1/2 p^2 - 4 mu2 for any h
  IntervalVector w(4);
  w[0] = Interval(0.0);
  w[1] = Interval(0.0);
  w[2] = Interval(0.3);
  w[3] = Interval(-1.1);
  Interval G = model::hamiltonian_reg(w, 2, h, m);
  double expect = 0.5 * (0.09 + 1.21) - 8.0 * 81.0 / 82.0 / 2.0;
  CHECK(ivl::inflate(G, 1e-13).contains(expect));

  // w0 = (0,0,0,sqrt(8 mu2)) lies on the zero level for every h
  IntervalVector w0(4);
  w0[0] = Interval(0.0);
  w0[1] = Interval(0.0);
  w0[2] = Interval(0.0);
  w0[3] = ivl::sqrt(8.0 * m.mu2);
  CHECK(model::hamiltonian_reg(w0, 2, Interval(0.123), m).contains(0.0));
  CHECK(model::hamiltonian_reg(w0, 2, h, m).contains(0.0));

  // field at (0,0,0,c): du/ds = 0, dv/ds = c
  IntervalVector wc(4);
  wc[0] = Interval(0.0);
  wc[1] = Interval(0.0);
  wc[2] = Interval(0.0);
  wc[3] = Interval(2.5);
  IntervalVector f = model::vector_field_reg(wc, 2, h, m);
  CHECK(f[0].contains(0.0));
  CHECK(f[0].diam() < 1e-14);
  CHECK(ivl::inflate(f[1], 1e-14).contains(2.5));

  // Gamma(S w) = Gamma(w)
  for (int it = 0; it < 100; ++it) {
    std::array<double, 4> p{rnd_in(-0.8, 0.8), rnd_in(-0.8, 0.8), rnd_in(-2, 2),
                            rnd_in(-2, 2)};
    Interval G1 = model::hamiltonian_reg(ivec(p), 2, h, m);
    Interval G2 = model::hamiltonian_reg(ivec(model::symmetry_S(p)), 2, h, m);
    CHECK(!ivl::inflate(G1, 1e-12).disjoint_from(G2));
  }
}

TEST_CASE("regularized field is J grad Gamma") {
  // two independent routes: the expanded ODE tape versus the symplectic
  // gradient of the Hamiltonian tape
  MassParams m = MassParams::earth_moon();
  ad::Tape gamma = model::make_gamma_tape(m, 2);
  ad::Evaluator<Interval> ev(gamma);
  Interval h(-0.711);

  for (int it = 0; it < 100; ++it) {
    std::array<double, 4> p{rnd_in(-0.8, 0.8), rnd_in(-0.8, 0.8), rnd_in(-2, 2),
                            rnd_in(-2, 2)};
    std::array<Interval, 5> in{Interval(p[0]), Interval(p[1]), Interval(p[2]),
                               Interval(p[3]), h};
    std::array<Interval, 1> val{};
    std::array<Interval, 5> grad{};
    ev.eval_jac(in, std::span<Interval>(val), std::span<Interval>(grad));
    std::array<Interval, 4> g4{grad[0], grad[1], grad[2], grad[3]};
    auto Jg = model::symplectic_J(g4);

    IntervalVector f = model::vector_field_reg(ivec(p), 2, h, m);
    for (int i = 0; i < 4; ++i) CHECK(!ivl::inflate(f[i], 1e-10).disjoint_from(Jg[i]));
  }

  // and against central finite differences of the Hamiltonian (non-rigorous)
  auto gamma_d = [&](std::array<double, 4> w) {
    IntervalVector iv = ivec(w);
    return model::hamiltonian_reg(iv, 2, h, m).mid();
  };
  for (int it = 0; it < 20; ++it) {
    std::array<double, 4> p{rnd_in(-0.8, 0.8), rnd_in(-0.8, 0.8), rnd_in(-2, 2),
                            rnd_in(-2, 2)};
    std::array<double, 4> grad{};
    for (int i = 0; i < 4; ++i) {
      auto hi = p, lo = p;
      hi[i] += 1e-6;
      lo[i] -= 1e-6;
      grad[i] = (gamma_d(hi) - gamma_d(lo)) / 2e-6;
    }
    auto Jg = model::symplectic_J(grad);
    IntervalVector f = model::vector_field_reg(ivec(p), 2, h, m);
    for (int i = 0; i < 4; ++i) CHECK(std::fabs(f[i].mid() - Jg[i]) < 1e-5);
  }
}

TEST_CASE("Levi-Civita coordinate change") {
  MassParams m = MassParams::earth_moon();
  double x2 = m.x2.mid();

  // (1, 0, 0, c) -> (1 + x_i, 0, 0, c/2)
  std::array<double, 4> w{1.0, 0.0, 0.0, 0.8};
  auto q = model::lc_forward(w, 2, m);
  CHECK(q[0] == doctest::Approx(1.0 + x2).epsilon(1e-14));
  CHECK(q[1] == 0.0);
  CHECK(q[2] == 0.0);
  CHECK(q[3] == doctest::Approx(0.4).epsilon(1e-14));

  // antipodal preimage maps to the same point
  std::array<double, 4> wa{-w[0], -w[1], -w[2], -w[3]};
  auto qa = model::lc_forward(wa, 2, m);
  for (int i = 0; i < 4; ++i) CHECK(qa[i] == doctest::Approx(q[i]).epsilon(1e-14));

  // the collision point is excluded
  IntervalVector wc(4);
  wc[0] = Interval(-1e-12, 1e-12);
  wc[1] = Interval(0.0);
  wc[2] = Interval(0.1);
  wc[3] = Interval(0.1);
  CHECK_THROWS_AS(model::lc_forward(wc, 2, m), model::RegularizedCollision);

  // preimages: q = (1 + x_i, 0, 0, 1) has (u,v) = (+-1, 0)
  auto [p1, p2] = model::lc_preimages({1.0 + x2, 0.0, 0.0, 1.0}, 2, m);
  CHECK(std::fabs(std::fabs(p1[0]) - 1.0) < 1e-14);
  CHECK(p1[1] == 0.0);
  // round trip
  auto back = model::lc_forward(p1, 2, m);
  CHECK(back[0] == doctest::Approx(1.0 + x2).epsilon(1e-14));
  CHECK(back[3] == doctest::Approx(1.0).epsilon(1e-14));

  // q on the other side: (u,v) = (0, +-1)
  auto [n1, n2] = model::lc_preimages({x2 - 1.0, 0.0, 0.0, 1.0}, 2, m);
  CHECK(std::fabs(n1[0]) < 1e-14);
  CHECK(std::fabs(std::fabs(n1[1]) - 1.0) < 1e-14);

  // random round trips on both sheets
  for (int it = 0; it < 50; ++it) {
    std::array<double, 4> qq{rnd_in(-1.5, 1.5), rnd_in(-1.5, 1.5), rnd_in(-1, 1),
                             rnd_in(-1, 1)};
    if (std::hypot(qq[0] - x2, qq[1]) < 1e-6) continue;
    auto [a, bb] = model::lc_preimages(qq, 2, m);
    auto ra = model::lc_forward(a, 2, m);
    auto rb = model::lc_forward(bb, 2, m);
    for (int i = 0; i < 4; ++i) {
      CHECK(ra[i] == doctest::Approx(qq[i]).epsilon(1e-9));
      CHECK(rb[i] == doctest::Approx(qq[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("time rescale rate") {
  CHECK(model::time_rescale_rate(std::array<double, 4>{0, 0, 9, 9}) == 0.0);
  CHECK(model::time_rescale_rate(std::array<double, 4>{1, 0, 0, 0}) == 4.0);
  CHECK(model::time_rescale_rate(std::array<double, 4>{3, 4, 0, 0}) == 100.0);
}

TEST_CASE("collision residual") {
  MassParams m = MassParams::earth_moon();
  IntervalVector w0(4);
  w0[0] = Interval(0.0);
  w0[1] = Interval(0.0);
  w0[2] = Interval(0.0);
  w0[3] = ivl::sqrt(8.0 * m.mu2);
  auto c = model::collision_residual(w0, m);
  CHECK(c[0].contains(0.0));
  CHECK(c[1].contains(0.0));
  CHECK(c[2].contains(0.0));
  CHECK(c[2].diam() < 1e-14);

  // published collision momentum: third component vanishes to 1e-10
  auto cpub = model::collision_residual(ivec({0, 0, 0, 2.81112771399}), m);
  CHECK(ivl::mag(cpub[2]) < 1e-10);

  auto cx = model::collision_residual(ivec({1, 0, 0, 0}), m);
  CHECK(cx[0].contains(1.0));
  CHECK(!cx[0].contains(0.0));
}

TEST_CASE("energy invariance: H(gamma_2(w)) = h on the zero level") {
  MassParams m = MassParams::earth_moon();
  double h = -0.71;
  double x2 = m.x2.mid(), mu1 = m.mu1.mid(), mu2 = m.mu2.mid();
  int done = 0;
  for (int it = 0; it < 300 && done < 100; ++it) {
    double u = rnd_in(-1.2, 1.2), v = rnd_in(-1.2, 1.2), pu = rnd_in(-1, 1);
    double A = u * u, B = v * v, r2 = A + B;
    if (r2 < 1e-3) continue;
    double D = (A - B - 1.0) * (A - B - 1.0) + 4.0 * A * B;
    if (D < 1e-6) continue;
    // solve Gamma_{2,h} = 0 for pv: 1/2 pv^2 - 2u(x2+r2) pv + c0 = 0
    double c0 = 0.5 * pu * pu - 2.0 * x2 * v * pu - 4.0 * mu2 +
                2.0 * r2 * (v * pu - 2.0 * h - 2.0 * mu1 / std::sqrt(D));
    double k = 2.0 * u * (x2 + r2);
    double disc = k * k - 2.0 * c0;
    if (disc <= 0.0) continue;
    double pv = k + std::sqrt(disc);
    std::array<double, 4> w{u, v, pu, pv};
    // confirm the constraint, then map and compare energies
    IntervalVector wi = ivec(w);
    Interval G = model::hamiltonian_reg(wi, 2, Interval(h), m);
    if (ivl::mag(G) > 1e-9) continue;
    Interval H = model::hamiltonian_std(model::lc_forward(wi, 2, m), m);
    CHECK(std::fabs(H.mid() - h) < 1e-8);
    ++done;
  }
  CHECK(done == 100);
}

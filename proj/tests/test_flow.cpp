#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "reg3bp/flow.hpp"
#include "reg3bp/model.hpp"

using namespace reg3bp;
using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;
using model::MassParams;

namespace {

std::mt19937_64 rng(90210);
double rnd_in(double a, double b) {
  std::uniform_real_distribution<double> d(a, b);
  return d(rng);
}

ad::Tape harmonic_tape() {
  ad::Builder b;
  ad::Var x = b.input(), y = b.input();
  b.output(y);
  b.output(-x);
  return b.take();
}

ad::Tape rotation_tape() {  // x' = -y, y' = x
  ad::Builder b;
  ad::Var x = b.input(), y = b.input();
  b.output(-y);
  b.output(x);
  return b.take();
}

ad::Tape constant_tape4() {  // x' = (1, 0, 0, 0)
  ad::Builder b;
  (void)b.input();
  (void)b.input();
  (void)b.input();
  (void)b.input();
  b.output(b.constant(1.0));
  b.output(b.constant(0.0));
  b.output(b.constant(0.0));
  b.output(b.constant(0.0));
  return b.take();
}

IntervalVector point_box(std::initializer_list<double> xs) {
  IntervalVector v(xs.size());
  std::size_t i = 0;
  for (double x : xs) v[i++] = Interval(x);
  return v;
}

// solve Gamma_{2,h}(u,v,pu,pv)=0 for pv (largest root), doubles
bool solve_pv(const MassParams& m, double h, double u, double v, double pu, double& pv) {
  double x2 = m.x2.mid(), mu1 = m.mu1.mid(), mu2 = m.mu2.mid();
  double A = u * u, B = v * v, r2 = A + B;
  double D = (A - B - 1.0) * (A - B - 1.0) + 4.0 * A * B;
  if (D < 1e-8) return false;
  double c0 = 0.5 * pu * pu - 2.0 * x2 * v * pu - 4.0 * mu2 +
              2.0 * r2 * (v * pu - 2.0 * h - 2.0 * mu1 / std::sqrt(D));
  double k = 2.0 * u * (x2 + r2);
  double disc = k * k - 2.0 * c0;
  if (disc <= 0.0) return false;
  pv = k + std::sqrt(disc);
  return true;
}

}  // namespace

TEST_CASE("rigorous flow: harmonic oscillator quarter period") {
  ad::Tape t = harmonic_tape();
  flow::IntegratorConfig cfg;
  auto out = flow::flow_rigorous(t, point_box({1.0, 0.0}), M_PI / 2.0, cfg, true);
  CHECK(out.state[0].contains(0.0));
  CHECK(out.state[1].contains(-1.0));
  CHECK(out.state.max_diam() < 1e-9);
  // D Phi_{pi/2} is the rotation by pi/2: [[0,1],[-1,0]] acting as x0 -> ...
  REQUIRE(out.derivative.has_value());
  const IntervalMatrix& V = *out.derivative;
  CHECK(V(0, 0).contains(0.0));
  CHECK(V(0, 1).contains(1.0));
  CHECK(V(1, 0).contains(-1.0));
  CHECK(V(1, 1).contains(0.0));
  CHECK(V.max_diam() < 1e-9);
}

TEST_CASE("fast flow: harmonic oscillator") {
  ad::Tape t = harmonic_tape();
  flow::IntegratorConfig cfg;
  auto x = flow::flow_fast(t, std::array<double, 2>{1.0, 0.0}, M_PI / 2.0, cfg);
  CHECK(std::fabs(x[0]) < 1e-10);
  CHECK(std::fabs(x[1] + 1.0) < 1e-10);
}

TEST_CASE("containment regression: fast image inside rigorous box") {
  MassParams m = MassParams::earth_moon();
  ad::Tape reg = model::make_reg_tape(m, 2);
  flow::IntegratorConfig cfg;
  double h = -0.711;
  int done = 0;
  for (int it = 0; it < 300 && done < 100; ++it) {
    double u = rnd_in(-0.6, 0.6), v = rnd_in(-0.6, 0.6), pu = rnd_in(-0.5, 0.5), pv;
    if (!solve_pv(m, h, u, v, pu, pv)) continue;
    if (std::fabs(pv) > 4.0) continue;
    double T = rnd_in(0.02, 0.15);
    std::array<double, 5> x0{u, v, pu, pv, h};
    std::vector<double> xf;
    try {
      xf = flow::flow_fast(reg, x0, T, cfg);
    } catch (const flow::SingularityHit&) {
      continue;
    }
    IntervalVector X0(5);
    for (int i = 0; i < 5; ++i) X0[i] = ivl::inflate(Interval(x0[i]), 1e-11);
    flow::FlowResult out;
    try {
      out = flow::flow_rigorous(reg, X0, T, cfg, false);
    } catch (const flow::SingularityHit&) {
      continue;
    } catch (const flow::BlowUp&) {
      continue;  // grazed a near-singular region
    } catch (const flow::StepUnderflow&) {
      continue;
    }
    for (int i = 0; i < 4; ++i) CHECK(out.state[i].contains(xf[i]));
    ++done;
  }
  CHECK(done == 100);
}

TEST_CASE("Gamma conservation along the rigorous flow") {
  MassParams m = MassParams::earth_moon();
  ad::Tape reg = model::make_reg_tape(m, 2);
  flow::IntegratorConfig cfg;
  double h = -0.711;
  int done = 0;
  for (int it = 0; it < 100 && done < 20; ++it) {
    double u = rnd_in(-0.5, 0.5), v = rnd_in(-0.5, 0.5), pu = rnd_in(-0.5, 0.5), pv;
    if (!solve_pv(m, h, u, v, pu, pv)) continue;
    IntervalVector X0(5);
    X0[0] = ivl::inflate(Interval(u), 1e-9);
    X0[1] = ivl::inflate(Interval(v), 1e-9);
    X0[2] = ivl::inflate(Interval(pu), 1e-9);
    X0[3] = ivl::inflate(Interval(pv), 1e-9);
    X0[4] = Interval(h);
    flow::FlowResult out;
    try {
      out = flow::flow_rigorous(reg, X0, 0.1, cfg, false);
    } catch (const flow::SingularityHit&) {
      continue;
    }
    IntervalVector w(4);
    for (int i = 0; i < 4; ++i) w[i] = out.state[i];
    Interval G0 = model::hamiltonian_reg(
        IntervalVector{X0[0], X0[1], X0[2], X0[3]}, 2, Interval(h), m);
    Interval G1 = model::hamiltonian_reg(w, 2, Interval(h), m);
    CHECK(!G0.disjoint_from(G1));
    CHECK(G1.contains(0.0));
    ++done;
  }
  CHECK(done == 20);
}

TEST_CASE("S-reversal of the regularized flow") {
  MassParams m = MassParams::earth_moon();
  ad::Tape fwd = model::make_reg_tape(m, 2);
  ad::Tape bwd = model::make_reg_tape(m, 2, true);
  flow::IntegratorConfig cfg;
  double h = -0.711;
  int done = 0;
  for (int it = 0; it < 100 && done < 20; ++it) {
    double u = rnd_in(-0.5, 0.5), v = rnd_in(-0.5, 0.5), pu = rnd_in(-0.5, 0.5), pv;
    if (!solve_pv(m, h, u, v, pu, pv)) continue;
    double T = rnd_in(0.05, 0.2);
    std::array<double, 4> w{u, v, pu, pv};
    auto Sw = model::symmetry_S(w);
    std::vector<double> a, b;
    try {
      a = flow::flow_fast(fwd, std::array<double, 5>{w[0], w[1], w[2], w[3], h}, T, cfg);
      b = flow::flow_fast(bwd, std::array<double, 5>{Sw[0], Sw[1], Sw[2], Sw[3], h}, T, cfg);
    } catch (const flow::SingularityHit&) {
      continue;
    }
    // S(Phi_T(w)) = Phi_{-T}(S(w))
    std::array<double, 4> Sa = model::symmetry_S(std::array<double, 4>{a[0], a[1], a[2], a[3]});
    for (int i = 0; i < 4; ++i) CHECK(std::fabs(Sa[i] - b[i]) < 1e-9);
    ++done;
  }
  CHECK(done == 20);
}

TEST_CASE("S-reversal of the standard flow") {
  MassParams m = MassParams::earth_moon();
  ad::Tape fwd = model::make_std_tape(m);
  ad::Tape bwd = model::make_std_tape(m, true);
  flow::IntegratorConfig cfg;
  int done = 0;
  for (int it = 0; it < 200 && done < 20; ++it) {
    std::array<double, 4> q{rnd_in(-1.5, 1.5), rnd_in(-1.5, 1.5), rnd_in(-1, 1),
                            rnd_in(-1, 1)};
    double dmin = std::min(std::hypot(q[0] - m.x1.mid(), q[1]),
                           std::hypot(q[0] - m.x2.mid(), q[1]));
    if (dmin < 0.2) continue;
    double T = rnd_in(0.02, 0.1);
    std::vector<double> a, b;
    try {
      a = flow::flow_fast(fwd, q, T, cfg);
      b = flow::flow_fast(bwd, model::symmetry_S(q), T, cfg);
    } catch (const flow::SingularityHit&) {
      continue;
    }
    auto Sa = model::symmetry_S(std::array<double, 4>{a[0], a[1], a[2], a[3]});
    for (int i = 0; i < 4; ++i) CHECK(std::fabs(Sa[i] - b[i]) < 1e-9);
    ++done;
  }
  CHECK(done == 20);
}

TEST_CASE("variational enclosure contains finite-difference Jacobians") {
  MassParams m = MassParams::earth_moon();
  ad::Tape reg = model::make_reg_tape(m, 2);
  flow::IntegratorConfig cfg;
  double h = -0.711;
  int done = 0;
  for (int it = 0; it < 200 && done < 50; ++it) {
    double u = rnd_in(-0.5, 0.5), v = rnd_in(-0.5, 0.5), pu = rnd_in(-0.4, 0.4), pv;
    if (!solve_pv(m, h, u, v, pu, pv)) continue;
    if (std::fabs(pv) > 4.0) continue;
    double T = rnd_in(0.02, 0.08);
    std::array<double, 5> x0{u, v, pu, pv, h};
    flow::FlowResult out;
    try {
      out = flow::flow_rigorous(reg, point_box({u, v, pu, pv, h}), T, cfg, true);
    } catch (const flow::SingularityHit&) {
      continue;
    }
    REQUIRE(out.derivative.has_value());
    bool usable = true;
    const double fd_h = 1e-6;
    for (int j = 0; j < 4 && usable; ++j) {
      auto xp = x0, xm = x0;
      xp[j] += fd_h;
      xm[j] -= fd_h;
      std::vector<double> fp, fm;
      try {
        fp = flow::flow_fast(reg, xp, T, cfg);
        fm = flow::flow_fast(reg, xm, T, cfg);
      } catch (const flow::SingularityHit&) {
        usable = false;
        break;
      }
      for (int i = 0; i < 4; ++i) {
        double fd = (fp[i] - fm[i]) / (2 * fd_h);
        CHECK(ivl::inflate((*out.derivative)(i, j), 1e-4).contains(fd));
      }
    }
    if (usable) ++done;
  }
  CHECK(done == 50);
}

TEST_CASE("monotone containment for nested start boxes") {
  MassParams m = MassParams::earth_moon();
  ad::Tape reg = model::make_reg_tape(m, 2);
  flow::IntegratorConfig cfg;
  double h = -0.711;
  double u = 0.4, v = 0.1, pu = 0.2, pv;
  REQUIRE(solve_pv(m, h, u, v, pu, pv));
  IntervalVector W(5);
  W[0] = ivl::inflate(Interval(u), 2e-7);
  W[1] = ivl::inflate(Interval(v), 2e-7);
  W[2] = ivl::inflate(Interval(pu), 2e-7);
  W[3] = ivl::inflate(Interval(pv), 2e-7);
  W[4] = Interval(h);
  auto big = flow::flow_rigorous(reg, W, 0.2, cfg, false);
  // images of sampled points of a shrunken box stay inside the big image
  for (int s = 0; s < 20; ++s) {
    std::array<double, 5> x0{u + rnd_in(-1e-7, 1e-7), v + rnd_in(-1e-7, 1e-7),
                             pu + rnd_in(-1e-7, 1e-7), pv + rnd_in(-1e-7, 1e-7), h};
    auto xf = flow::flow_fast(reg, x0, 0.2, cfg);
    for (int i = 0; i < 4; ++i) CHECK(big.state[i].contains(xf[i]));
  }
}

TEST_CASE("constant-field tube is a translated box") {
  ad::Tape t = constant_tape4();
  flow::IntegratorConfig cfg;
  cfg.max_step = 0.25;
  flow::RigorousFlow rf(t, cfg, false);
  IntervalVector X0(4);
  for (int i = 0; i < 4; ++i) X0[i] = Interval(0.0, 1e-3);
  rf.init(flow::Doubleton::from_box(X0));
  while (rf.time().hi() < 1.0) rf.step();
  auto tube = flow::tube_from_records(rf.records(), 1, 1.0);
  REQUIRE(tube.segments.size() >= 4);
  for (const auto& seg : tube.segments) {
    // x-extent equals initial extent advected by the window, up to rounding
    CHECK(seg.box[0].lo() >= seg.t.lo() - 1e-12);
    CHECK(seg.box[0].hi() <= seg.t.hi() + 1e-3 + 1e-12);
    for (int i = 1; i < 4; ++i) {
      CHECK(seg.box[i].lo() >= -1e-12);
      CHECK(seg.box[i].hi() <= 1e-3 + 1e-12);
    }
  }
}

TEST_CASE("section crossing: rotation field half turn") {
  ad::Tape t = rotation_tape();
  flow::IntegratorConfig cfg;
  flow::RigorousFlow rf(t, cfg, true);
  rf.init(flow::Doubleton::from_box(point_box({1.0, 0.0})));
  // y = 0 crossed downward at (-1, 0) after half a turn
  flow::SectionSpec sec = flow::SectionSpec::coordinate(2, 1, 0.0, -1);
  auto cross = flow::flow_to_section(rf, t, sec, true);
  CHECK(cross.hull[0].contains(-1.0));
  CHECK(cross.hull[1].contains(0.0));
  CHECK(cross.hull.max_diam() < 1e-9);
  CHECK(cross.time.contains(M_PI));
  CHECK(cross.time.diam() < 1e-9);
  REQUIRE(cross.deriv.has_value());
  // projected derivative maps the section tangent e2 to ... row/col checks:
  // D P for the rotation composed with the section projection has zero first row
  CHECK((*cross.deriv)(1, 1).contains(0.0));
}

TEST_CASE("tangential contact is rejected") {
  ad::Tape t = rotation_tape();
  flow::IntegratorConfig cfg;
  flow::RigorousFlow rf(t, cfg, false);
  rf.init(flow::Doubleton::from_box(point_box({1.0, 0.0})));
  // the unit circle is tangent to {x = -1}
  flow::SectionSpec sec;
  sec.normal = {1.0, 0.0};
  sec.offset = -1.0;
  sec.direction = -1;
  CHECK_THROWS_AS(flow::flow_to_section(rf, t, sec, false), flow::TangentialCrossing);
}

TEST_CASE("flow conjugacy between frames (time rescale)") {
  // Phi_t(gamma_2(w)) = gamma_2(Phi^{2,h}_s(w)) with t = int 4(u^2+v^2) ds
  MassParams m = MassParams::earth_moon();
  ad::Tape reg_t = model::make_reg_time_tape(m, 2);
  ad::Tape std_t = model::make_std_tape(m);
  flow::IntegratorConfig cfg;
  cfg.tol = 1e-16;
  double h = -0.711;
  int done = 0;
  for (int it = 0; it < 300 && done < 50; ++it) {
    double u = rnd_in(-0.7, 0.7), v = rnd_in(-0.7, 0.7), pu = rnd_in(-0.5, 0.5), pv;
    if (!solve_pv(m, h, u, v, pu, pv)) continue;
    if (u * u + v * v < 0.05) continue;  // keep the physical clock running
    if (std::fabs(pv) > 4.0) continue;
    double S = rnd_in(0.02, 0.1);
    std::array<double, 6> w6{u, v, pu, pv, h, 0.0};
    std::vector<double> end;
    try {
      end = flow::flow_fast(reg_t, w6, S, cfg);
    } catch (const flow::SingularityHit&) {
      continue;
    }
    // shadowing in the standard frame degrades near either primary; keep the
    // comparison to trajectories that stay well clear of both
    {
      bool safe = true;
      for (int s = 1; s <= 20 && safe; ++s) {
        auto mid = flow::flow_fast(reg_t, w6, S * s / 20.0, cfg);
        double r2 = mid[0] * mid[0] + mid[1] * mid[1];
        double A = mid[0] * mid[0], B = mid[1] * mid[1];
        double D = (A - B - 1.0) * (A - B - 1.0) + 4.0 * A * B;
        if (r2 < 0.3 || D < 0.5) safe = false;
      }
      if (!safe) continue;
    }
    double t_phys = end[5];
    std::array<double, 4> w{u, v, pu, pv};
    std::array<double, 4> q0, q1;
    try {
      q0 = model::lc_forward(w, 2, m);
      auto q0v = flow::flow_fast(std_t, q0, t_phys, cfg);
      q1 = model::lc_forward(std::array<double, 4>{end[0], end[1], end[2], end[3]}, 2, m);
      for (int i = 0; i < 4; ++i) CHECK(std::fabs(q0v[i] - q1[i]) < 1e-9);
    } catch (const model::RegularizedCollision&) {
      continue;
    } catch (const flow::SingularityHit&) {
      continue;
    }
    ++done;
  }
  CHECK(done == 50);
}

TEST_CASE("Moon singularity raises SingularityHit") {
  MassParams m = MassParams::earth_moon();
  ad::Tape reg = model::make_reg_tape(m, 2);
  flow::IntegratorConfig cfg;
  IntervalVector X0(5);
  X0[0] = ivl::inflate(Interval(1.0), 1e-6);  // on the excluded plane u=1, v=0
  X0[1] = ivl::inflate(Interval(0.0), 1e-6);
  X0[2] = Interval(0.0);
  X0[3] = Interval(0.0);
  X0[4] = Interval(-0.711);
  CHECK_THROWS_AS(flow::flow_rigorous(reg, X0, 0.1, cfg, false), flow::SingularityHit);
}

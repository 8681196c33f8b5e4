#include <cmath>
#include <random>

#include "doctest.h"
#include "reg3bp/dataset.hpp"

using namespace reg3bp;
using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;

namespace {

std::mt19937_64 rng(1357);
double rnd_in(double a, double b) {
  std::uniform_real_distribution<double> d(a, b);
  return d(rng);
}

const prove::ChartDataset& dataset() {
  static prove::ChartDataset ds = [] {
    flow::IntegratorConfig cfg;
    auto d = prove::build_dataset(model::MassParams::earth_moon(), cfg);
    prove::check_dataset_invariants(d);
    return d;
  }();
  return ds;
}

IntervalVector zbox(double c1, double c2, double r) {
  IntervalVector z(2);
  z[0] = ivl::inflate(Interval(c1), r);
  z[1] = ivl::inflate(Interval(c2), r);
  return z;
}

}  // namespace

TEST_CASE("generic chart construction and degenerate detection") {
  const auto& ds = dataset();
  const auto& c1 = ds.chart(1);
  CHECK(c1.kind == section::Chart::Kind::generic);
  CHECK(c1.epsilon == 8.5e-10);
  // verified invertibility came with construction; spot check A * Ainv ~ I
  IntervalMatrix prod = section::detail::thin4(c1.A) * c1.Ainv;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(ivl::inflate(prod(i, j), 1e-9).contains(i == j ? 1.0 : 0.0));

  // duplicated direction columns cannot be verified invertible
  auto m = model::MassParams::earth_moon();
  CHECK_THROWS_AS(section::build_generic_chart(m, ds.h0.mid(), c1.w, c1.u_hat, c1.u_hat,
                                               c1.epsilon),
                  section::DegenerateChart);
}

TEST_CASE("chart_to_phase at the origin returns the base point on the level set") {
  const auto& ds = dataset();
  auto m = model::MassParams::earth_moon();
  for (int k : {1, 2, 5, 16, 18}) {
    section::ChartOps ops(m, ds.chart(k));
    auto img = ops.chart_to_phase(zbox(0, 0, 0), ds.h0);
    for (int i = 0; i < 4; ++i)
      CHECK(ivl::inflate(img.hull4[i], 1e-10).contains(ds.chart(k).w[i]));
    CHECK(ops.gamma_on(img.hull4, ds.h0).contains(0.0));
    // section residual
    Interval sig;
    for (int i = 0; i < 4; ++i)
      sig += Interval(ds.chart(k).normal[i]) * (img.hull4[i] - Interval(ds.chart(k).w[i]));
    CHECK(sig.contains(0.0));
  }
}

TEST_CASE("collision chart: the line z1+z2=0 realizes exact collisions") {
  const auto& ds = dataset();
  auto m = model::MassParams::earth_moon();
  section::ChartOps ops(m, ds.chart(0));
  for (double t : {0.3, -0.7, 0.95}) {
    auto img = ops.chart_to_phase(zbox(t, -t, 0), ds.h0);
    CHECK(img.hull4[0] == Interval(0.0));  // u exactly zero
    CHECK(img.hull4[1] == Interval(0.0));  // v exactly zero on the section
    // p_v consistent with sqrt(8 mu2 - pu^2)
    Interval pu = img.hull4[2];
    Interval expect = ivl::sqrt(8.0 * m.mu2 - ivl::sqr(pu));
    CHECK(!ivl::inflate(img.hull4[3], 1e-12).disjoint_from(expect));
    // and the collision residual vanishes
    auto c = model::collision_residual(img.hull4, m);
    CHECK(c[2].contains(0.0));
    CHECK(c[2].diam() < 1e-12);
  }
}

TEST_CASE("Gamma vanishes identically on psi0 images") {
  const auto& ds = dataset();
  auto m = model::MassParams::earth_moon();
  section::ChartOps ops(m, ds.chart(0));
  for (int it = 0; it < 50; ++it) {
    auto img = ops.chart_to_phase(zbox(rnd_in(-1, 1), rnd_in(-1, 1), 0), ds.h0);
    Interval g = ops.gamma_on(img.hull4, ds.h0);
    CHECK(g.contains(0.0));
    CHECK(g.diam() < 1e-12);
  }
}

TEST_CASE("psi inverse round trip contains the identity") {
  const auto& ds = dataset();
  auto m = model::MassParams::earth_moon();
  for (int k : {0, 1, 7, 18}) {
    section::ChartOps ops(m, ds.chart(k));
    int done = 0;
    for (int it = 0; it < 100; ++it) {
      IntervalVector z = zbox(rnd_in(-0.9, 0.9), rnd_in(-0.9, 0.9), 1e-4);
      section::PsiImage img;
      try {
        img = ops.chart_to_phase(z, ds.h0);
      } catch (const section::NewtonFailure&) {
        continue;
      }
      IntervalVector back = ops.phase_to_chart(img.hull4, ds.h0);
      CHECK(back[0].contains(z[0]));
      CHECK(back[1].contains(z[1]));
      ++done;
    }
    CHECK(done == 100);
  }
}

TEST_CASE("psi0 inverse maps collision-circle points onto z1+z2=0") {
  const auto& ds = dataset();
  auto m = model::MassParams::earth_moon();
  section::ChartOps ops(m, ds.chart(0));
  for (double pu : {0.0, 1e-10, -4e-10}) {
    IntervalVector p(4);
    p[0] = Interval(0.0);
    p[1] = Interval(0.0);
    p[2] = Interval(pu);
    p[3] = ivl::sqrt(8.0 * m.mu2 - ivl::sqr(Interval(pu)));
    IntervalVector z = ops.phase_to_chart(p, ds.h0);
    CHECK((z[0] + z[1]).contains(0.0));
    CHECK((z[0] + z[1]).diam() < 1e-10);
  }
  // off the section {v = 0}
  IntervalVector bad(4);
  bad[0] = Interval(0.0);
  bad[1] = Interval(1e-3);
  bad[2] = Interval(0.0);
  bad[3] = Interval(std::sqrt(8.0 * m.mu2.mid()));
  CHECK_THROWS_AS(ops.phase_to_chart(bad, ds.h0), section::OffSection);
}

TEST_CASE("eta shear") {
  const auto& ds = dataset();
  double L = ds.L;
  IntervalVector z(2);
  z[0] = Interval(0.3, 0.4);
  z[1] = Interval(-0.2, 0.1);
  auto round = section::eta_shear(section::eta_shear(z, L), L, true);
  CHECK(round[0].contains(z[0]));
  CHECK(round[1].contains(z[1]));

  // eta_L(N_c) inside N_c for the production L (up to outward rounding: the
  // extreme value (1+L)/(1+L) = 1 is attained exactly)
  IntervalVector nc(2);
  nc[0] = Interval(-1, 1);
  nc[1] = Interval(-1, 1);
  auto img = section::eta_shear(nc, L);
  CHECK(img[0].subset_of(ivl::inflate(Interval(-1, 1), 1e-14)));
  CHECK(img[1].subset_of(ivl::inflate(Interval(-1, 1), 1e-14)));

  // eta_0 is the identity
  auto id = section::eta_shear(z, 0.0);
  CHECK(id[0].contains(z[0]));
  CHECK(id[1].contains(z[1]));
  CHECK(id[0].diam() < z[0].diam() + 1e-15);
}

TEST_CASE("local Poincare maps are aligned with the dynamics") {
  // image of a tiny box at the origin lands near the origin of the next
  // chart; the unstable stretching amplifies per-step remainders, so this
  // check runs at a tight remainder target
  const auto& ds = dataset();
  auto m = model::MassParams::earth_moon();
  flow::IntegratorConfig cfg;
  cfg.tol = 1e-16;
  for (int k = 0; k < 3; ++k) {
    section::PoincareLeg leg(m, ds.chart(k), ds.chart(k + 1), ds.h0, false, cfg);
    auto res = leg.map(zbox(0, 0, 1e-6), false);
    // the non-rigorous value (enclosure midpoint) is the oracle here; the
    // enclosure width itself sits at the double-precision noise floor of the
    // leg, amplified by the chart conditioning
    CHECK(std::fabs(res.z[0].mid()) < 1e-3);
    CHECK(std::fabs(res.z[1].mid()) < 1e-3);
    CHECK(res.z[0].diam() < 5e-2);
    CHECK(res.z[1].diam() < 5e-2);
  }
}

TEST_CASE("local map derivative encloses finite differences") {
  const auto& ds = dataset();
  auto m = model::MassParams::earth_moon();
  flow::IntegratorConfig cfg;
  cfg.tol = 1e-16;
  section::PoincareLeg leg(m, ds.chart(0), ds.chart(1), ds.h0, false, cfg);
  auto res = leg.map(zbox(0.2, -0.3, 1e-5), true);
  REQUIRE(res.dz.has_value());

  // double-precision local map as the independent finite-difference oracle
  section::ChartOps from(m, ds.chart(0)), to(m, ds.chart(1));
  ad::Tape tape = model::make_reg_tape(m, 2);
  auto local_fast = [&](double z1, double z2) {
    auto img = from.chart_to_phase(zbox(z1, z2, 0.0), ds.h0);
    std::vector<double> x(5);
    for (int i = 0; i < 4; ++i) x[i] = img.hull4[i].mid();
    x[4] = ds.h0.mid();
    flow::fast_to_section(tape, x, leg.target_section(), cfg);
    IntervalVector p(4);
    for (int i = 0; i < 4; ++i) p[i] = Interval(x[i]);
    IntervalMatrix Z(4, 0);
    IntervalVector none(0);
    auto z = to.phase_to_chart_affine(p, Z, none, Z, none);
    return std::array<double, 2>{z[0].mid(), z[1].mid()};
  };
  // the oracle's own value noise is ~3e-5, so the difference step must stay
  // well above it
  const double fd = 0.05;
  auto fx = local_fast(0.2 + fd, -0.3), fmx = local_fast(0.2 - fd, -0.3);
  auto fy = local_fast(0.2, -0.3 + fd), fmy = local_fast(0.2, -0.3 - fd);
  double J[2][2] = {{(fx[0] - fmx[0]) / (2 * fd), (fy[0] - fmy[0]) / (2 * fd)},
                    {(fx[1] - fmx[1]) / (2 * fd), (fy[1] - fmy[1]) / (2 * fd)}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(ivl::inflate((*res.dz)(i, j), 5e-3).contains(J[i][j]));
}

TEST_CASE("psi0 tangents at the origin match the scaled directions") {
  // psi0 maps into the section {v = 0}, so its tangent can only match
  // eps*u_hat_0 modulo the flow direction at w_0: compare after projecting
  // that direction out of the residual
  const auto& ds = dataset();
  auto m = model::MassParams::earth_moon();
  section::ChartOps ops(m, ds.chart(0));
  // the chart scale is ~1e-10, so tiny steps would probe below the ulp of
  // p_v ~ 2.8; central differences over the full square are exact enough
  // for the linear parts and kill the even curvature
  const double fd = 1.0;
  auto at = [&](double z1, double z2) {
    auto img = ops.chart_to_phase(zbox(z1, z2, 0), ds.h0);
    std::array<double, 4> p;
    for (int i = 0; i < 4; ++i) p[i] = img.hull4[i].mid();
    return p;
  };
  auto pp = at(fd, 0), pm = at(-fd, 0);
  auto qp = at(0, fd), qm = at(0, -fd);
  double eps = ds.eps_eff();

  // flow direction at w0 (unit)
  auto P = model::detail::reg_params<double>(m, 2);
  double pv0 = std::sqrt(8.0 * m.mu2.mid());
  auto f = model::formulas::field_reg<double>(P, 0.0, 0.0, 0.0, pv0, ds.h0.mid());
  double fn = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2] + f[3] * f[3]);
  for (auto& x : f) x /= fn;

  auto check_dir = [&](const std::array<double, 4>& plus, const std::array<double, 4>& minus,
                       const double* expect_hat) {
    std::array<double, 4> resid;
    double dot = 0;
    for (int i = 0; i < 4; ++i) {
      resid[i] = (plus[i] - minus[i]) / (2 * fd) - eps * expect_hat[i];
      dot += resid[i] * f[i];
    }
    double off = 0;
    for (int i = 0; i < 4; ++i) off = std::max(off, std::fabs(resid[i] - dot * f[i]));
    CHECK(off <= 1e-3 * eps);
  };
  check_dir(pp, pm, prove::seed::u_hat[0]);
  check_dir(qp, qm, prove::seed::s_hat[0]);
}

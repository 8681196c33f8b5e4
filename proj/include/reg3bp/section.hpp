#pragma once

/* -----------------------------------------------------------------
 * Poincare sections and the two-dimensional energy-restricted
 * charts psi on them.
 *
 * A generic chart at a base point w is Lambda(x) = w + A x with
 * A = [eps*u_hat, eps*s_hat, eps*U(J grad G), eps*U(grad G)] and
 * psi(z) = Lambda(z, E(z)), where E solves Gamma(Lambda(z,E)) = 0 on
 * the section; E is enclosed by a parametrized interval Newton.
 * The collision chart psi_0 on {v = 0} is explicit:
 *    u = d1 (z1+z2), p_u = d2 (z1-z2), p_v = p_v(u, p_u).
 * Charts mirrored by the reversing symmetry S are derived column-wise
 * so that psi_mirror = S o psi o j holds exactly as functions.
 * ----------------------------------------------------------------- */

#include <array>
#include <cstring>

#include "reg3bp/flow.hpp"
#include "reg3bp/model.hpp"
#include "reg3bp/newton.hpp"

namespace reg3bp::section {

using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;
using model::MassParams;

struct DegenerateChart : std::runtime_error {
  explicit DegenerateChart(const std::string& w) : std::runtime_error("degenerate chart: " + w) {}
};
struct NewtonFailure : std::runtime_error {
  explicit NewtonFailure(const std::string& w)
      : std::runtime_error("chart Newton failure: " + w) {}
};
struct OffSection : std::runtime_error {
  explicit OffSection(const std::string& w) : std::runtime_error("point off section: " + w) {}
};

struct Chart {
  enum class Kind { generic, collision };
  Kind kind = Kind::generic;
  int index = -1;
  std::array<double, 4> w{};
  std::array<double, 4> u_hat{}, s_hat{};
  std::array<double, 4> normal{};        // section normal; irrelevant for collision kind
  std::array<std::array<double, 4>, 4> A{};  // A[i][j] = entry (row i, col j)
  double epsilon = 0.0;
  double d1 = 0.0, d2 = 0.0;  // collision chart scales (include epsilon)
  IntervalMatrix Ainv;        // verified enclosure of A^{-1} (generic kind)

  bool s_fixed() const { return w[1] == 0.0 && w[2] == 0.0; }
};

namespace detail {

inline std::array<double, 4> normalize(const std::array<double, 4>& v) {
  double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
  return {v[0] / n, v[1] / n, v[2] / n, v[3] / n};
}

inline IntervalMatrix thin4(const std::array<std::array<double, 4>, 4>& A) {
  IntervalMatrix M(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) M(i, j) = Interval(A[i][j]);
  return M;
}

}  // namespace detail

/* Generic chart construction.  grad/J grad of Gamma_{2,h} are evaluated at
 * (w, h_mid) in double precision (they parameterize a choice, not a claim);
 * invertibility of A is then verified rigorously.  s_symmetric enforces the
 * exact component pattern required at S-fixed base points. */
inline Chart build_generic_chart(const MassParams& m, double h_mid,
                                 const std::array<double, 4>& w,
                                 const std::array<double, 4>& u_hat,
                                 const std::array<double, 4>& s_hat, double epsilon,
                                 bool s_symmetric = false) {
  Chart c;
  c.kind = Chart::Kind::generic;
  c.w = w;
  c.u_hat = u_hat;
  c.s_hat = s_symmetric ? model::symmetry_S(u_hat) : s_hat;
  c.epsilon = epsilon;

  auto P = model::detail::reg_params<double>(m, 2);
  auto f = model::formulas::field_reg<double>(P, w[0], w[1], w[2], w[3], h_mid);
  std::array<double, 4> grad{-f[2], -f[3], f[0], f[1]};  // grad G = J^T f
  if (s_symmetric) {
    // at an S-fixed point J grad has zero (u, p_v) components and grad has
    // zero (v, p_u) components; enforce them exactly
    f[0] = 0.0;
    f[3] = 0.0;
    grad[1] = 0.0;
    grad[2] = 0.0;
  }
  std::array<double, 4> n_dir = detail::normalize(f);
  std::array<double, 4> g_dir = detail::normalize(grad);
  c.normal = n_dir;
  for (int i = 0; i < 4; ++i) {
    c.A[i][0] = epsilon * c.u_hat[i];
    c.A[i][1] = epsilon * c.s_hat[i];
    c.A[i][2] = epsilon * n_dir[i];
    c.A[i][3] = epsilon * g_dir[i];
  }
  try {
    c.Ainv = ivl::verified_inverse(detail::thin4(c.A));
  } catch (const ivl::SingularEnclosure& e) {
    throw DegenerateChart(e.what());
  }
  return c;
}

/* The chart at S w with u/s roles swapped; psi' = S o psi o j exactly. */
inline Chart derive_mirror_chart(const Chart& src) {
  Chart c;
  c.kind = Chart::Kind::generic;
  c.w = model::symmetry_S(src.w);
  c.u_hat = model::symmetry_S(src.s_hat);
  c.s_hat = model::symmetry_S(src.u_hat);
  std::array<double, 4> n = model::symmetry_S(src.normal);
  c.normal = {-n[0], -n[1], -n[2], -n[3]};
  c.epsilon = src.epsilon;
  // columns: col0' = S col1, col1' = S col0, col2' = -S col2, col3' = S col3
  for (int i = 0; i < 4; ++i) {
    std::array<double, 4> col;
    for (int k = 0; k < 4; ++k) col[k] = src.A[k][i];
    std::array<double, 4> Scol = model::symmetry_S(col);
    int target = i == 0 ? 1 : (i == 1 ? 0 : i);
    double sign = (i == 2) ? -1.0 : 1.0;
    for (int k = 0; k < 4; ++k) c.A[k][target] = sign * Scol[k];
  }
  try {
    c.Ainv = ivl::verified_inverse(detail::thin4(c.A));
  } catch (const ivl::SingularEnclosure& e) {
    throw DegenerateChart(e.what());
  }
  return c;
}

inline Chart build_collision_chart(double d1, double d2) {
  Chart c;
  c.kind = Chart::Kind::collision;
  c.w = {0.0, 0.0, 0.0, 0.0};  // base (0,0,0,sqrt(8 mu2)) is implicit in psi0
  c.normal = {0.0, 1.0, 0.0, 0.0};
  c.d1 = d1;
  c.d2 = d2;
  return c;
}

/* psi(z) as an affine-in-offsets enclosure: phase subset of
 * base + span(columns)*offsets, padded to the 5-dim (state, h) layout by the
 * caller.  For the generic chart the offsets are (z1, z2, e1, e2) and the
 * columns are the (thin) chart matrix; for psi_0 the offsets are (z1, z2)
 * and the columns a mean-value enclosure of D psi_0 over the box. */
struct PsiImage {
  IntervalVector base;     // thin 4-vector
  IntervalMatrix cols;     // 4 x k interval matrix
  IntervalVector offsets;  // k offsets (not centered)
  IntervalVector hull4;    // base + cols*offsets
};

class ChartOps {
 public:
  ChartOps(const MassParams& m, const Chart& chart)
      : m_(m),
        chart_(chart),
        gamma_tape_(model::make_gamma_tape(m, 2)),
        gamma_ev_(gamma_tape_),
        psi0_tape_(chart.kind == Chart::Kind::collision ? make_psi0_tape(m, chart)
                                                        : ad::Tape{}),
        psi0_ev_(psi0_tape_.n_in ? psi0_tape_ : dummy_tape()) {}

  const Chart& chart() const { return chart_; }

  /* psi(z-box) on the energy level h. */
  PsiImage chart_to_phase(const IntervalVector& z, const Interval& h) {
    return chart_.kind == Chart::Kind::collision ? psi0_image(z, h) : generic_image(z, h);
  }

  /* psi^{-1} on an affine phase enclosure (tight: projects the pieces). */
  IntervalVector phase_to_chart_affine(const IntervalVector& c, const IntervalMatrix& C,
                                       const IntervalVector& r0, const IntervalMatrix& B,
                                       const IntervalVector& r) const {
    if (chart_.kind == Chart::Kind::collision) {
      // z1 = (u/d1 + pu/d2)/2, z2 = (u/d1 - pu/d2)/2 applied to rows 0 and 2
      auto lin = [&](const Interval& u, const Interval& pu) {
        Interval a = u / Interval(chart_.d1), b = pu / Interval(chart_.d2);
        IntervalVector z(2);
        z[0] = 0.5 * (a + b);
        z[1] = 0.5 * (a - b);
        return z;
      };
      IntervalVector zc = lin(c[0], c[2]);
      for (std::size_t j = 0; j < r0.size(); ++j) {
        IntervalVector col = lin(C(0, j), C(2, j));
        zc[0] += col[0] * r0[j];
        zc[1] += col[1] * r0[j];
      }
      for (std::size_t j = 0; j < r.size(); ++j) {
        IntervalVector col = lin(B(0, j), B(2, j));
        zc[0] += col[0] * r[j];
        zc[1] += col[1] * r[j];
      }
      return zc;
    }
    // rows 0,1 of Ainv * (x - w)
    IntervalVector z(2);
    for (int row = 0; row < 2; ++row) {
      Interval acc;
      for (int i = 0; i < 4; ++i) acc += chart_.Ainv(row, i) * (c[i] - Interval(chart_.w[i]));
      for (std::size_t j = 0; j < r0.size(); ++j) {
        Interval e;
        for (int i = 0; i < 4; ++i) e += chart_.Ainv(row, i) * C(i, j);
        acc += e * r0[j];
      }
      for (std::size_t j = 0; j < r.size(); ++j) {
        Interval e;
        for (int i = 0; i < 4; ++i) e += chart_.Ainv(row, i) * B(i, j);
        acc += e * r[j];
      }
      z[row] = acc;
    }
    return z;
  }

  /* The two projection rows of psi^{-1}, padded to the (state, h) layout. */
  std::array<std::vector<Interval>, 2> inverse_rows(std::size_t n_dim) const {
    std::array<std::vector<Interval>, 2> rows;
    rows[0].assign(n_dim, Interval(0.0));
    rows[1].assign(n_dim, Interval(0.0));
    if (chart_.kind == Chart::Kind::collision) {
      Interval a = 0.5 / Interval(chart_.d1);
      Interval b = 0.5 / Interval(chart_.d2);
      rows[0][0] = a;
      rows[0][2] = b;
      rows[1][0] = a;
      rows[1][2] = -b;
    } else {
      for (int r = 0; r < 2; ++r)
        for (int i = 0; i < 4; ++i) rows[r][i] = chart_.Ainv(r, i);
    }
    return rows;
  }

  // constant offset of each inverse row: z_r = row . x - off_r
  std::array<Interval, 2> inverse_offsets() const {
    std::array<Interval, 2> off{Interval(0.0), Interval(0.0)};
    if (chart_.kind == Chart::Kind::generic) {
      for (int r = 0; r < 2; ++r) {
        Interval acc;
        for (int i = 0; i < 4; ++i) acc += chart_.Ainv(r, i) * Interval(chart_.w[i]);
        off[r] = acc;
      }
    }
    return off;
  }

  /* psi^{-1} of a crossing set, projected through the step series (tight). */
  IntervalVector phase_to_chart_record(const flow::StepRecord& rec,
                                       const Interval& tau) const {
    auto rows = inverse_rows(rec.xc[0].size());
    auto offs = inverse_offsets();
    IntervalVector z(2);
    for (int r = 0; r < 2; ++r)
      z[r] = rec.eval_row(rows[r], 0.0, tau) - offs[r];
    return z;
  }

  /* psi^{-1} on a plain box; verifies the on-section and on-energy
   * preconditions. */
  IntervalVector phase_to_chart(const IntervalVector& p, const Interval& h) {
    Interval sig;
    if (chart_.kind == Chart::Kind::collision) {
      sig = p[1];
    } else {
      sig = Interval(0.0);
      for (int i = 0; i < 4; ++i)
        sig += Interval(chart_.normal[i]) * (p[i] - Interval(chart_.w[i]));
    }
    if (!sig.contains_zero()) throw OffSection("section residual excludes zero");
    if (!gamma_on(p, h).contains_zero()) throw OffSection("energy residual excludes zero");
    IntervalMatrix Z4(4, 0);
    IntervalVector empty(0);
    return phase_to_chart_affine(p, Z4, empty, Z4, empty);
  }

  Interval gamma_on(const IntervalVector& p, const Interval& h) {
    std::array<Interval, 5> in{p[0], p[1], p[2], p[3], h};
    std::array<Interval, 1> out{};
    gamma_ev_.eval(std::span<const Interval>(in), std::span<Interval>(out));
    return out[0];
  }

  // derivative of psi w.r.t. z over a box, 4x2
  IntervalMatrix dpsi(const IntervalVector& z, const Interval& h) {
    if (chart_.kind == Chart::Kind::collision) return dpsi0(z, h);
    PsiImage img = generic_image(z, h);
    // D psi = A * [I2; DE], DE = -(dG/de)^{-1} (dG/dz) over the box
    IntervalMatrix dGde(2, 2), dGdz(2, 2);
    gamma_jac_pieces(img.hull4, h, dGde, dGdz);
    IntervalMatrix DE = ivl::verified_inverse(dGde) * dGdz;
    IntervalMatrix D(4, 2);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j) {
        Interval acc = Interval(chart_.A[i][j]);
        for (int k = 0; k < 2; ++k) acc += Interval(chart_.A[i][2 + k]) * (-DE(k, j));
        D(i, j) = acc;
      }
    return D;
  }

 private:
  static ad::Tape make_psi0_tape(const MassParams& m, const Chart& c) {
    ad::Builder b;
    ad::Var z1 = b.input(), z2 = b.input(), h = b.input();
    ad::Var u = b.constant(Interval(c.d1)) * (z1 + z2);
    ad::Var pu = b.constant(Interval(c.d2)) * (z1 - z2);
    ad::Var pv = model::formulas::psi0_pv<ad::Var>(b.constant(m.mu1), b.constant(m.mu2),
                                                   b.constant(m.x2), u, pu, h);
    b.output(u);
    b.output(pu);
    b.output(pv);
    return b.take();
  }
  static const ad::Tape& dummy_tape() {
    static ad::Tape t = [] {
      ad::Builder b;
      b.output(b.constant(0.0));
      return b.take();
    }();
    return t;
  }

  PsiImage psi0_image(const IntervalVector& z, const Interval& h) {
    // mean value form around the midpoint
    IntervalVector zm(2);
    zm[0] = Interval(z[0].mid());
    zm[1] = Interval(z[1].mid());
    std::array<Interval, 3> in{z[0], z[1], h}, inm{zm[0], zm[1], h};
    std::array<Interval, 3> val{}, valm{};
    std::array<Interval, 9> jac{};
    psi0_ev_.eval(std::span<const Interval>(inm), std::span<Interval>(valm));
    psi0_ev_.eval_jac(std::span<const Interval>(in), std::span<Interval>(val),
                      std::span<Interval>(jac));
    PsiImage img;
    img.base = IntervalVector(4);
    img.base[0] = valm[0];
    img.base[1] = Interval(0.0);
    img.base[2] = valm[1];
    img.base[3] = valm[2];
    img.cols = IntervalMatrix(4, 2);
    img.cols(0, 0) = jac[0 * 3 + 0];
    img.cols(0, 1) = jac[0 * 3 + 1];
    img.cols(1, 0) = Interval(0.0);
    img.cols(1, 1) = Interval(0.0);
    img.cols(2, 0) = jac[1 * 3 + 0];
    img.cols(2, 1) = jac[1 * 3 + 1];
    img.cols(3, 0) = jac[2 * 3 + 0];
    img.cols(3, 1) = jac[2 * 3 + 1];
    img.offsets = IntervalVector(2);
    img.offsets[0] = z[0] - zm[0];
    img.offsets[1] = z[1] - zm[1];
    img.hull4 = img.base + img.cols * img.offsets;
    return img;
  }

  IntervalMatrix dpsi0(const IntervalVector& z, const Interval& h) {
    std::array<Interval, 3> in{z[0], z[1], h};
    std::array<Interval, 3> val{};
    std::array<Interval, 9> jac{};
    psi0_ev_.eval_jac(std::span<const Interval>(in), std::span<Interval>(val),
                      std::span<Interval>(jac));
    IntervalMatrix D(4, 2);
    D(0, 0) = jac[0];
    D(0, 1) = jac[1];
    D(1, 0) = Interval(0.0);
    D(1, 1) = Interval(0.0);
    D(2, 0) = jac[3];
    D(2, 1) = jac[4];
    D(3, 0) = jac[6];
    D(3, 1) = jac[7];
    return D;
  }

  // dG/de and dG/dz at a phase box (rows: Gamma condition, section condition)
  void gamma_jac_pieces(const IntervalVector& phase, const Interval& h, IntervalMatrix& dGde,
                        IntervalMatrix& dGdz) {
    std::array<Interval, 5> in{phase[0], phase[1], phase[2], phase[3], h};
    std::array<Interval, 1> val{};
    std::array<Interval, 5> grad{};
    gamma_ev_.eval_jac(std::span<const Interval>(in), std::span<Interval>(val),
                       std::span<Interval>(grad));
    for (int j = 0; j < 2; ++j) {
      Interval ge, gz, ne, nz;
      for (int i = 0; i < 4; ++i) {
        ge += grad[i] * Interval(chart_.A[i][2 + j]);
        gz += grad[i] * Interval(chart_.A[i][j]);
        ne += Interval(chart_.normal[i]) * Interval(chart_.A[i][2 + j]);
        nz += Interval(chart_.normal[i]) * Interval(chart_.A[i][j]);
      }
      dGde(0, j) = ge;
      dGdz(0, j) = gz;
      dGde(1, j) = ne;
      dGdz(1, j) = nz;
    }
  }

  PsiImage generic_image(const IntervalVector& z, const Interval& h) {
    // non-rigorous seeds for E at the midpoint and the corners of the z box
    std::array<double, 2> e_seed = seed_E(z[0].mid(), z[1].mid(), h.mid());
    Interval E_lo(e_seed[0]), E_hi(e_seed[1]);
    for (double cz1 : {z[0].lo(), z[0].hi()})
      for (double cz2 : {z[1].lo(), z[1].hi()}) {
        std::array<double, 2> ec = seed_E(cz1, cz2, h.mid());
        E_lo = Interval::hull(E_lo, Interval(ec[0]));
        E_hi = Interval::hull(E_hi, Interval(ec[1]));
      }
    double spread = 0.02 + 1.0 * (E_lo.diam() + E_hi.diam());
    IntervalVector E0(2);
    E0[0] = ivl::inflate(E_lo, spread);
    E0[1] = ivl::inflate(E_hi, spread);

    auto lambda_of = [&](const IntervalVector& zz, const IntervalVector& ee) {
      IntervalVector p(4);
      for (int i = 0; i < 4; ++i) {
        Interval acc(chart_.w[i]);
        acc += Interval(chart_.A[i][0]) * zz[0] + Interval(chart_.A[i][1]) * zz[1];
        acc += Interval(chart_.A[i][2]) * ee[0] + Interval(chart_.A[i][3]) * ee[1];
        p[i] = acc;
      }
      return p;
    };
    // mean-value form in z around the box midpoint; a naive evaluation over
    // the full z box loses the near-tangency of u_hat, s_hat to {Gamma = 0}
    auto Gfun = [&](const IntervalVector& ee) {
      IntervalVector zm(2);
      zm[0] = Interval(z[0].mid());
      zm[1] = Interval(z[1].mid());
      IntervalVector g(2);
      IntervalVector pm = lambda_of(zm, ee);
      g[0] = gamma_on(pm, h);
      Interval acc;
      for (int i = 0; i < 4; ++i)
        acc += Interval(chart_.normal[i]) * (pm[i] - Interval(chart_.w[i]));
      g[1] = acc;
      IntervalMatrix dGde(2, 2), dGdz(2, 2);
      gamma_jac_pieces(lambda_of(z, ee), h, dGde, dGdz);
      for (int row = 0; row < 2; ++row)
        g[row] += dGdz(row, 0) * (z[0] - zm[0]) + dGdz(row, 1) * (z[1] - zm[1]);
      return g;
    };
    auto DGfun = [&](const IntervalVector& ee) {
      IntervalMatrix dGde(2, 2), dGdz(2, 2);
      gamma_jac_pieces(lambda_of(z, ee), h, dGde, dGdz);
      return dGde;
    };

    IntervalVector e_mid(2);
    e_mid[0] = Interval(E0[0].mid());
    e_mid[1] = Interval(E0[1].mid());
    rootfind::NewtonOutcome out;
    for (int attempt = 0; attempt < 3; ++attempt) {
      out = rootfind::interval_newton(Gfun, DGfun, e_mid, E0);
      if (out.verified()) break;
      for (int i = 0; i < 2; ++i) E0[i] = ivl::inflate(E0[i], E0[i].diam() + 1e-3);
      e_mid[0] = Interval(E0[0].mid());
      e_mid[1] = Interval(E0[1].mid());
    }
    if (!out.verified())
      throw NewtonFailure("E(z) not verified: " + out.diagnostic);

    PsiImage img;
    img.base = IntervalVector(4);
    for (int i = 0; i < 4; ++i) img.base[i] = Interval(chart_.w[i]);
    img.cols = IntervalMatrix(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) img.cols(i, j) = Interval(chart_.A[i][j]);
    img.offsets = IntervalVector(4);
    img.offsets[0] = z[0];
    img.offsets[1] = z[1];
    img.offsets[2] = out.enclosure[0];
    img.offsets[3] = out.enclosure[1];
    img.hull4 = img.base + img.cols * img.offsets;
    return img;
  }

  std::array<double, 2> seed_E(double z1, double z2, double hm) {
    ad::Evaluator<double> gd(gamma_tape_);
    std::array<double, 2> e{0.0, 0.0};
    for (int it = 0; it < 12; ++it) {
      std::array<double, 4> p;
      for (int i = 0; i < 4; ++i)
        p[i] = chart_.w[i] + chart_.A[i][0] * z1 + chart_.A[i][1] * z2 +
               chart_.A[i][2] * e[0] + chart_.A[i][3] * e[1];
      std::array<double, 5> in{p[0], p[1], p[2], p[3], hm};
      std::array<double, 1> g{};
      std::array<double, 5> grad{};
      gd.eval_jac(std::span<const double>(in), std::span<double>(g), std::span<double>(grad));
      double sig = 0.0;
      for (int i = 0; i < 4; ++i) sig += chart_.normal[i] * (p[i] - chart_.w[i]);
      // 2x2 Newton on (Gamma, sigma)
      double a = 0, b = 0, c = 0, d = 0;
      for (int i = 0; i < 4; ++i) {
        a += grad[i] * chart_.A[i][2];
        b += grad[i] * chart_.A[i][3];
        c += chart_.normal[i] * chart_.A[i][2];
        d += chart_.normal[i] * chart_.A[i][3];
      }
      double det = a * d - b * c;
      double de0 = (d * g[0] - b * sig) / det;
      double de1 = (-c * g[0] + a * sig) / det;
      e[0] -= de0;
      e[1] -= de1;
      if (std::fabs(de0) + std::fabs(de1) < 1e-15) break;
    }
    return e;
  }

  MassParams m_;
  Chart chart_;
  ad::Tape gamma_tape_;
  ad::Evaluator<Interval> gamma_ev_;
  ad::Tape psi0_tape_;
  ad::Evaluator<Interval> psi0_ev_;
};

/* eta_L shear: z -> [[1,-L],[-L,1]] z / (1+L); inverse is eta_{-L}. */
inline IntervalVector eta_shear(const IntervalVector& z, double L, bool inverse = false) {
  double l = inverse ? -L : L;
  Interval f = Interval(1.0) / (Interval(1.0) + l);
  IntervalVector r(2);
  r[0] = f * (z[0] - l * z[1]);
  r[1] = f * (z[1] - l * z[0]);
  return r;
}

inline IntervalMatrix eta_matrix(double L, bool inverse = false) {
  double l = inverse ? -L : L;
  Interval f = Interval(1.0) / (Interval(1.0) + l);
  IntervalMatrix M(2, 2);
  M(0, 0) = f;
  M(0, 1) = -l * f;
  M(1, 0) = -l * f;
  M(1, 1) = f;
  return M;
}

/* ------------------------- section-to-section maps ------------------------- */

struct LocalMapResult {
  IntervalVector z;                      // image in the target chart, 2 components
  std::optional<IntervalMatrix> dz;      // 2x2 derivative enclosure
  Interval time;                         // crossing-time enclosure (flow parameter)
  IntervalVector phase_hull;             // crossing set in phase coordinates
};

/* A Poincare leg: from one chart to another along a (possibly reversed)
 * regularized flow at the energy-parameter box h. */
class PoincareLeg {
 public:
  PoincareLeg(const MassParams& m, const Chart& from, const Chart& to, const Interval& h,
              bool backward, const flow::IntegratorConfig& cfg)
      : m_(m),
        from_(m, from),
        to_(m, to),
        h_(h),
        backward_(backward),
        cfg_(cfg),
        tape_(model::make_reg_tape(m, 2, backward)) {
    sec_.normal.assign(5, 0.0);
    if (to.kind == Chart::Kind::collision) {
      sec_.normal[1] = 1.0;
      sec_.offset = 0.0;
    } else {
      for (int i = 0; i < 4; ++i) sec_.normal[i] = to.normal[i];
      double off = 0.0;
      for (int i = 0; i < 4; ++i) off += to.normal[i] * to.w[i];
      sec_.offset = off;
    }
    // transversal direction of the (possibly reversed) flow at the target base
    auto P = model::detail::reg_params<double>(m, 2);
    const auto& tw = to.kind == Chart::Kind::collision
                         ? std::array<double, 4>{0.0, 0.0, 0.0, std::sqrt(8.0 * m.mu2.mid())}
                         : to.w;
    auto f = model::formulas::field_reg<double>(P, tw[0], tw[1], tw[2], tw[3], h.mid());
    double rate = 0.0;
    for (int i = 0; i < 4; ++i) rate += sec_.normal[i] * f[i];
    if (backward) rate = -rate;
    sec_.direction = rate >= 0.0 ? +1 : -1;
  }

  const flow::SectionSpec& target_section() const { return sec_; }
  ChartOps& from_chart() { return from_; }
  ChartOps& to_chart() { return to_; }
  const ad::Tape& tape() const { return tape_; }
  const Interval& energy() const { return h_; }

  // initialize a rigorous flow on psi_from(z), h riding as the 5th variable
  void start(flow::RigorousFlow& rf, const IntervalVector& z) {
    PsiImage img = from_.chart_to_phase(z, h_);
    const std::size_t k = img.offsets.size();
    IntervalVector c5(5), r0(k + 1);
    IntervalMatrix C5(5, k + 1);
    IntervalVector base_off(k);
    for (std::size_t j = 0; j < k; ++j) {
      double mid = img.offsets[j].mid();
      base_off[j] = Interval(mid);
      r0[j] = img.offsets[j] - Interval(mid);
    }
    r0[k] = h_ - Interval(h_.mid());
    IntervalVector shift = img.cols * base_off;
    for (int i = 0; i < 4; ++i) c5[i] = img.base[i] + shift[i];
    c5[4] = Interval(h_.mid());
    for (int i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < k; ++j) C5(i, j) = img.cols(i, j);
      C5(i, k) = Interval(0.0);
    }
    for (std::size_t j = 0; j < k; ++j) C5(4, j) = Interval(0.0);
    C5(4, k) = Interval(1.0);
    flow::Doubleton d;
    d.c = c5;
    d.C = C5;
    d.r0 = r0;
    d.B = IntervalMatrix::identity(5);
    d.r = IntervalVector(5);
    rf.init(d);
  }

  LocalMapResult map(const IntervalVector& z, bool want_deriv,
                     std::vector<flow::StepRecord>* keep_records = nullptr,
                     flow::CrossingOutput* raw_out = nullptr) {
    flow::RigorousFlow rf(tape_, cfg_, want_deriv);
    start(rf, z);
    flow::CrossingOutput cross = flow::flow_to_section(rf, tape_, sec_, want_deriv);

    LocalMapResult res;
    res.time = cross.time;
    res.phase_hull = IntervalVector(4);
    for (int i = 0; i < 4; ++i) res.phase_hull[i] = cross.hull[i];
    res.z = to_.phase_to_chart_record(rf.records()[cross.bracket_record], cross.tau_local);

    if (want_deriv) {
      // D(psi2^{-1} o P o psi1) = rows(psi2^{-1}) . DP[4x4] . Dpsi1
      const IntervalMatrix& DP = *cross.deriv;  // 5x5, last row/col is the h slot
      IntervalMatrix Dpsi1 = from_.dpsi(z, h_);
      IntervalMatrix rows(2, 4);
      if (to_.chart().kind == Chart::Kind::collision) {
        Interval a = 0.5 / Interval(to_.chart().d1);
        Interval b = 0.5 / Interval(to_.chart().d2);
        rows(0, 0) = a;
        rows(0, 2) = b;
        rows(1, 0) = a;
        rows(1, 2) = -b;
      } else {
        for (int r = 0; r < 2; ++r)
          for (int i = 0; i < 4; ++i) rows(r, i) = to_.chart().Ainv(r, i);
      }
      IntervalMatrix DP4(4, 4);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) DP4(i, j) = DP(i, j);
      res.dz = rows * DP4 * Dpsi1;
    }
    if (keep_records) *keep_records = rf.records();
    if (raw_out) *raw_out = cross;
    return res;
  }

 private:
  MassParams m_;
  ChartOps from_, to_;
  Interval h_;
  bool backward_;
  flow::IntegratorConfig cfg_;
  ad::Tape tape_;
  flow::SectionSpec sec_;
};

}  // namespace reg3bp::section

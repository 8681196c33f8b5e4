#pragma once

/* -----------------------------------------------------------------
 * The planar circular restricted three-body problem, in rotating
 * coordinates and in Levi-Civita regularized coordinates at one of
 * the primaries.  Hamiltonians, vector fields, the reversing
 * symmetry S, the coordinate change gamma_i and its preimages, the
 * time rescaling and the collision residual.
 *
 * Formulas are templated over the scalar type so the same source
 * serves plain double evaluation, interval enclosures and tape
 * recording for the Taylor integrator.
 * ----------------------------------------------------------------- */

#include <array>
#include <cmath>
#include <utility>

#include "reg3bp/ad.hpp"
#include "reg3bp/interval_linalg.hpp"

namespace reg3bp::model {

using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;

struct CollisionSingularity : std::runtime_error {
  CollisionSingularity() : std::runtime_error("primary distance enclosure contains zero") {}
};
struct RegularizedCollision : std::runtime_error {
  RegularizedCollision() : std::runtime_error("(u,v) enclosure contains the collision point") {}
};
struct SecondPrimarySingularity : std::runtime_error {
  SecondPrimarySingularity()
      : std::runtime_error("distance to the unregularized primary encloses zero") {}
};

/* Mass parameters; x1 = mu2, x2 = -mu1, mu1 + mu2 = 1.  Held as intervals
 * enclosing the exact rationals. */
struct MassParams {
  Interval mu1, mu2, x1, x2;

  static MassParams from_mu1(const Interval& mu1) {
    MassParams m;
    m.mu1 = mu1;
    m.mu2 = Interval(1.0) - mu1;
    m.x1 = m.mu2;
    m.x2 = -m.mu1;
    return m;
  }
  // Theorem scope: mu = 1/82, the Moon at x1, the Earth (regularized body,
  // i = 2) at x2
  static MassParams earth_moon() { return from_mu1(Interval(1.0) / Interval(82.0)); }
};

enum class Frame { standard, regularized };

struct PhaseState {
  std::array<double, 4> q{};
  Frame frame = Frame::standard;
  int reg_primary = 2;  // meaningful in the regularized frame
};

/* ---------------- scalar-generic formulas ---------------- */

namespace formulas {

using ad::sqr;
using ivl::sqr;

template <class T>
struct StdParams {
  T mu1, mu2, x1, x2;
};
template <class T>
struct RegParams {
  T mu_i, mu_other, x_i;
  double eps_i;  // +1 for i=1, -1 for i=2
};

// H = 1/2 (px^2+py^2) + y px - x py - sum mu_i / dist_i
template <class T>
T hamiltonian_std(const StdParams<T>& P, const T& x, const T& y, const T& px, const T& py) {
  using std::sqrt;
  using ivl::sqrt;
  using ad::sqrt;
  T d1 = sqrt(sqr(x - P.x1) + sqr(y));
  T d2 = sqrt(sqr(x - P.x2) + sqr(y));
  return 0.5 * (sqr(px) + sqr(py)) + y * px - x * py - P.mu1 / d1 - P.mu2 / d2;
}

template <class T>
std::array<T, 4> field_std(const StdParams<T>& P, const T& x, const T& y, const T& px,
                           const T& py) {
  using std::sqrt;
  using ivl::sqrt;
  using ad::sqrt;
  T r1s = sqr(x - P.x1) + sqr(y);
  T r2s = sqr(x - P.x2) + sqr(y);
  T inv_d1c = 1.0 / (r1s * sqrt(r1s));
  T inv_d2c = 1.0 / (r2s * sqrt(r2s));
  T gx = P.mu1 * (x - P.x1) * inv_d1c + P.mu2 * (x - P.x2) * inv_d2c;
  T gy = P.mu1 * y * inv_d1c + P.mu2 * y * inv_d2c;
  return {px + y, py - x, py - gx, -px - gy};
}

// Gamma_{i,h} = 1/2(pu^2+pv^2) - 2 x_i (v pu + u pv) - 4 mu_i + 2(u^2+v^2) Ghat
template <class T>
T gamma_reg(const RegParams<T>& P, const T& u, const T& v, const T& pu, const T& pv,
            const T& h) {
  using std::sqrt;
  using ivl::sqrt;
  using ad::sqrt;
  T A = sqr(u), B = sqr(v);
  T D = sqr(A - B + P.eps_i) + 4.0 * A * B;
  T ghat = v * pu - u * pv - 2.0 * h - 2.0 * P.mu_other / sqrt(D);
  return 0.5 * (sqr(pu) + sqr(pv)) - 2.0 * P.x_i * (v * pu + u * pv) - 4.0 * P.mu_i +
         2.0 * (A + B) * ghat;
}

template <class T>
std::array<T, 4> field_reg(const RegParams<T>& P, const T& u, const T& v, const T& pu,
                           const T& pv, const T& h) {
  using std::sqrt;
  using ivl::sqrt;
  using ad::sqrt;
  T A = sqr(u), B = sqr(v);
  T r2 = A + B;
  T D = sqr(A - B + P.eps_i) + 4.0 * A * B;
  T pull = P.mu_other / (D * sqrt(D));  // mu_other * D^{-3/2}
  T du = pu + 2.0 * v * (r2 - P.x_i);
  T dv = pv - 2.0 * u * (r2 + P.x_i);
  T dpu = 4.0 * u * (2.0 * h - v * pu) + 2.0 * pv * (P.x_i + 3.0 * A + B) +
          8.0 * u * (1.0 + P.eps_i * (A - 3.0 * B)) * pull;
  T dpv = 4.0 * v * (2.0 * h + u * pv) + 2.0 * pu * (P.x_i - 3.0 * B - A) +
          8.0 * v * (1.0 - P.eps_i * (B - 3.0 * A)) * pull;
  return {du, dv, dpu, dpv};
}

// R(u) = 4u^2 (x2+u^2)^2 + 8 mu2 + 8 h u^2 + 8 mu1 u^2 / (1 - u^2), valid for u^2 < 1
template <class T>
T psi0_R(const T& mu1, const T& mu2, const T& x2, const T& u, const T& h) {
  T A = sqr(u);
  return 4.0 * A * sqr(x2 + A) + 8.0 * mu2 + 8.0 * h * A + 8.0 * mu1 * A / (1.0 - A);
}

// p_v(u, p_u) on the zero level of Gamma_{2,h} over the section {v = 0}:
// the larger root of the quadratic Gamma(u, 0, p_u, p_v) = 0
template <class T>
T psi0_pv(const T& mu1, const T& mu2, const T& x2, const T& u, const T& pu, const T& h) {
  using std::sqrt;
  using ivl::sqrt;
  using ad::sqrt;
  T A = sqr(u);
  return 2.0 * u * (x2 + A) + sqrt(psi0_R(mu1, mu2, x2, u, h) - sqr(pu));
}

}  // namespace formulas

/* ---------------- parameter packs per scalar type ---------------- */

namespace detail {

template <class T>
formulas::StdParams<T> std_params(const MassParams& m);
template <>
inline formulas::StdParams<Interval> std_params(const MassParams& m) {
  return {m.mu1, m.mu2, m.x1, m.x2};
}
template <>
inline formulas::StdParams<double> std_params(const MassParams& m) {
  return {m.mu1.mid(), m.mu2.mid(), m.x1.mid(), m.x2.mid()};
}

template <class T>
formulas::RegParams<T> reg_params(const MassParams& m, int i);
template <>
inline formulas::RegParams<Interval> reg_params(const MassParams& m, int i) {
  if (i == 1) return {m.mu1, m.mu2, m.x1, +1.0};
  return {m.mu2, m.mu1, m.x2, -1.0};
}
template <>
inline formulas::RegParams<double> reg_params(const MassParams& m, int i) {
  if (i == 1) return {m.mu1.mid(), m.mu2.mid(), m.x1.mid(), +1.0};
  return {m.mu2.mid(), m.mu1.mid(), m.x2.mid(), -1.0};
}

inline formulas::StdParams<ad::Var> std_params_tape(const MassParams& m, ad::Builder& b) {
  return {b.constant(m.mu1), b.constant(m.mu2), b.constant(m.x1), b.constant(m.x2)};
}
inline formulas::RegParams<ad::Var> reg_params_tape(const MassParams& m, int i,
                                                    ad::Builder& b) {
  if (i == 1) return {b.constant(m.mu1), b.constant(m.mu2), b.constant(m.x1), +1.0};
  return {b.constant(m.mu2), b.constant(m.mu1), b.constant(m.x2), -1.0};
}

}  // namespace detail

/* ---------------- public evaluators ---------------- */

// value of H; interval input yields an enclosure
inline Interval hamiltonian_std(const IntervalVector& q, const MassParams& m) {
  try {
    return formulas::hamiltonian_std(detail::std_params<Interval>(m), q[0], q[1], q[2], q[3]);
  } catch (const ivl::DivisionByZeroInterval&) {
    throw CollisionSingularity();
  }
}

inline IntervalVector vector_field_std(const IntervalVector& q, const MassParams& m) {
  try {
    auto f = formulas::field_std(detail::std_params<Interval>(m), q[0], q[1], q[2], q[3]);
    IntervalVector r(4);
    for (int i = 0; i < 4; ++i) r[i] = f[i];
    return r;
  } catch (const ivl::DivisionByZeroInterval&) {
    throw CollisionSingularity();
  }
}

inline Interval hamiltonian_reg(const IntervalVector& w, int i, const Interval& h,
                                const MassParams& m) {
  try {
    return formulas::gamma_reg(detail::reg_params<Interval>(m, i), w[0], w[1], w[2], w[3], h);
  } catch (const ivl::DivisionByZeroInterval&) {
    throw SecondPrimarySingularity();
  }
}

inline IntervalVector vector_field_reg(const IntervalVector& w, int i, const Interval& h,
                                       const MassParams& m) {
  try {
    auto f =
        formulas::field_reg(detail::reg_params<Interval>(m, i), w[0], w[1], w[2], w[3], h);
    IntervalVector r(4);
    for (int k = 0; k < 4; ++k) r[k] = f[k];
    return r;
  } catch (const ivl::DivisionByZeroInterval&) {
    throw SecondPrimarySingularity();
  }
}

/* S(q1,q2,q3,q4) = (q1,-q2,-q3,q4); an involution and a time reversal of both
 * flows.  Sign flips are exact. */
template <class T>
std::array<T, 4> symmetry_S(const std::array<T, 4>& q) {
  return {q[0], -q[1], -q[2], q[3]};
}
inline IntervalVector symmetry_S(const IntervalVector& q) {
  IntervalVector r(4);
  r[0] = q[0];
  r[1] = -q[1];
  r[2] = -q[2];
  r[3] = q[3];
  return r;
}

// J (a,b,c,d) = (c,d,-a,-b)
template <class V>
V symplectic_J(const V& g) {
  V r = g;
  r[0] = g[2];
  r[1] = g[3];
  r[2] = -g[0];
  r[3] = -g[1];
  return r;
}

/* gamma_i: regularized -> original coordinates. */
template <class T>
std::array<T, 4> lc_forward_t(const std::array<T, 4>& w, const T& x_i) {
  using ad::sqr;
  using ivl::sqr;
  const T &u = w[0], &v = w[1], &pu = w[2], &pv = w[3];
  T r2 = sqr(u) + sqr(v);
  T x = sqr(u) - sqr(v) + x_i;
  T y = 2.0 * u * v;
  T px = 0.5 * (u * pu - v * pv) / r2;
  T py = 0.5 * (v * pu + u * pv) / r2;
  return {x, y, px, py};
}

inline IntervalVector lc_forward(const IntervalVector& w, int i, const MassParams& m) {
  std::array<Interval, 4> a{w[0], w[1], w[2], w[3]};
  try {
    auto q = lc_forward_t<Interval>(a, i == 1 ? m.x1 : m.x2);
    IntervalVector r(4);
    for (int k = 0; k < 4; ++k) r[k] = q[k];
    return r;
  } catch (const ivl::DivisionByZeroInterval&) {
    throw RegularizedCollision();
  }
}

inline std::array<double, 4> lc_forward(const std::array<double, 4>& w, int i,
                                        const MassParams& m) {
  double r2 = w[0] * w[0] + w[1] * w[1];
  if (r2 == 0.0) throw RegularizedCollision();
  return lc_forward_t<double>(w, (i == 1 ? m.x1 : m.x2).mid());
}

/* The two preimages of a standard-frame point under gamma_i; antipodal in
 * (u,v). */
inline std::pair<std::array<double, 4>, std::array<double, 4>> lc_preimages(
    const std::array<double, 4>& q, int i, const MassParams& m) {
  double xi = (i == 1 ? m.x1 : m.x2).mid();
  double dx = q[0] - xi, y = q[1];
  double rho = std::sqrt(dx * dx + y * y);
  double u, v;
  if (dx >= 0.0) {
    u = std::sqrt(0.5 * (rho + dx));
    v = u == 0.0 ? 0.0 : y / (2.0 * u);
  } else {
    v = std::copysign(std::sqrt(0.5 * (rho - dx)), y == 0.0 ? 1.0 : y);
    u = y / (2.0 * v);
  }
  double px = q[2], py = q[3];
  std::array<double, 4> w1{u, v, 2.0 * (u * px + v * py), 2.0 * (-v * px + u * py)};
  std::array<double, 4> w2{-w1[0], -w1[1], -w1[2], -w1[3]};
  return {w1, w2};
}

// dt/ds = 4 (u^2 + v^2)
inline Interval time_rescale_rate(const IntervalVector& w) {
  return 4.0 * (ivl::sqr(w[0]) + ivl::sqr(w[1]));
}
inline double time_rescale_rate(const std::array<double, 4>& w) {
  return 4.0 * (w[0] * w[0] + w[1] * w[1]);
}

/* C(u,v,pu,pv) = (u, v, pu^2 + pv^2 - 8 mu_2): zero exactly on the collision
 * circle of the regularized (Earth) primary. */
inline IntervalVector collision_residual(const IntervalVector& w, const MassParams& m) {
  IntervalVector c(3);
  c[0] = w[0];
  c[1] = w[1];
  c[2] = ivl::sqr(w[2]) + ivl::sqr(w[3]) - 8.0 * m.mu2;
  return c;
}

/* ---------------- tape builders ---------------- */

// 5 inputs (u, v, pu, pv, h) -> 5 outputs (field, 0); h rides along as a
// constant-in-time parameter so variational duals carry d/dh
inline ad::Tape make_reg_tape(const MassParams& m, int i, bool backward = false) {
  ad::Builder b;
  ad::Var u = b.input(), v = b.input(), pu = b.input(), pv = b.input(), h = b.input();
  auto P = detail::reg_params_tape(m, i, b);
  auto f = formulas::field_reg<ad::Var>(P, u, v, pu, pv, h);
  for (auto& c : f) b.output(backward ? -c : c);
  b.output(b.constant(0.0));
  return b.take();
}

// 4 inputs (x, y, px, py) -> 4 outputs
inline ad::Tape make_std_tape(const MassParams& m, bool backward = false) {
  ad::Builder b;
  ad::Var x = b.input(), y = b.input(), px = b.input(), py = b.input();
  auto P = detail::std_params_tape(m, b);
  auto f = formulas::field_std<ad::Var>(P, x, y, px, py);
  for (auto& c : f) b.output(backward ? -c : c);
  return b.take();
}

// 6 inputs (u, v, pu, pv, h, t) -> 6 outputs (field, 0, dt/ds); recovers the
// physical time along the regularized flow
inline ad::Tape make_reg_time_tape(const MassParams& m, int i) {
  ad::Builder b;
  ad::Var u = b.input(), v = b.input(), pu = b.input(), pv = b.input(), h = b.input();
  (void)b.input();  // t
  auto P = detail::reg_params_tape(m, i, b);
  auto f = formulas::field_reg<ad::Var>(P, u, v, pu, pv, h);
  for (auto& c : f) b.output(c);
  b.output(b.constant(0.0));
  b.output(4.0 * (ad::sqr(u) + ad::sqr(v)));
  return b.take();
}

// 5 inputs (u, v, pu, pv, h) -> 1 output Gamma_{i,h}
inline ad::Tape make_gamma_tape(const MassParams& m, int i) {
  ad::Builder b;
  ad::Var u = b.input(), v = b.input(), pu = b.input(), pv = b.input(), h = b.input();
  auto P = detail::reg_params_tape(m, i, b);
  b.output(formulas::gamma_reg<ad::Var>(P, u, v, pu, pv, h));
  return b.take();
}

/* Startup consistency check of the mass convention: the collision-circle
 * momentum sqrt(8 mu2) must match the published 2.81112771399 within 1e-10. */
inline void check_mu_convention(const MassParams& m) {
  Interval pv0 = ivl::sqrt(8.0 * m.mu2);
  if (!(std::fabs(pv0.mid() - 2.81112771399) < 1e-10))
    throw std::runtime_error("mass convention check failed: sqrt(8 mu2) = " +
                             std::to_string(pv0.mid()));
}

}  // namespace reg3bp::model

#pragma once

/* -----------------------------------------------------------------
 * h-sets on sections, covering and back-covering verification,
 * symmetry-derived relations, the hyperbolic cone estimates that
 * generate arbitrarily long collision-approach families, and the
 * collision disc.
 *
 * An h-set is carried as an affine homeomorphism c_N of the unit
 * square (interval entries; thin for chosen sets).  A set on a
 * section points to a chart and may carry an interval anchor -- the
 * enclosure of a true-orbit crossing that centers the set when the
 * paper's construction assumes an exact fixed point.
 *
 * The three covering conditions are the interval checks
 *    pi_2(f_c(N_c)) in (-1,1),
 *    pi_1(f_c(left edge)) < -1,   pi_1(f_c(right edge)) > +1,
 * verified on sub-boxes with dyadic refinement on failure.
 * ----------------------------------------------------------------- */

#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "reg3bp/section.hpp"

namespace reg3bp::cover {

using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;

struct ConditionFailed : std::runtime_error {
  explicit ConditionFailed(const std::string& w) : std::runtime_error(w) {}
};
struct MapFailure : std::runtime_error {
  explicit MapFailure(const std::string& w) : std::runtime_error(w) {}
};
struct HypothesisUnverified : std::runtime_error {
  explicit HypothesisUnverified(const std::string& w) : std::runtime_error(w) {}
};
struct BoundsViolated : std::runtime_error {
  explicit BoundsViolated(const std::string& w) : std::runtime_error(w) {}
};
struct MissingPremise : std::runtime_error {
  explicit MissingPremise(const std::string& w) : std::runtime_error("missing premise: " + w) {}
};

/* Affine homeomorphism of the plane, z -> M z + b. */
struct AffineMap2 {
  Interval M[2][2];
  Interval b[2];

  static AffineMap2 identity() {
    AffineMap2 a;
    a.M[0][0] = Interval(1.0);
    a.M[1][1] = Interval(1.0);
    return a;
  }
  // [-1,1]^2 onto [x0,x1] x [y0,y1]
  static AffineMap2 rect(double x0, double x1, double y0, double y1) {
    AffineMap2 a;
    a.M[0][0] = Interval(0.5) * (Interval(x1) - x0);
    a.M[1][1] = Interval(0.5) * (Interval(y1) - y0);
    a.b[0] = Interval(0.5) * (Interval(x1) + x0);
    a.b[1] = Interval(0.5) * (Interval(y1) + y0);
    return a;
  }

  IntervalVector apply(const IntervalVector& z) const {
    IntervalVector r(2);
    r[0] = M[0][0] * z[0] + M[0][1] * z[1] + b[0];
    r[1] = M[1][0] * z[0] + M[1][1] * z[1] + b[1];
    return r;
  }

  // enclosure of the inverse image of a box
  IntervalVector apply_inverse(const IntervalVector& y) const {
    Interval det = M[0][0] * M[1][1] - M[0][1] * M[1][0];
    IntervalVector r(2);
    Interval d0 = y[0] - b[0], d1 = y[1] - b[1];
    r[0] = (M[1][1] * d0 - M[0][1] * d1) / det;
    r[1] = (M[0][0] * d1 - M[1][0] * d0) / det;
    return r;
  }

  // c o j: swap the columns (transposed h-set homeomorphism)
  AffineMap2 post_j() const {
    AffineMap2 a = *this;
    std::swap(a.M[0][0], a.M[0][1]);
    std::swap(a.M[1][0], a.M[1][1]);
    return a;
  }
  // j o c: swap the rows
  AffineMap2 pre_j() const {
    AffineMap2 a = *this;
    std::swap(a.M[0][0], a.M[1][0]);
    std::swap(a.M[0][1], a.M[1][1]);
    std::swap(a.b[0], a.b[1]);
    return a;
  }
  // eta_L o c (left-compose with the shear)
  AffineMap2 pre_shear(double L) const {
    IntervalMatrix e = section::eta_matrix(L);
    AffineMap2 a;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) a.M[i][j] = e(i, 0) * M[0][j] + e(i, 1) * M[1][j];
      a.b[i] = e(i, 0) * b[0] + e(i, 1) * b[1];
    }
    return a;
  }

  bool same_bits(const AffineMap2& o) const {
    for (int i = 0; i < 2; ++i) {
      if (!(b[i] == o.b[i])) return false;
      for (int j = 0; j < 2; ++j)
        if (!(M[i][j] == o.M[i][j])) return false;
    }
    return true;
  }
};

struct HSet {
  AffineMap2 c = AffineMap2::identity();

  HSet transposed() const { return HSet{c.post_j()}; }
};

/* An h-set on a section.  mirrored marks sets living on S Sigma with the
 * chart S psi; where a concrete mirror chart exists the reference is
 * canonicalized back to it. */
struct SetRef {
  int chart = -1;
  bool mirrored = false;
  HSet set;
  IntervalVector anchor = IntervalVector(2);  // interval shift in chart coordinates
  std::string name;

  SetRef transposed() const {
    SetRef r = *this;
    r.set = set.transposed();
    r.name = name + "^T";
    return r;
  }
};

// S-image of an h-set on a section: (N^T, S psi), canonicalized onto the
// mirror chart when one exists (mirror_index): c -> j o c o j, anchor swapped
inline SetRef s_image(const SetRef& r, const std::function<int(int)>& mirror_index) {
  SetRef out = r;
  out.mirrored = !r.mirrored;
  out.set.c = r.set.c.post_j();
  out.name = "S(" + r.name + ")";
  int mk = mirror_index(r.chart);
  if (out.mirrored && mk >= 0) {
    out.chart = mk;
    out.mirrored = false;
    out.set.c = out.set.c.pre_j();
    IntervalVector a(2);
    a[0] = r.anchor[1];
    a[1] = r.anchor[0];
    out.anchor = a;
  }
  return out;
}

/* ------------------------- covering certificates ------------------------- */

enum class Direction { forward, back };

struct CoveringCertificate {
  std::string id;
  std::string from, to;  // set names
  Direction direction = Direction::forward;
  std::string leg;  // which Poincare leg realizes the map
  bool symmetry_derived = false;
  std::string derived_from;
  bool valid = false;
  int grid = 0, edge_grid = 0, max_depth_used = 0;
  int subbox_count = 0;
  double margin_contraction = 0;  // 1 - max |pi_2|
  double margin_exit = 0;         // min |pi_1| - 1 over the exit edges
  double max_image_width = 0;
  double wall_seconds = 0;
  std::uint64_t config_hash = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["id"] = id;
    j["from"] = from;
    j["to"] = to;
    j["direction"] = direction == Direction::forward ? "forward" : "back";
    j["leg"] = leg;
    j["symmetry_derived"] = symmetry_derived;
    if (symmetry_derived) j["derived_from"] = derived_from;
    j["valid"] = valid;
    j["grid"] = grid;
    j["edge_grid"] = edge_grid;
    j["max_depth_used"] = max_depth_used;
    j["subbox_count"] = subbox_count;
    j["margin_contraction"] = margin_contraction;
    j["margin_exit"] = margin_exit;
    j["max_image_width"] = max_image_width;
    j["wall_seconds"] = wall_seconds;
    j["config_hash"] = config_hash;
    return j;
  }
};

struct SubdivisionSpec {
  int grid = 1;        // interior grid per axis
  int edge_grid = 1;   // 1-d subdivision of each exit edge
  int max_depth = 11;  // bisection refinement depth on failure
  int eval_budget = 1200;  // map evaluations per relation before giving up
};

/* The covering checker.  map_fn takes a box in the source chart coordinates
 * and returns the image in the target chart coordinates. */
class CoveringChecker {
 public:
  using MapFn = std::function<IntervalVector(const IntervalVector&)>;

  CoveringChecker(MapFn f, const SetRef& N, const SetRef& M, const SubdivisionSpec& sub)
      : f_(std::move(f)), N_(N), M_(M), sub_(sub) {}

  CoveringCertificate run(const std::string& id, const std::string& leg) {
    CoveringCertificate cert;
    cert.id = id;
    cert.leg = leg;
    cert.from = N_.name;
    cert.to = M_.name;
    cert.grid = sub_.grid;
    cert.edge_grid = sub_.edge_grid;
    cert.margin_contraction = 1.0;
    cert.margin_exit = std::numeric_limits<double>::infinity();

    // interior: contraction
    const int g = sub_.grid;
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j) {
        IntervalVector zc(2);
        zc[0] = Interval::unchecked(-1.0 + 2.0 * i / g, -1.0 + 2.0 * (i + 1) / g);
        zc[1] = Interval::unchecked(-1.0 + 2.0 * j / g, -1.0 + 2.0 * (j + 1) / g);
        check_contraction(zc, 0, cert);
      }
    // edges: expansion
    for (int side = 0; side < 2; ++side) {
      double x = side == 0 ? -1.0 : 1.0;
      for (int j = 0; j < sub_.edge_grid; ++j) {
        IntervalVector zc(2);
        zc[0] = Interval(x);
        zc[1] = Interval::unchecked(-1.0 + 2.0 * j / sub_.edge_grid,
                                    -1.0 + 2.0 * (j + 1) / sub_.edge_grid);
        check_edge(zc, side == 0, 0, cert);
      }
    }
    cert.valid = true;
    return cert;
  }

 private:
  IntervalVector f_c(const IntervalVector& zc) {
    IntervalVector zin = N_.set.c.apply(zc);
    zin[0] += N_.anchor[0];
    zin[1] += N_.anchor[1];
    IntervalVector zi = f_(zin);
    zi[0] -= M_.anchor[0];
    zi[1] -= M_.anchor[1];
    return M_.set.c.apply_inverse(zi);
  }

  void check_contraction(const IntervalVector& zc, int depth, CoveringCertificate& cert) {
    if (++cert.subbox_count > sub_.eval_budget)
      throw ConditionFailed("evaluation budget exhausted while refining the contraction");
    cert.max_depth_used = std::max(cert.max_depth_used, depth);
    IntervalVector y = f_c(zc);
    cert.max_image_width = std::max(cert.max_image_width, y.max_diam());
    if (y[1].lo() > -1.0 && y[1].hi() < 1.0) {
      cert.margin_contraction = std::min(cert.margin_contraction,
                                         std::min(1.0 - y[1].hi(), y[1].lo() + 1.0));
      return;
    }
    if (depth >= sub_.max_depth) {
      std::ostringstream os;
      os << "contraction condition failed on [" << zc[0] << "] x [" << zc[1]
         << "], image pi2 = " << y[1];
      throw ConditionFailed(os.str());
    }
    // bisect one axis per level, the exit direction first: its stretch
    // dominates the image enclosure, so this converges with far fewer maps
    // than quad splitting
    int axis = (zc[0].diam() >= zc[1].diam()) ? 0 : 1;
    double mid = zc[axis].mid();
    for (int half = 0; half < 2; ++half) {
      IntervalVector part = zc;
      part[axis] = half ? Interval::unchecked(mid, zc[axis].hi())
                        : Interval::unchecked(zc[axis].lo(), mid);
      check_contraction(part, depth + 1, cert);
    }
  }

  void check_edge(const IntervalVector& zc, bool left, int depth, CoveringCertificate& cert) {
    if (++cert.subbox_count > sub_.eval_budget)
      throw ConditionFailed("evaluation budget exhausted while refining an exit edge");
    cert.max_depth_used = std::max(cert.max_depth_used, depth);
    IntervalVector y = f_c(zc);
    if (left ? (y[0].hi() < -1.0) : (y[0].lo() > 1.0)) {
      cert.margin_exit =
          std::min(cert.margin_exit, left ? (-1.0 - y[0].hi()) : (y[0].lo() - 1.0));
      return;
    }
    if (depth >= sub_.max_depth) {
      std::ostringstream os;
      os << (left ? "left" : "right") << " expansion condition failed on segment ["
         << zc[1] << "], image pi1 = " << y[0];
      throw ConditionFailed(os.str());
    }
    double m = zc[1].mid();
    IntervalVector a(2), b(2);
    a[0] = zc[0];
    b[0] = zc[0];
    a[1] = Interval::unchecked(zc[1].lo(), m);
    b[1] = Interval::unchecked(m, zc[1].hi());
    check_edge(a, left, depth + 1, cert);
    check_edge(b, left, depth + 1, cert);
  }

  MapFn f_;
  SetRef N_, M_;
  SubdivisionSpec sub_;
};

inline CoveringCertificate check_covering(CoveringChecker::MapFn f, const SetRef& N,
                                          const SetRef& M, const SubdivisionSpec& sub,
                                          const std::string& id, const std::string& leg) {
  CoveringChecker ck(std::move(f), N, M, sub);
  CoveringCertificate cert = ck.run(id, leg);
  cert.direction = Direction::forward;
  return cert;
}

/* N <== M: verified as M^T ==> N^T under the reversed-leg map. */
inline CoveringCertificate check_backcovering(CoveringChecker::MapFn reversed_leg,
                                              const SetRef& N, const SetRef& M,
                                              const SubdivisionSpec& sub, const std::string& id,
                                              const std::string& leg) {
  CoveringChecker ck(std::move(reversed_leg), M.transposed(), N.transposed(), sub);
  CoveringCertificate cert = ck.run(id, leg);
  cert.direction = Direction::back;
  cert.from = N.name;
  cert.to = M.name;
  return cert;
}

/* Lemma-level symmetry derivation: forward N=>M yields back S M <== S N and
 * conversely, with no integration.  The caller supplies the mirror-chart
 * lookup; self-symmetry substitutions are a separate renaming step. */
inline CoveringCertificate derive_symmetric(const CoveringCertificate& cert, const SetRef& N,
                                            const SetRef& M,
                                            const std::function<int(int)>& mirror_index,
                                            SetRef& out_from, SetRef& out_to) {
  if (!cert.valid) throw HypothesisUnverified("source certificate invalid: " + cert.id);
  CoveringCertificate d = cert;
  d.symmetry_derived = true;
  d.derived_from = cert.id;
  d.wall_seconds = 0;
  out_from = s_image(M, mirror_index);
  out_to = s_image(N, mirror_index);
  d.from = out_from.name;
  d.to = out_to.name;
  d.direction = cert.direction == Direction::forward ? Direction::back : Direction::forward;
  d.id = "S(" + cert.id + ")";
  return d;
}

/* ------------------------- self-S-symmetry ------------------------- */

struct SelfSymmetryCertificate {
  std::string set;
  bool is_self_symmetric = false;
  std::string reason;
};

/* (N, psi) self S-symmetric iff S o psi o c_{N^T} = psi o c_N.  Established
 * structurally: on the collision chart whenever c_N = (alpha,alpha) + beta
 * eta_L (p_v is even in p_u); on a generic chart when the dataset carries the
 * exact S-fixed pattern and c_N commutes with j. */
inline SelfSymmetryCertificate check_self_symmetric(const SetRef& N,
                                                    const section::Chart& chart) {
  SelfSymmetryCertificate out;
  out.set = N.name;
  auto j_commutes = [&]() {
    // c o j == j o c, i.e. M = [[p,q],[q,p]] and b1 == b2 (bitwise)
    const AffineMap2& c = N.set.c;
    return c.M[0][0] == c.M[1][1] && c.M[0][1] == c.M[1][0] && c.b[0] == c.b[1] &&
           N.anchor[0] == N.anchor[1];
  };
  if (N.mirrored) {
    out.reason = "mirrored bookkeeping set";
    return out;
  }
  if (chart.kind == section::Chart::Kind::collision) {
    if (j_commutes()) {
      out.is_self_symmetric = true;
      out.reason = "collision chart: p_v even in p_u and c_N commutes with j";
    } else {
      out.reason = "c_N does not commute with j";
    }
    return out;
  }
  // generic chart: requires the exact S-fixed data pattern
  bool fixed_w = chart.w[1] == 0.0 && chart.w[2] == 0.0;
  auto Su = model::symmetry_S(chart.u_hat);
  bool mirrored_dirs = true;
  for (int i = 0; i < 4; ++i) mirrored_dirs = mirrored_dirs && chart.s_hat[i] == Su[i];
  bool n_odd = chart.normal[0] == 0.0 && chart.normal[3] == 0.0;
  bool g_even = chart.A[1][3] == 0.0 && chart.A[2][3] == 0.0;
  if (fixed_w && mirrored_dirs && n_odd && g_even && j_commutes()) {
    out.is_self_symmetric = true;
    out.reason = "S-fixed base point, s_hat = S u_hat, S-odd normal, S-even energy column";
  } else {
    out.reason = "chart data does not carry the exact S-fixed pattern";
  }
  return out;
}

/* ------------------------- cone bounds ------------------------- */

struct ConeBounds {
  double alpha = 0, beta = 0, rho = 0, c = 0;  // verified bounds for f = eta^-1 g eta
  bool pass = false;
  double margin = 0;  // min slack against the checked windows
  std::string detail;
};

/* Hull of D f = eta_L^{-1} Dg eta_L over the unit square, checked against the
 * published windows:
 *   df1/dz1 > alpha, df1/dz2 in (-c, 0), df2/dz1 in (0, c), df2/dz2 in
 *   (beta, rho), alpha > 2c + rho, c + rho < 1.
 * dg_fn returns a 2x2 derivative enclosure of g over a box in g-coordinates.
 */
inline ConeBounds check_cone_bounds(
    const std::function<IntervalMatrix(const IntervalVector&)>& dg_fn,
    const IntervalVector& anchor, double L, double alpha, double beta, double rho, double c,
    int grid = 2) {
  IntervalMatrix etaL = section::eta_matrix(L);
  IntervalMatrix etaInv = section::eta_matrix(L, true);

  Interval h11, h12, h21, h22;
  bool first = true;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      IntervalVector zc(2);
      zc[0] = Interval::unchecked(-1.0 + 2.0 * i / grid, -1.0 + 2.0 * (i + 1) / grid);
      zc[1] = Interval::unchecked(-1.0 + 2.0 * j / grid, -1.0 + 2.0 * (j + 1) / grid);
      // domain of g: eta_L(N_c sub-box) + anchor
      IntervalVector zg = section::eta_shear(zc, L);
      zg[0] += anchor[0];
      zg[1] += anchor[1];
      IntervalMatrix Dg = dg_fn(zg);
      IntervalMatrix Df = etaInv * Dg * etaL;
      if (first) {
        h11 = Df(0, 0);
        h12 = Df(0, 1);
        h21 = Df(1, 0);
        h22 = Df(1, 1);
        first = false;
      } else {
        h11 = Interval::hull(h11, Df(0, 0));
        h12 = Interval::hull(h12, Df(0, 1));
        h21 = Interval::hull(h21, Df(1, 0));
        h22 = Interval::hull(h22, Df(1, 1));
      }
    }

  ConeBounds out;
  std::ostringstream det;
  det << "df1/dz1=" << h11 << " df1/dz2=" << h12 << " df2/dz1=" << h21 << " df2/dz2=" << h22;
  out.detail = det.str();
  out.alpha = alpha;
  out.beta = beta;
  out.rho = rho;
  out.c = c;
  double m = std::numeric_limits<double>::infinity();
  auto need = [&](bool cond, double slack, const char* what) {
    if (!cond) throw BoundsViolated(std::string(what) + " [" + out.detail + "]");
    m = std::min(m, slack);
  };
  need(h11.lo() > alpha, h11.lo() - alpha, "df1/dz1 > alpha fails");
  need(h12.lo() > -c && h12.hi() < 0.0, std::min(h12.lo() + c, -h12.hi()),
       "df1/dz2 in (-c,0) fails");
  need(h21.lo() > 0.0 && h21.hi() < c, std::min(h21.lo(), c - h21.hi()),
       "df2/dz1 in (0,c) fails");
  need(h22.lo() > beta && h22.hi() < rho, std::min(h22.lo() - beta, rho - h22.hi()),
       "df2/dz2 in (beta,rho) fails");
  need(alpha > 2.0 * c + rho, alpha - 2.0 * c - rho, "alpha > 2c + rho fails");
  need(c + rho < 1.0, 1.0 - c - rho, "c + rho < 1 fails");
  out.margin = m;
  out.pass = true;
  return out;
}

/* Measured variant: returns bounds extracted from the derivative hull itself
 * (alpha = inf df1/dz1 etc.), checking only the sign structure and the two
 * inequalities. */
inline ConeBounds measure_cone_bounds(
    const std::function<IntervalMatrix(const IntervalVector&)>& dg_fn,
    const IntervalVector& anchor, double L, int grid = 2) {
  IntervalMatrix etaL = section::eta_matrix(L);
  IntervalMatrix etaInv = section::eta_matrix(L, true);
  Interval h11, h12, h21, h22;
  bool first = true;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      IntervalVector zc(2);
      zc[0] = Interval::unchecked(-1.0 + 2.0 * i / grid, -1.0 + 2.0 * (i + 1) / grid);
      zc[1] = Interval::unchecked(-1.0 + 2.0 * j / grid, -1.0 + 2.0 * (j + 1) / grid);
      IntervalVector zg = section::eta_shear(zc, L);
      zg[0] += anchor[0];
      zg[1] += anchor[1];
      IntervalMatrix Df = etaInv * dg_fn(zg) * etaL;
      if (first) {
        h11 = Df(0, 0);
        h12 = Df(0, 1);
        h21 = Df(1, 0);
        h22 = Df(1, 1);
        first = false;
      } else {
        h11 = Interval::hull(h11, Df(0, 0));
        h12 = Interval::hull(h12, Df(0, 1));
        h21 = Interval::hull(h21, Df(1, 0));
        h22 = Interval::hull(h22, Df(1, 1));
      }
    }
  ConeBounds out;
  out.alpha = h11.lo();
  out.beta = h22.lo();
  out.rho = h22.hi();
  out.c = std::max({-h12.lo(), h21.hi(), 1e-12});
  std::ostringstream det;
  det << "df1/dz1=" << h11 << " df1/dz2=" << h12 << " df2/dz1=" << h21 << " df2/dz2=" << h22;
  out.detail = det.str();
  if (!(h12.hi() < 0.0 && h21.lo() > 0.0))
    throw BoundsViolated("off-diagonal signs wrong [" + out.detail + "]");
  if (!(out.alpha > 2.0 * out.c + out.rho))
    throw BoundsViolated("alpha > 2c + rho fails for measured bounds");
  if (!(out.c + out.rho < 1.0)) throw BoundsViolated("c + rho < 1 fails for measured bounds");
  out.margin = std::min(out.alpha - 2.0 * out.c - out.rho, 1.0 - out.c - out.rho);
  out.pass = true;
  return out;
}

/* ------------------------- approach family ------------------------- */

/* R_{k+1} = eta_L R_{beta^k a, (c+rho)^k b}, Q_{k+1} likewise; coverings
 * R_k => R_{k+1}, R_k => Q_{k+1} hold for every k by the cone estimates, no
 * integration needed. */
struct ApproachSets {
  int k;          // 1-based
  HSet R, Q;      // in the g-map coordinates (to be anchored on the section)
  double a_k, b_k;
};

inline std::vector<ApproachSets> approach_family(double a, double b, double L, double beta,
                                                 double c_plus_rho, int k_max) {
  if (!(0.0 < a && a < b && b < 1.0))
    throw HypothesisUnverified("approach family requires 0 < a < b < 1");
  std::vector<ApproachSets> out;
  double ak = a, bk = b;
  for (int k = 1; k <= k_max; ++k) {
    ApproachSets s;
    s.k = k;
    s.a_k = ak;
    s.b_k = bk;
    s.R.c = AffineMap2::rect(0.0, bk, ak, bk).pre_shear(L);
    s.Q.c = AffineMap2::rect(ak, bk, ak, bk).pre_shear(L);
    out.push_back(s);
    ak *= beta;
    bk *= c_plus_rho;
  }
  return out;
}

/* ------------------------- collision disc ------------------------- */

struct DiscCertificate {
  bool is_horizontal = false;
  bool is_vertical = false;
  bool residual_zero = false;
  double residual_width = 0;
  std::string detail;
};

/* The segment {z1 + z2 = 0} in N_0 on the collision chart is both a
 * horizontal and a vertical disc (explicit linear homotopies), and its phase
 * realization carries zero collision residual: u = d1 (t - t) = 0 exactly and
 * p_v = sqrt(8 mu2 - p_u^2) puts the point on the collision circle. */
inline DiscCertificate collision_disc(const SetRef& N0, const section::Chart& chart,
                                      const model::MassParams& m, const Interval& h) {
  if (chart.kind != section::Chart::Kind::collision)
    throw HypothesisUnverified("collision disc requires the psi_0 chart");
  if (!N0.set.c.same_bits(AffineMap2::identity()))
    throw HypothesisUnverified("collision disc requires the standard square");
  DiscCertificate out;
  // endpoints (-1,1) and (1,-1) lie on the exit edges N^l, N^r; the homotopy
  // h(s, t) = (t, -(1-s) t) stays inside N_c and pins the endpoints to the
  // exit edges, so the segment is a horizontal disc; transposing gives the
  // vertical one
  out.is_horizontal = true;
  out.is_vertical = true;

  // residual: param t in [-1,1], u = 0 exactly, p_u = 2 d2 t, p_v = sqrt(R(0)-pu^2)
  double wmax = 0;
  bool all_zero = true;
  const int parts = 8;
  for (int i = 0; i < parts; ++i) {
    Interval t = Interval::unchecked(-1.0 + 2.0 * i / parts, -1.0 + 2.0 * (i + 1) / parts);
    Interval pu = 2.0 * Interval(chart.d2) * t;
    Interval R0 = 8.0 * m.mu2;  // R(0) with the 8 h u^2 and mu1 terms vanishing at u = 0
    Interval pv = ivl::sqrt(R0 - ivl::sqr(pu));
    Interval c3 = ivl::sqr(pu) + ivl::sqr(pv) - 8.0 * m.mu2;
    if (!c3.contains_zero()) all_zero = false;
    wmax = std::max(wmax, c3.diam());
  }
  (void)h;
  out.residual_zero = all_zero;
  out.residual_width = wmax;
  out.detail = "collision line z1+z2=0; residual width " + std::to_string(wmax);
  return out;
}

}  // namespace reg3bp::cover

#pragma once

/* -----------------------------------------------------------------
 * Proof scenarios over the chart dataset:
 *
 *   find_h0            interval Newton on the 5-dimensional shooting
 *                      map for the ejection/collision orbit energy,
 *   verify_sequences   the covering-relation sequences (integrated
 *                      legs plus the symmetry-derived mirrors),
 *   verify_avoidance   collision exclusion along every integrated
 *                      leg plus the departure argument at the
 *                      collision section and the chart-level check,
 *   verify_approach    cone bounds for the four collision-loop maps,
 *                      the glued back-covering and the arbitrarily
 *                      deep approach family,
 *   certify_word       symbolic-word conclusions as inference over
 *                      the verified certificates,
 *   trace_orbit        CSV traces for plotting.
 *
 * Results aggregate into a ProofReport (JSON).
 * ----------------------------------------------------------------- */

#include <chrono>
#include <set>

#include "reg3bp/cover.hpp"
#include "reg3bp/dataset.hpp"

namespace reg3bp::prove {

using cover::CoveringCertificate;
using cover::SetRef;
using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;

struct EnclosureTooWide : std::runtime_error {
  explicit EnclosureTooWide(const std::string& w) : std::runtime_error(w) {}
};
struct AvoidanceFailed : std::runtime_error {
  explicit AvoidanceFailed(const std::string& w) : std::runtime_error(w) {}
};

struct ProveConfig {
  flow::IntegratorConfig integ;
  cover::SubdivisionSpec sub;
  double h0_width_budget = 1e-9;
  int approach_kmax = 8;
  int tube_refine_depth = 14;

  std::uint64_t hash() const {
    auto mix = [](std::uint64_t h, std::uint64_t v) {
      h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      return h;
    };
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto bits = [](double x) {
      std::uint64_t b;
      std::memcpy(&b, &x, 8);
      return b;
    };
    h = mix(h, std::uint64_t(integ.order));
    h = mix(h, bits(integ.tol));
    h = mix(h, bits(integ.init_step));
    h = mix(h, bits(integ.max_step));
    h = mix(h, std::uint64_t(sub.grid));
    h = mix(h, std::uint64_t(sub.edge_grid));
    h = mix(h, std::uint64_t(sub.max_depth));
    h = mix(h, std::uint64_t(approach_kmax));
    return h;
  }
};

namespace timing {
inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace timing

/* ---------------------------- find_h0 ---------------------------- */

struct FindH0Result {
  Interval h0;
  IntervalVector w1 = IntervalVector(4);
  Interval tau;
  double width = 0;
  int iterations = 0;
  bool in_published_interval = false;
  double wall = 0;
  std::string note;
};

/* Interval Newton on Psi(h, w) = (Phi_{s1}(w0; h) - w, pu(P^h(w))).
 * A verified zero gives the energy h0 and w1 = Phi_{s1}(w0); the crossing it
 * defines has v = 0 (section) and p_u = 0 (the last component), hence is
 * S-fixed, which closes the orbit through the collision point w0. */
inline FindH0Result find_h0(const MassParams& m, double s1, const ProveConfig& pc) {
  auto t0 = std::chrono::steady_clock::now();
  flow::IntegratorConfig cfg = pc.integ;
  cfg.tol = std::min(cfg.tol, 1e-16);

  ad::Tape tape = model::make_reg_tape(m, 2);
  Interval pv0 = ivl::sqrt(8.0 * m.mu2);
  flow::SectionSpec sv = flow::SectionSpec::coordinate(5, 1, 0.0, -1);

  ShootResult guess = shoot_h0(m, s1, cfg);

  auto run_leg1 = [&](const Interval& h, bool deriv) {
    IntervalVector X0(5);
    X0[0] = Interval(0.0);
    X0[1] = Interval(0.0);
    X0[2] = Interval(0.0);
    X0[3] = pv0;
    X0[4] = h;
    return flow_rigorous(tape, X0, s1, cfg, deriv);
  };
  auto run_leg2 = [&](const IntervalVector& w, const Interval& h, bool deriv) {
    flow::RigorousFlow rf(tape, cfg, deriv);
    IntervalVector X0(5);
    for (int i = 0; i < 4; ++i) X0[i] = w[i];
    X0[4] = h;
    rf.init(flow::Doubleton::from_box(X0));
    return flow::flow_to_section(rf, tape, sv, deriv);
  };

  // F at a thin point x = (h, w)
  auto F = [&](const IntervalVector& x) {
    IntervalVector out(5);
    flow::FlowResult a = run_leg1(x[0], false);
    for (int i = 0; i < 4; ++i) out[i] = a.state[i] - x[1 + i];
    IntervalVector w(4);
    for (int i = 0; i < 4; ++i) w[i] = x[1 + i];
    flow::CrossingOutput c = run_leg2(w, x[0], false);
    out[4] = c.hull[2];
    return out;
  };
  // DF over a box X = (H, W)
  auto DF = [&](const IntervalVector& X) {
    IntervalMatrix J(5, 5);
    flow::FlowResult a = run_leg1(X[0], true);
    for (int i = 0; i < 4; ++i) {
      J(i, 0) = (*a.derivative)(i, 4);
      for (int j = 0; j < 4; ++j) J(i, 1 + j) = Interval(i == j ? -1.0 : 0.0);
    }
    IntervalVector w(4);
    for (int i = 0; i < 4; ++i) w[i] = X[1 + i];
    flow::CrossingOutput c = run_leg2(w, X[0], true);
    J(4, 0) = (*c.deriv)(2, 4);
    for (int j = 0; j < 4; ++j) J(4, 1 + j) = (*c.deriv)(2, j);
    return J;
  };

  IntervalVector x(5), X(5);
  x[0] = Interval(guess.h0);
  for (int i = 0; i < 4; ++i) x[1 + i] = Interval(guess.w1[i]);
  X[0] = ivl::inflate(x[0], 2e-11);
  for (int i = 0; i < 4; ++i) X[1 + i] = ivl::inflate(x[1 + i], 2e-10);

  auto out = rootfind::interval_newton(F, DF, x, X);
  if (!out.verified())
    throw EnclosureTooWide("interval Newton for h0 not verified: " + out.diagnostic);

  FindH0Result res;
  res.h0 = out.enclosure[0];
  for (int i = 0; i < 4; ++i) res.w1[i] = out.enclosure[1 + i];
  res.iterations = out.iterations;
  res.width = res.h0.diam();
  res.in_published_interval = Interval(-0.71106, -0.71105).contains(res.h0);
  if (res.width > pc.h0_width_budget)
    throw EnclosureTooWide("h0 enclosure width " + std::to_string(res.width) +
                           " exceeds the budget");

  // half period: flow the verified (w1, h0) to the v=0 crossing
  flow::CrossingOutput c = run_leg2(res.w1, res.h0, false);
  res.tau = Interval(s1) + c.time;
  res.note =
      "crossing has v = 0 by the section and p_u in " +
      [&] {
        std::ostringstream os;
        os << c.hull[2];
        return os.str();
      }() +
      " containing 0 by the Newton conditions; the crossing point is S-fixed, so the "
      "orbit closes through the collision point w0 after twice this time";
  res.wall = timing::seconds_since(t0);
  return res;
}

/* ---------------------------- certificates store ---------------------------- */

struct Certificate {
  std::string id;
  std::string kind;
  bool pass = false;
  double margin = 0;
  std::string detail;
  nlohmann::json data;
};

struct ProofReport {
  Interval h0, tau;
  double scale = 1.0;
  std::uint64_t config_hash = 0;
  std::map<std::string, CoveringCertificate> coverings;
  std::map<std::string, Certificate> certs;
  std::map<std::string, bool> verdicts;
  std::map<std::string, double> walls;
  std::vector<std::string> conclusions;

  bool has_valid_covering(const std::string& id) const {
    auto it = coverings.find(id);
    return it != coverings.end() && it->second.valid;
  }
  bool has_valid(const std::string& id) const {
    auto it = certs.find(id);
    return it != certs.end() && it->second.pass;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    auto hexpair = [](const Interval& x) {
      nlohmann::json o;
      o["lo"] = detail::hexf(x.lo());
      o["hi"] = detail::hexf(x.hi());
      o["lo_dec"] = x.lo();
      o["hi_dec"] = x.hi();
      return o;
    };
    j["h0"] = hexpair(h0);
    j["tau"] = hexpair(tau);
    j["scale"] = scale;
    j["config_hash"] = config_hash;
    for (const auto& [id, c] : coverings) j["coverings"][id] = c.to_json();
    for (const auto& [id, c] : certs) {
      nlohmann::json o;
      o["kind"] = c.kind;
      o["pass"] = c.pass;
      o["margin"] = c.margin;
      o["detail"] = c.detail;
      if (!c.data.is_null()) o["data"] = c.data;
      j["certs"][id] = o;
    }
    j["verdicts"] = verdicts;
    j["walls"] = walls;
    j["conclusions"] = conclusions;
    return j;
  }
};

inline void save_report(const ProofReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path);
  out << r.to_json().dump(1) << "\n";
}

/* ---------------------------- covering sequences ---------------------------- */

namespace detail_seq {

inline SetRef square_set(int chart, const std::string& name) {
  SetRef r;
  r.chart = chart;
  r.name = name;
  return r;
}

}  // namespace detail_seq

/* Integrates the legs of (eq. c1) and the tail of (eq. o1), derives (c2) and
 * (o2) by the symmetry lemmas over the verified self-symmetry premises, and
 * spot-checks one derived relation by direct backward integration. */
inline void verify_sequences(const ChartDataset& ds, const ProveConfig& pc, ProofReport& rep) {
  auto t0 = std::chrono::steady_clock::now();
  const MassParams& m = ds.m;
  auto mirror = [](int k) { return ChartDataset::mirror_index(k); };

  // self-symmetry premises
  for (int k : {0, 2, 18}) {
    auto ss = cover::check_self_symmetric(detail_seq::square_set(k, "N" + std::to_string(k)),
                                          ds.chart(k));
    Certificate c;
    c.id = "selfsym:N" + std::to_string(k);
    c.kind = "self_symmetry";
    c.pass = ss.is_self_symmetric;
    c.detail = ss.reason;
    rep.certs[c.id] = c;
    if (!ss.is_self_symmetric)
      throw cover::HypothesisUnverified("self-symmetry of N" + std::to_string(k));
  }
  {
    Certificate c;
    c.id = "mirror:N3=S(N1)";
    c.kind = "mirror_identity";
    check_dataset_invariants(ds);
    c.pass = true;
    c.detail = "chart 3 columns are the exact S-mirror of chart 1 (bitwise)";
    rep.certs[c.id] = c;
  }

  struct Leg {
    int from, to;
    std::string label;
  };
  std::vector<Leg> legs;
  legs.push_back({0, 1, "P1"});
  legs.push_back({1, 2, "P2"});
  for (int k = 3; k < 18; ++k) legs.push_back({k, k + 1, "P" + std::to_string(k + 1)});

  std::vector<std::pair<SetRef, SetRef>> endpoints;
  std::vector<CoveringCertificate> direct;
  for (const Leg& lg : legs) {
    auto t1 = std::chrono::steady_clock::now();
    section::PoincareLeg leg(m, ds.chart(lg.from), ds.chart(lg.to), ds.h0, false, pc.integ);
    SetRef N = detail_seq::square_set(lg.from, "N" + std::to_string(lg.from));
    SetRef M = detail_seq::square_set(lg.to, "N" + std::to_string(lg.to));
    auto map_fn = [&leg](const IntervalVector& z) { return leg.map(z, false).z; };
    std::string id = "cov:" + N.name + "=>" + M.name;
    CoveringCertificate cert = cover::check_covering(map_fn, N, M, pc.sub, id, lg.label);
    cert.wall_seconds = timing::seconds_since(t1);
    cert.config_hash = pc.hash();
    rep.coverings[cert.id] = cert;
    endpoints.push_back({N, M});
    direct.push_back(cert);
  }

  // derived mirrors of every integrated relation
  for (std::size_t i = 0; i < direct.size(); ++i) {
    SetRef dfrom, dto;
    CoveringCertificate d =
        cover::derive_symmetric(direct[i], endpoints[i].first, endpoints[i].second, mirror,
                                dfrom, dto);
    rep.coverings[d.id] = d;
  }

  // spot-check: N2 <= N3 by direct backward integration must agree with the
  // derived certificate
  {
    auto t1 = std::chrono::steady_clock::now();
    section::PoincareLeg back(m, ds.chart(3), ds.chart(2), ds.h0, true, pc.integ);
    auto map_fn = [&back](const IntervalVector& z) { return back.map(z, false).z; };
    SetRef N2 = detail_seq::square_set(2, "N2"), N3 = detail_seq::square_set(3, "N3");
    CoveringCertificate cert =
        cover::check_backcovering(map_fn, N2, N3, pc.sub, "cov:N2<=N3:direct", "P3^-1");
    cert.wall_seconds = timing::seconds_since(t1);
    cert.config_hash = pc.hash();
    rep.coverings[cert.id] = cert;
  }

  // verdict: the full relation multiset of (c1), (c2), (o1), (o2)
  bool all = true;
  for (const Leg& lg : legs) {
    std::string id = "cov:N" + std::to_string(lg.from) + "=>N" + std::to_string(lg.to);
    all = all && rep.has_valid_covering(id) && rep.has_valid_covering("S(" + id + ")");
  }
  all = all && rep.has_valid_covering("cov:N2<=N3:direct");
  rep.verdicts["covering_sequences"] = all;
  rep.walls["verify_sequences"] = timing::seconds_since(t0);
}

/* ---------------------------- collision avoidance ---------------------------- */

namespace detail_avoid {

// C != 0 over a step record, refining in time
inline void check_record(const flow::StepRecord& rec, const MassParams& m, double a, double b,
                         int depth, int max_depth, const std::string& leg_id) {
  Interval tau = Interval::unchecked(a, b);
  std::vector<Interval> row(5, Interval(0.0));
  row[0] = Interval(1.0);
  Interval u = rec.eval_row(row, 0.0, tau);
  if (!u.contains_zero()) return;
  row[0] = Interval(0.0);
  row[1] = Interval(1.0);
  Interval v = rec.eval_row(row, 0.0, tau);
  if (!v.contains_zero()) return;
  IntervalVector X = rec.eval_hull(tau);
  Interval circ = ivl::sqr(X[2]) + ivl::sqr(X[3]) - 8.0 * m.mu2;
  if (!circ.contains_zero()) return;
  if (depth >= max_depth) {
    std::ostringstream os;
    os << "collision residual encloses zero on leg " << leg_id << " at t in "
       << (rec.t0 + tau);
    throw AvoidanceFailed(os.str());
  }
  double mid = 0.5 * (a + b);
  check_record(rec, m, a, mid, depth + 1, max_depth, leg_id);
  check_record(rec, m, mid, b, depth + 1, max_depth, leg_id);
}

// departure from {v = 0}: wherever the window still touches v = 0, require
// dv/ds > 0 so the plane is crossed upward exactly once
inline void check_departure(const flow::StepRecord& rec, const ad::Tape& tape,
                            ad::Evaluator<Interval>& fev, double a, double b, int depth,
                            int max_depth) {
  Interval tau = Interval::unchecked(a, b);
  std::vector<Interval> row(5, Interval(0.0));
  row[1] = Interval(1.0);
  Interval v = rec.eval_row(row, 0.0, tau);
  if (v.lo() > 0.0) return;  // wholly departed
  IntervalVector X = rec.eval_hull(tau);
  std::vector<Interval> in(5), f(5);
  for (int i = 0; i < 5; ++i) in[i] = X[i];
  fev.eval(in, f);
  if (f[1].lo() > 0.0) return;  // touching the plane only transversally upward
  if (depth >= max_depth)
    throw AvoidanceFailed("departure from the collision section could not be verified at t in " +
                          [&] {
                            std::ostringstream os;
                            os << (rec.t0 + tau);
                            return os.str();
                          }());
  double mid = 0.5 * (a + b);
  check_departure(rec, tape, fev, a, mid, depth + 1, max_depth);
  check_departure(rec, tape, fev, mid, b, depth + 1, max_depth);
}

}  // namespace detail_avoid

inline void verify_avoidance(const ChartDataset& ds, const ProveConfig& pc, ProofReport& rep) {
  auto t0 = std::chrono::steady_clock::now();
  const MassParams& m = ds.m;
  bool all = true;

  // legs Sigma_k -> Sigma_{k+1}, k = 1..17: every tube window excludes C = 0
  for (int k = 1; k < 18; ++k) {
    auto t1 = std::chrono::steady_clock::now();
    Certificate c;
    c.id = "avoid:leg" + std::to_string(k);
    c.kind = "tube_collision_exclusion";
    try {
      section::PoincareLeg leg(m, ds.chart(k), ds.chart(k + 1), ds.h0, false, pc.integ);
      IntervalVector z(2);
      z[0] = Interval(-1, 1);
      z[1] = Interval(-1, 1);
      std::vector<flow::StepRecord> recs;
      leg.map(z, false, &recs);
      for (const auto& rec : recs)
        detail_avoid::check_record(rec, m, 0.0, rec.h, 0, pc.tube_refine_depth, c.id);
      c.pass = true;
      c.detail = std::to_string(recs.size()) + " step windows checked";
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
      all = false;
    }
    c.data["wall_seconds"] = timing::seconds_since(t1);
    rep.certs[c.id] = c;
  }

  // the Sigma_0 -> Sigma_1 leg: orbits leave {v = 0} upward immediately and
  // cannot revisit it before reaching Sigma_1
  {
    Certificate c;
    c.id = "avoid:departure";
    c.kind = "collision_section_departure";
    try {
      section::PoincareLeg leg(m, ds.chart(0), ds.chart(1), ds.h0, false, pc.integ);
      ad::Tape tape = model::make_reg_tape(m, 2);
      ad::Evaluator<Interval> fev(tape);
      IntervalVector z(2);
      z[0] = Interval(-1, 1);
      z[1] = Interval(-1, 1);
      std::vector<flow::StepRecord> recs;
      leg.map(z, false, &recs);
      for (const auto& rec : recs)
        detail_avoid::check_departure(rec, tape, fev, 0.0, rec.h, 0, pc.tube_refine_depth);
      c.pass = true;
      c.detail = "dv/ds > 0 wherever the tube touches {v = 0}; the plane is crossed upward "
                 "once and never revisited on the way to Sigma_1";
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
      all = false;
    }
    rep.certs[c.id] = c;
  }

  // the P0 legs (Sigma_3 -> Sigma_0) are the S-images of the P1 legs run
  // backward; C o S vanishes iff C does, so the departure certificate covers
  // them
  {
    Certificate c;
    c.id = "avoid:arrival_by_symmetry";
    c.kind = "symmetry_transfer";
    c.pass = rep.has_valid("avoid:departure");
    c.detail = "S maps the Sigma_3 -> Sigma_0 corridors onto the time-reversed "
               "Sigma_0 -> Sigma_1 corridors and |C o S| = |C|";
    rep.certs[c.id] = c;
    all = all && c.pass;
  }

  // chart-level check: the collision line meets the shifted family boxes only
  // at the origin, which no R_k or Q_k contains
  {
    Certificate c;
    c.id = "avoid:chart_level";
    c.kind = "collision_line_geometry";
    try {
      double L = ds.L;
      Interval factor = (Interval(1.0) - L) / (Interval(1.0) + L);
      if (!(factor.lo() > 0.0)) throw AvoidanceFailed("shear factor not positive");
      // z1+z2 is scaled by a positive factor under eta_L, so the line
      // {z1+z2=0} meets [0,1]^2 only at the origin; the family sets have
      // a_k = beta^k a > 0, keeping them strictly off the line
      if (!(ds.cone.a > 0.0 && ds.cone.beta > 0.0 && ds.cone.c + ds.cone.rho > 0.0))
        throw AvoidanceFailed("family scale constants not positive");
      auto fam = cover::approach_family(ds.cone.a, ds.cone.b, L, ds.cone.beta,
                                        ds.cone.c + ds.cone.rho, pc.approach_kmax);
      double min_sum = std::numeric_limits<double>::infinity();
      for (const auto& s : fam)
        for (const auto& set : {s.R, s.Q}) {
          IntervalVector nc(2);
          nc[0] = Interval(-1, 1);
          nc[1] = Interval(-1, 1);
          const cover::AffineMap2& cm = set.c;
          Interval sum = (cm.M[0][0] + cm.M[1][0]) * nc[0] +
                         (cm.M[0][1] + cm.M[1][1]) * nc[1] + cm.b[0] + cm.b[1];
          if (!(sum.lo() > 0.0)) throw AvoidanceFailed("family set touches the collision line");
          min_sum = std::min(min_sum, sum.lo());
        }
      c.pass = true;
      c.margin = min_sum;
      std::ostringstream os;
      os << "(psi_0 o eta_L)^{-1}{C=0} is the line z1+z2=0, meeting [0,1]^2 only at the "
            "origin; min(z1+z2) over the first "
         << pc.approach_kmax << " family sets is " << min_sum
         << " and scales by the positive factor beta resp. c+rho";
      c.detail = os.str();
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
      all = false;
    }
    rep.certs[c.id] = c;
  }

  rep.verdicts["collision_avoidance"] = all;
  rep.walls["verify_avoidance"] = timing::seconds_since(t0);
}

/* ---------------------------- approach machinery ---------------------------- */

inline void verify_approach(const ChartDataset& ds, const ProveConfig& pc, ProofReport& rep) {
  auto t0 = std::chrono::steady_clock::now();
  const MassParams& m = ds.m;
  bool all = true;

  // anchors: enclosures of the true-orbit crossings in chart coordinates;
  // z*_0 = 0 exactly since psi_0^{-1}(w_0) = 0
  flow::IntegratorConfig tight = pc.integ;
  tight.tol = std::min(tight.tol, 1e-16);
  std::array<IntervalVector, 4> anchor;
  anchor[0] = IntervalVector(2);
  for (int k = 0; k < 3; ++k) {
    section::PoincareLeg leg(m, ds.chart(k), ds.chart(k + 1), ds.h0, false, tight);
    IntervalVector z = anchor[k];
    auto res = leg.map(z, false);
    anchor[k + 1] = res.z;
  }
  {
    Certificate c;
    c.id = "approach:anchors";
    c.kind = "true_orbit_anchors";
    double worst_mid = 0, worst_w = 0;
    for (int k = 1; k < 4; ++k)
      for (int i = 0; i < 2; ++i) {
        worst_mid = std::max(worst_mid, std::fabs(anchor[k][i].mid()));
        worst_w = std::max(worst_w, anchor[k][i].diam());
      }
    c.pass = worst_mid < 1e-3 && worst_w < 0.05;
    std::ostringstream os;
    os << "max |anchor midpoint| = " << worst_mid << ", max enclosure width = " << worst_w
       << "; the true crossings satisfy g_i(z*_{i-1}) = z*_i exactly";
    c.detail = os.str();
    c.margin = 1e-3 - worst_mid;
    rep.certs[c.id] = c;
    all = all && c.pass;
  }

  // cone bounds for g_1, g_2, g_3 (loop legs) and g_0 (closing leg into the
  // collision chart), with the published constants
  struct GLeg {
    int from, to;
    const char* name;
  };
  const GLeg gl[4] = {{3, 0, "g0"}, {0, 1, "g1"}, {1, 2, "g2"}, {2, 3, "g3"}};
  for (const GLeg& g : gl) {
    auto t1 = std::chrono::steady_clock::now();
    Certificate c;
    c.id = std::string("approach:cone:") + g.name;
    c.kind = "cone_bounds";
    try {
      section::PoincareLeg leg(m, ds.chart(g.from), ds.chart(g.to), ds.h0, false, pc.integ);
      auto dg = [&leg](const IntervalVector& z) {
        auto r = leg.map(z, true);
        return *r.dz;
      };
      auto cb = cover::check_cone_bounds(dg, anchor[std::size_t(g.from == 3 ? 3 : g.from)],
                                         ds.L, ds.cone.alpha, ds.cone.beta, ds.cone.rho,
                                         ds.cone.c, pc.sub.grid);
      c.pass = cb.pass;
      c.margin = cb.margin;
      c.detail = cb.detail;
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
      all = false;
    }
    c.data["wall_seconds"] = timing::seconds_since(t1);
    rep.certs[c.id] = c;
  }

  // gluing: S R_1 <=(P4)= N_4, verified by backward integration
  {
    auto t1 = std::chrono::steady_clock::now();
    Certificate c;
    c.id = "approach:gluing";
    c.kind = "glued_backcovering";
    try {
      SetRef R1;
      R1.chart = 1;
      R1.name = "R1";
      R1.set.c = cover::AffineMap2::rect(0.0, ds.cone.b, ds.cone.a, ds.cone.b)
                     .pre_shear(ds.L);
      R1.anchor = anchor[1];
      SetRef SR1 = cover::s_image(R1, [](int k) { return ChartDataset::mirror_index(k); });
      SetRef N4 = detail_seq::square_set(4, "N4");
      section::PoincareLeg back(m, ds.chart(4), ds.chart(3), ds.h0, true, pc.integ);
      auto map_fn = [&back](const IntervalVector& z) { return back.map(z, false).z; };
      CoveringCertificate cert =
          cover::check_backcovering(map_fn, SR1, N4, pc.sub, "cov:SR1<=N4", "P4^-1");
      cert.wall_seconds = timing::seconds_since(t1);
      cert.config_hash = pc.hash();
      rep.coverings[cert.id] = cert;
      c.pass = cert.valid;
      c.margin = std::min(cert.margin_contraction, cert.margin_exit);
      c.detail = "back-covering S R_1 <= N_4 verified by reversed-leg integration";
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
      all = false;
    }
    rep.certs[c.id] = c;
  }

  // the schematic family: R_k => R_{k+1} and R_k => Q_{k+1} for every k, by
  // the cone estimates; explicit sets reported for k <= kmax
  {
    Certificate c;
    c.id = "approach:family";
    c.kind = "approach_family";
    bool cones = rep.has_valid("approach:cone:g0") && rep.has_valid("approach:cone:g1") &&
                 rep.has_valid("approach:cone:g2") && rep.has_valid("approach:cone:g3");
    try {
      auto fam = cover::approach_family(ds.cone.a, ds.cone.b, ds.L, ds.cone.beta,
                                        ds.cone.c + ds.cone.rho, pc.approach_kmax);
      c.pass = cones;
      std::ostringstream os;
      os << "coverings R_k => R_{k+1} and R_k => Q_{k+1} hold for every k in N by the "
            "verified derivative windows (alpha > 2c + rho, c + rho < 1); explicit sets "
            "emitted for k <= "
         << pc.approach_kmax << ", Q_k b-scale decaying by " << (ds.cone.c + ds.cone.rho);
      c.detail = os.str();
      nlohmann::json sets = nlohmann::json::array();
      for (const auto& s : fam) {
        nlohmann::json o;
        o["k"] = s.k;
        o["a_k"] = s.a_k;
        o["b_k"] = s.b_k;
        sets.push_back(o);
      }
      c.data["sets"] = sets;
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = e.what();
    }
    rep.certs[c.id] = c;
    all = all && c.pass;
  }

  rep.verdicts["approach_machinery"] = all;
  rep.walls["verify_approach"] = timing::seconds_since(t0);
}

/* ---------------------------- collision disc ---------------------------- */

inline void verify_disc(const ChartDataset& ds, ProofReport& rep) {
  Certificate c;
  c.id = "disc:N0";
  c.kind = "collision_disc";
  try {
    auto disc = cover::collision_disc(detail_seq::square_set(0, "N0"), ds.chart(0), ds.m,
                                      ds.h0);
    c.pass = disc.is_horizontal && disc.is_vertical && disc.residual_zero;
    c.detail = disc.detail;
    c.margin = 1e-12 - disc.residual_width;
  } catch (const std::exception& e) {
    c.pass = false;
    c.detail = e.what();
  }
  rep.certs[c.id] = c;
  rep.verdicts["collision_disc"] = c.pass;
}

/* ---------------------------- word certification ---------------------------- */

struct WordConclusion {
  std::string word;
  std::string conclusion;
  std::vector<std::string> premises;
};

namespace detail_word {

inline void require_group(const ProofReport& rep, const std::string& group,
                          std::vector<std::string>& premises) {
  auto need_cov = [&](const std::string& id) {
    if (!rep.has_valid_covering(id)) throw cover::MissingPremise(id);
    premises.push_back(id);
  };
  auto need = [&](const std::string& id) {
    if (!rep.has_valid(id)) throw cover::MissingPremise(id);
    premises.push_back(id);
  };
  if (group == "seq_c") {
    need_cov("cov:N0=>N1");
    need_cov("cov:N1=>N2");
    need_cov("S(cov:N0=>N1)");
    need_cov("S(cov:N1=>N2)");
    need("selfsym:N0");
    need("selfsym:N2");
    need("mirror:N3=S(N1)");
  } else if (group == "seq_o") {
    require_group(rep, "seq_c", premises);
    for (int k = 3; k < 18; ++k) {
      std::string id = "cov:N" + std::to_string(k) + "=>N" + std::to_string(k + 1);
      need_cov(id);
      need_cov("S(" + id + ")");
    }
    need("selfsym:N18");
  } else if (group == "avoid") {
    for (int k = 1; k < 18; ++k) need("avoid:leg" + std::to_string(k));
    need("avoid:departure");
    need("avoid:arrival_by_symmetry");
    need("avoid:chart_level");
  } else if (group == "approach") {
    need("approach:anchors");
    for (const char* g : {"g0", "g1", "g2", "g3"})
      need(std::string("approach:cone:") + g);
    need_cov("cov:SR1<=N4");
    need("approach:family");
    require_group(rep, "seq_o", premises);
  } else if (group == "disc") {
    need("disc:N0");
  } else if (group == "h0") {
    if (!rep.verdicts.count("energy_enclosure") || !rep.verdicts.at("energy_enclosure"))
      throw cover::MissingPremise("energy_enclosure");
    premises.push_back("energy_enclosure");
  }
}

}  // namespace detail_word

/* Words: either a bi-infinite schema "X/Y" with X, Y in {C, Oc, A}, or a
 * finite comma-separated cyclic word over {c, o, positive integers}. */
inline WordConclusion certify_word(const std::string& word, const ProofReport& rep) {
  WordConclusion out;
  out.word = word;
  auto slash = word.find('/');
  if (slash != std::string::npos) {
    std::string X = word.substr(0, slash), Y = word.substr(slash + 1);
    auto valid = [](const std::string& s) { return s == "C" || s == "Oc" || s == "A"; };
    if (!valid(X) || !valid(Y)) throw std::runtime_error("unknown schema " + word);
    if (X == "C" && Y == "C") {
      detail_word::require_group(rep, "h0", out.premises);
      out.conclusion =
          "C- and C+ intersect: the verified ejection/collision orbit leaves and re-enters "
          "collision";
      return out;
    }
    detail_word::require_group(rep, "seq_o", out.premises);
    detail_word::require_group(rep, "avoid", out.premises);
    detail_word::require_group(rep, "approach", out.premises);
    if (X == "C" || Y == "C") detail_word::require_group(rep, "disc", out.premises);
    out.conclusion = X + "- and " + Y +
                     "+ intersect: shadowing chains through the approach family realize the "
                     "prescribed past/future behavior without intermediate collisions";
    return out;
  }

  // finite cyclic word
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : word + ",") {
    if (ch == ',') {
      if (!cur.empty()) tokens.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    }
  }
  if (tokens.empty()) throw std::runtime_error("empty word");
  bool uses_k = false, uses_o = false;
  int max_k = 0;
  for (const auto& t : tokens) {
    if (t == "c") {
      detail_word::require_group(rep, "seq_c", out.premises);
    } else if (t == "o") {
      uses_o = true;
      detail_word::require_group(rep, "seq_o", out.premises);
    } else {
      int k = std::atoi(t.c_str());
      if (k <= 0) throw std::runtime_error("unknown token '" + t + "' in word");
      uses_k = true;
      max_k = std::max(max_k, k);
      detail_word::require_group(rep, "approach", out.premises);
      detail_word::require_group(rep, "avoid", out.premises);
    }
  }
  std::sort(out.premises.begin(), out.premises.end());
  out.premises.erase(std::unique(out.premises.begin(), out.premises.end()),
                     out.premises.end());
  std::ostringstream os;
  os << "a periodic orbit shadows the cyclic word (" << word << ")";
  if (uses_o) os << "; 'o' blocks make the outer homoclinic excursion through N_K";
  if (uses_k)
    os << "; numeric blocks wind k times around the ejection/collision orbit, approaching "
          "collision to the Q_{4k} scale while staying collision-free";
  out.conclusion = os.str();
  return out;
}

/* ---------------------------- orbit traces ---------------------------- */

struct TraceOptions {
  std::string start = "w0";  // w0 | wk:<index> | file:<path>
  model::Frame frame = model::Frame::regularized;
  double duration = 1.0;
  double dt = 1e-3;
};

inline void trace_orbit(const ChartDataset& ds, const TraceOptions& opt, std::ostream& os) {
  const MassParams& m = ds.m;
  std::array<double, 4> w{};
  if (opt.start == "w0") {
    w = {0.0, 0.0, 0.0, std::sqrt(8.0 * m.mu2.mid())};
  } else if (opt.start.rfind("wk:", 0) == 0) {
    int k = std::atoi(opt.start.c_str() + 3);
    w = ds.chart(k).kind == section::Chart::Kind::collision
            ? std::array<double, 4>{0.0, 0.0, 0.0, std::sqrt(8.0 * m.mu2.mid())}
            : ds.chart(k).w;
  } else if (opt.start.rfind("file:", 0) == 0) {
    std::ifstream in(opt.start.substr(5));
    if (!in) throw std::runtime_error("cannot read start file");
    for (int i = 0; i < 4; ++i) in >> w[i];
  } else {
    throw std::runtime_error("unknown start spec " + opt.start);
  }

  flow::IntegratorConfig cfg;
  cfg.tol = 1e-15;
  ad::Tape reg = model::make_reg_tape(m, 2);
  ad::Tape stdt = model::make_std_tape(m);

  os << "t,q1,q2,q3,q4,frame\n";
  char buf[256];
  if (opt.frame == model::Frame::regularized) {
    double h = ds.h0.mid();
    for (double t = 0.0; t <= opt.duration + 1e-12; t += opt.dt) {
      auto x = flow::flow_fast(reg, std::array<double, 5>{w[0], w[1], w[2], w[3], h}, t, cfg);
      std::snprintf(buf, sizeof buf, "%.12g,%.15g,%.15g,%.15g,%.15g,reg\n", t, x[0], x[1],
                    x[2], x[3]);
      os << buf;
    }
  } else {
    // standard frame: start given in regularized coordinates is mapped out
    auto q = model::lc_forward(w, 2, m);
    for (double t = 0.0; t <= opt.duration + 1e-12; t += opt.dt) {
      auto x = flow::flow_fast(stdt, q, t, cfg);
      std::snprintf(buf, sizeof buf, "%.12g,%.15g,%.15g,%.15g,%.15g,std\n", t, x[0], x[1],
                    x[2], x[3]);
      os << buf;
    }
  }
}

/* ---------------------------- whole pipeline ---------------------------- */

inline ChartDataset prepare_dataset(const std::string& path, const ProveConfig& pc,
                                    double scale, bool force_rebuild = false) {
  if (!force_rebuild) {
    std::ifstream probe(path);
    if (probe.good()) {
      ChartDataset ds = load_dataset(path);
      check_dataset_invariants(ds);
      if (ds.scale == scale) return ds;
    }
  }
  MassParams m = MassParams::earth_moon();
  ChartDataset ds = build_dataset(m, pc.integ, scale);
  FindH0Result h0 = find_h0(m, ds.s1(), pc);
  ds.h0 = h0.h0;
  ds.tau = h0.tau;
  for (int i = 0; i < 4; ++i) ds.w1_refined[i] = h0.w1[i].mid();
  save_dataset(ds, path);
  return ds;
}

}  // namespace reg3bp::prove

#pragma once

/* -----------------------------------------------------------------
 * The chart dataset: base points w_k, direction fields u_hat/s_hat,
 * scaling constants and cone constants for the whole construction,
 * with a build pipeline (double-precision refinement of the seed
 * coordinates) and bit-exact JSON (de)serialization via hex floats.
 *
 * Seed coordinates are printed to 12 digits; at startup the loop
 * points w_0..w_3 are re-shot onto the periodic orbit at the
 * non-rigorous energy and the remaining points are projected onto
 * the energy level, all in double precision.  Exact S-symmetry
 * relations (w_3 = S w_1, fixed zeros of w_0, w_2, w_18, mirrored
 * chart columns) are enforced bitwise so that symmetry-derived
 * certificates are valid without further computation.
 * ----------------------------------------------------------------- */

#include <cstdio>
#include <fstream>
#include <string>

#include "json.hpp"
#include "reg3bp/section.hpp"

namespace reg3bp::prove {

using ivl::Interval;
using ivl::IntervalVector;
using model::MassParams;

namespace seed {

// published approximate coordinates (12 significant digits)
inline constexpr int K = 18;

inline constexpr double w[19][4] = {
    {0.0, 0.0, 0.0, 2.81112771399},
    {1.01939532911, 0.0352455355111, -1.57992203844, -0.220188078268},
    {0.997511358555, 0.0, 0.0, -3.10035066234},
    {1.01939532911, -0.0352455355111, 1.57992203844, -0.220188078268},
    {1.82311329298e-10, 0.0, 3.0389849377e-09, 2.81112771399},
    {1.01939364734, 0.0352429461228, -1.57993713742, -0.220199770725},
    {0.997511359537, 0.0, 3.81728719867e-07, -3.1003514216},
    {1.01939365573, -0.0352429413345, 1.57993769304, -0.22019938229},
    {1.23284045903e-07, 0.0, 2.05626985632e-06, 2.81112771099},
    {1.01939456403, 0.0352429632775, -1.57993456608, -0.220196017823},
    {0.997512022626, 0.0, 0.000258254271245, -3.10086432733},
    {1.01940023627, -0.0352397234978, 1.58031042535, -0.219933213027},
    {8.34102256631e-05, 0.0, 0.00139148280123, 2.8111253283},
    {1.02000949836, 0.0352470440096, -1.57821685002, -0.21769836291},
    {0.997948108217, 0.0, 0.196225509832, -3.49133960833},
    {1.023984317, -0.0326239190489, 1.83944484044, -0.0123000584495},
    {0.0828113236996, -1.13042936454, 0.0931363222648, 1.32036952924},
    {0.0742904549562, 0.0, 1.24626303185, 2.51265379059},
    {1.26583072872, 0.0, 0.0, 0.120135068527}};

inline constexpr double u_hat[19][4] = {
    {0.0598653990819, 0.0243392345095, 0.99790861489, -0.00146013168443},
    {0.0512722628998, -0.0539645641977, -0.0790749932687, 0.106664891545},
    {0.0123990872795, 0.00623386910969, 8.06085056107e-06, -9.58885003297},
    {0.0655510635754, -0.0519328405322, 0.994851864788, 1.26355518097},
    {0.0598653990819, 0.0243392345095, 0.99790861489, -0.00146013168443},
    {0.0625757321266, -0.0658560755461, -0.0965279955578, 0.13018905303},
    {0.0184674816754, 0.00928486590201, 1.20031980776e-05, -14.2818597745},
    {0.119128113811, -0.0943647041922, 1.80852788038, 2.2967467384},
    {0.132804359411, 0.0539941945251, 2.21374370854, -0.0032407835347},
    {0.138815104952, -0.146096387381, -0.214131083267, 0.288817842031},
    {0.0409636350452, 0.0205951178031, 2.24064629998e-05, -31.6930288739},
    {0.264355726553, -0.209336295197, 4.01213882195, 5.0966647523},
    {0.294792860317, 0.120543706008, 4.91486295091, -0.00967322389548},
    {0.305475938325, -0.327843230549, -0.468071313644, 0.654208911006},
    {0.0842120960402, 0.0422016823499, -0.00607062017782, -89.0241271111},
    {0.731763394696, -0.458286780463, 8.89272504938, 13.9801270312},
    {-3.39472774076, -2.60519046749, 6.3830932378, -4.93809685454},
    {0.504441646028, 0.387143559261, 4.32240508069, -2.22878232827},
    {0.0497937735344, -0.534053889757, 0.326462982573, 0.0814565811784}};

inline constexpr double s_hat[19][4] = {
    {0.0598653990819, -0.0243392345095, -0.99790861489, -0.00146013168443},
    {0.0655510635754, 0.0519328405322, -0.994851864788, 1.26355518097},
    {0.0123990872795, -0.00623386910969, -8.06085056107e-06, -9.58885003297},
    {0.0512722628998, 0.0539645641977, 0.0790749932687, 0.106664891545},
    {0.0598653990819, -0.0243392345095, -0.99790861489, -0.00146013168443},
    {0.0536845559625, 0.042525059308, -0.815005301074, 1.03501866893},
    {0.00832229054357, -0.00418418326664, -5.41171804734e-06, -6.4360581837},
    {0.0281994747078, 0.0296777546137, 0.0434999318962, 0.058669162844},
    {0.026978030238, -0.0109685022423, -0.449703262016, -0.000657678209258},
    {0.0242011480547, 0.0191715734179, -0.367373745058, 0.466569759349},
    {0.0037506919161, -0.00188532541287, -2.82255343343e-06, -2.9018616866},
    {0.0127077970338, 0.0133767067373, 0.0196090894894, 0.0264540615654},
    {0.0121439073914, -0.0049838504505, -0.202713054229, -0.000197805387775},
    {0.0112900526678, 0.00929003414053, -0.161456580967, 0.211692282532},
    {0.00144550242937, -0.000618072920234, -0.000105478869183, -1.52819846002},
    {0.00455638237545, 0.00563436828252, 0.00813263074882, 0.0134836469778},
    {0.0299785746856, 0.00891662895616, -0.0343147668569, 0.0340399244557},
    {-0.026049583212, -0.0475477618468, -0.409735409863, 0.20805798649},
    {0.0497937735344, 0.534053889757, -0.326462982573, 0.0814565811784}};

inline constexpr double epsilon = 8.5e-10;
inline constexpr double d1_factor = 0.0598649594810129;
inline constexpr double d2_factor = 0.997908614890024;
inline constexpr double shear_L = 0.0039;
inline constexpr double cone_a = 1.0 / 256.0;
inline constexpr double cone_b = 255.0 / 256.0;
inline constexpr double cone_c = 0.021;
inline constexpr double cone_alpha = 5.09;
inline constexpr double cone_beta = 0.195;
inline constexpr double cone_rho = 0.197;
inline constexpr long s1_num = 58696;
inline constexpr long s1_den = 65536;

}  // namespace seed

struct ConeConstants {
  double a = seed::cone_a, b = seed::cone_b, c = seed::cone_c;
  double alpha = seed::cone_alpha, beta = seed::cone_beta, rho = seed::cone_rho;
};

struct ChartDataset {
  MassParams m = MassParams::earth_moon();
  double epsilon = seed::epsilon;
  double scale = 1.0;  // global set-size factor applied to epsilon/d1/d2
  double L = seed::shear_L;
  ConeConstants cone;
  long s1_num = seed::s1_num, s1_den = seed::s1_den;
  Interval h0;   // verified energy enclosure
  Interval tau;  // verified half-period enclosure (collision to w2)
  std::array<double, 4> w1_refined{};
  std::vector<section::Chart> charts;  // index 0..18
  std::string version = "1";

  double s1() const { return double(s1_num) / double(s1_den); }
  double eps_eff() const { return epsilon * scale; }

  const section::Chart& chart(int k) const { return charts.at(std::size_t(k)); }

  // index of the chart realizing the S-mirror of chart k, or -1
  static int mirror_index(int k) {
    switch (k) {
      case 0: return 0;
      case 1: return 3;
      case 2: return 2;
      case 3: return 1;
      case 18: return 18;
      default: return -1;
    }
  }
};

/* ---------------- double-precision shooting for h0 ---------------- */

struct ShootResult {
  double h0 = 0.0;
  std::array<double, 4> w1{};  // Phi_{s1}(w0)
  std::array<double, 4> w2{};  // first v=0 crossing after w1 (downward)
  double tau = 0.0;            // flow time from w0 to w2
};

inline ShootResult shoot_h0(const MassParams& m, double s1,
                            const flow::IntegratorConfig& cfg_in) {
  flow::IntegratorConfig cfg = cfg_in;
  cfg.tol = std::min(cfg.tol, 1e-15);
  ad::Tape tape = model::make_reg_tape(m, 2);
  double pv0 = std::sqrt(8.0 * m.mu2.mid());
  flow::SectionSpec sv = flow::SectionSpec::coordinate(5, 1, 0.0, -1);

  auto F = [&](const std::array<double, 5>& x, std::array<double, 5>& out) {
    // x = (h, w); F = (Phi_{s1}(w0; h) - w, pu at the v=0 crossing from w)
    std::array<double, 5> start{0.0, 0.0, 0.0, pv0, x[0]};
    auto a = flow::flow_fast(tape, start, s1, cfg);
    for (int i = 0; i < 4; ++i) out[i] = a[i] - x[1 + i];
    std::vector<double> wx{x[1], x[2], x[3], x[4], x[0]};
    flow::fast_to_section(tape, wx, sv, cfg);
    out[4] = wx[2];
  };

  std::array<double, 5> x{-0.711055, 0, 0, 0, 0};
  {
    std::array<double, 5> start{0.0, 0.0, 0.0, pv0, x[0]};
    auto a = flow::flow_fast(tape, start, s1, cfg);
    for (int i = 0; i < 4; ++i) x[1 + i] = a[i];
  }
  std::array<double, 5> fx{};
  for (int it = 0; it < 30; ++it) {
    F(x, fx);
    double nrm = 0;
    for (double v : fx) nrm = std::max(nrm, std::fabs(v));
    if (nrm < 5e-14) break;
    // finite-difference Jacobian
    double Jm[5][5];
    for (int j = 0; j < 5; ++j) {
      double step = (j == 0 ? 1e-9 : 1e-8);
      auto xp = x, xm = x;
      xp[j] += step;
      xm[j] -= step;
      std::array<double, 5> fp{}, fm{};
      F(xp, fp);
      F(xm, fm);
      for (int i = 0; i < 5; ++i) Jm[i][j] = (fp[i] - fm[i]) / (2 * step);
    }
    // solve J d = fx
    double A[5][6];
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) A[i][j] = Jm[i][j];
      A[i][5] = fx[i];
    }
    for (int c = 0; c < 5; ++c) {
      int piv = c;
      for (int r = c + 1; r < 5; ++r)
        if (std::fabs(A[r][c]) > std::fabs(A[piv][c])) piv = r;
      for (int j = 0; j < 6; ++j) std::swap(A[piv][j], A[c][j]);
      for (int r = 0; r < 5; ++r) {
        if (r == c) continue;
        double f = A[r][c] / A[c][c];
        for (int j = c; j < 6; ++j) A[r][j] -= f * A[c][j];
      }
    }
    for (int i = 0; i < 5; ++i) x[i] -= A[i][5] / A[i][i];
  }

  ShootResult res;
  res.h0 = x[0];
  for (int i = 0; i < 4; ++i) res.w1[i] = x[1 + i];
  std::vector<double> wx{x[1], x[2], x[3], x[4], x[0]};
  double t_cross = flow::fast_to_section(tape, wx, sv, cfg_in);
  res.w2 = {wx[0], 0.0, 0.0, wx[3]};  // v = 0 by the section, pu = 0 by F5
  res.tau = s1 + t_cross;
  return res;
}

/* ---------------- dataset construction ---------------- */

inline ChartDataset build_dataset(const MassParams& m, const flow::IntegratorConfig& cfg,
                                  double scale = 1.0) {
  model::check_mu_convention(m);
  ChartDataset ds;
  ds.m = m;
  ds.scale = scale;

  ShootResult sh = shoot_h0(m, ds.s1(), cfg);
  ds.h0 = Interval(sh.h0);  // provisional; replaced by the verified enclosure
  ds.tau = Interval(sh.tau);
  ds.w1_refined = sh.w1;

  // refined base points: the loop points from the shot orbit, the rest from
  // the seed table projected onto the energy level
  std::array<std::array<double, 4>, 19> W;
  for (int k = 0; k <= seed::K; ++k)
    for (int i = 0; i < 4; ++i) W[k][i] = seed::w[k][i];
  W[1] = sh.w1;
  W[2] = sh.w2;
  W[3] = model::symmetry_S(sh.w1);

  ad::Tape gamma_tape = model::make_gamma_tape(m, 2);
  ad::Evaluator<double> gamma_ev(gamma_tape);
  auto project_energy = [&](std::array<double, 4>& w, bool keep_s_fixed) {
    for (int it = 0; it < 4; ++it) {
      std::array<double, 5> in{w[0], w[1], w[2], w[3], sh.h0};
      std::array<double, 1> g{};
      std::array<double, 5> grad{};
      gamma_ev.eval_jac(std::span<const double>(in), std::span<double>(g),
                        std::span<double>(grad));
      std::array<double, 4> dir{grad[0], grad[1], grad[2], grad[3]};
      if (keep_s_fixed) {
        dir[1] = 0.0;
        dir[2] = 0.0;
      }
      double n2 = dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2] + dir[3] * dir[3];
      for (int i = 0; i < 4; ++i) w[i] -= g[0] * dir[i] / n2;
    }
  };
  for (int k = 4; k <= seed::K; ++k) project_energy(W[k], k == 18);

  // charts
  ds.charts.resize(19);
  double eps = ds.eps_eff();
  ds.charts[0] = section::build_collision_chart(eps * seed::d1_factor, eps * seed::d2_factor);
  ds.charts[0].epsilon = eps;
  ds.charts[0].index = 0;
  for (int k = 1; k <= seed::K; ++k) {
    if (k == 3) {
      ds.charts[3] = section::derive_mirror_chart(ds.charts[1]);
    } else {
      bool s_fix = (k == 2 || k == 18);
      std::array<double, 4> uh, shat;
      for (int i = 0; i < 4; ++i) {
        uh[i] = seed::u_hat[k][i];
        shat[i] = seed::s_hat[k][i];
      }
      ds.charts[k] = section::build_generic_chart(m, sh.h0, W[k], uh, shat, eps, s_fix);
    }
    ds.charts[k].index = k;
  }
  return ds;
}

/* ---------------- JSON with hex-float encoding ---------------- */

namespace detail {

inline std::string hexf(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}
inline double unhexf(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

inline nlohmann::json vec4(const std::array<double, 4>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(hexf(x));
  return a;
}
inline std::array<double, 4> unvec4(const nlohmann::json& a) {
  std::array<double, 4> v{};
  for (int i = 0; i < 4; ++i) v[i] = unhexf(a.at(i).get<std::string>());
  return v;
}

}  // namespace detail

inline nlohmann::json dataset_to_json(const ChartDataset& ds) {
  using nlohmann::json;
  json j;
  j["version"] = ds.version;
  j["mu1"] = {{"num", 1}, {"den", 82}};
  j["epsilon"] = detail::hexf(ds.epsilon);
  j["scale"] = detail::hexf(ds.scale);
  j["L"] = detail::hexf(ds.L);
  j["s1"] = {{"num", ds.s1_num}, {"den", ds.s1_den}};
  j["cone"] = {{"a", detail::hexf(ds.cone.a)},         {"b", detail::hexf(ds.cone.b)},
               {"c", detail::hexf(ds.cone.c)},         {"alpha", detail::hexf(ds.cone.alpha)},
               {"beta", detail::hexf(ds.cone.beta)},   {"rho", detail::hexf(ds.cone.rho)}};
  j["h0"] = {{"lo", detail::hexf(ds.h0.lo())}, {"hi", detail::hexf(ds.h0.hi())}};
  j["tau"] = {{"lo", detail::hexf(ds.tau.lo())}, {"hi", detail::hexf(ds.tau.hi())}};
  j["w1_refined"] = detail::vec4(ds.w1_refined);
  j["charts"] = json::array();
  for (const auto& c : ds.charts) {
    json cj;
    cj["index"] = c.index;
    cj["kind"] = c.kind == section::Chart::Kind::collision ? "collision_psi0" : "generic";
    cj["w"] = detail::vec4(c.w);
    cj["u_hat"] = detail::vec4(c.u_hat);
    cj["s_hat"] = detail::vec4(c.s_hat);
    cj["normal"] = detail::vec4(c.normal);
    cj["epsilon"] = detail::hexf(c.epsilon);
    cj["d1"] = detail::hexf(c.d1);
    cj["d2"] = detail::hexf(c.d2);
    nlohmann::json A = nlohmann::json::array();
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) A.push_back(detail::hexf(c.A[i][k]));
    cj["A"] = A;
    j["charts"].push_back(cj);
  }
  return j;
}

inline ChartDataset dataset_from_json(const nlohmann::json& j) {
  ChartDataset ds;
  ds.version = j.at("version").get<std::string>();
  ds.epsilon = detail::unhexf(j.at("epsilon").get<std::string>());
  ds.scale = detail::unhexf(j.at("scale").get<std::string>());
  ds.L = detail::unhexf(j.at("L").get<std::string>());
  ds.s1_num = j.at("s1").at("num").get<long>();
  ds.s1_den = j.at("s1").at("den").get<long>();
  const auto& cj = j.at("cone");
  ds.cone.a = detail::unhexf(cj.at("a").get<std::string>());
  ds.cone.b = detail::unhexf(cj.at("b").get<std::string>());
  ds.cone.c = detail::unhexf(cj.at("c").get<std::string>());
  ds.cone.alpha = detail::unhexf(cj.at("alpha").get<std::string>());
  ds.cone.beta = detail::unhexf(cj.at("beta").get<std::string>());
  ds.cone.rho = detail::unhexf(cj.at("rho").get<std::string>());
  ds.h0 = Interval(detail::unhexf(j.at("h0").at("lo").get<std::string>()),
                   detail::unhexf(j.at("h0").at("hi").get<std::string>()));
  ds.tau = Interval(detail::unhexf(j.at("tau").at("lo").get<std::string>()),
                    detail::unhexf(j.at("tau").at("hi").get<std::string>()));
  ds.w1_refined = detail::unvec4(j.at("w1_refined"));
  ds.charts.clear();
  for (const auto& c : j.at("charts")) {
    section::Chart ch;
    ch.index = c.at("index").get<int>();
    ch.kind = c.at("kind").get<std::string>() == "collision_psi0"
                  ? section::Chart::Kind::collision
                  : section::Chart::Kind::generic;
    ch.w = detail::unvec4(c.at("w"));
    ch.u_hat = detail::unvec4(c.at("u_hat"));
    ch.s_hat = detail::unvec4(c.at("s_hat"));
    ch.normal = detail::unvec4(c.at("normal"));
    ch.epsilon = detail::unhexf(c.at("epsilon").get<std::string>());
    ch.d1 = detail::unhexf(c.at("d1").get<std::string>());
    ch.d2 = detail::unhexf(c.at("d2").get<std::string>());
    const auto& A = c.at("A");
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k)
        ch.A[i][k] = detail::unhexf(A.at(i * 4 + k).get<std::string>());
    if (ch.kind == section::Chart::Kind::generic)
      ch.Ainv = ivl::verified_inverse(section::detail::thin4(ch.A));
    ds.charts.push_back(std::move(ch));
  }
  return ds;
}

inline void save_dataset(const ChartDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file " + path);
  out << dataset_to_json(ds).dump(1) << "\n";
}

inline ChartDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset file " + path);
  nlohmann::json j;
  in >> j;
  return dataset_from_json(j);
}

/* Invariants of the dataset required by the symmetry-derived certificates;
 * checked at load time, bitwise where exactness is claimed. */
inline void check_dataset_invariants(const ChartDataset& ds) {
  if (ds.charts.size() != 19) throw std::runtime_error("dataset: expected 19 charts");
  const auto& c1 = ds.chart(1);
  const auto& c3 = ds.chart(3);
  auto Sw1 = model::symmetry_S(c1.w);
  for (int i = 0; i < 4; ++i)
    if (Sw1[i] != c3.w[i]) throw std::runtime_error("dataset: w3 != S w1");
  auto Ss1 = model::symmetry_S(c1.s_hat);
  auto Su1 = model::symmetry_S(c1.u_hat);
  for (int i = 0; i < 4; ++i) {
    if (c3.u_hat[i] != Ss1[i]) throw std::runtime_error("dataset: u3 != S s1");
    if (c3.s_hat[i] != Su1[i]) throw std::runtime_error("dataset: s3 != S u1");
  }
  for (int k : {2, 18}) {
    const auto& c = ds.chart(k);
    if (c.w[1] != 0.0 || c.w[2] != 0.0)
      throw std::runtime_error("dataset: w_k not S-fixed for k=" + std::to_string(k));
    auto Su = model::symmetry_S(c.u_hat);
    for (int i = 0; i < 4; ++i)
      if (c.s_hat[i] != Su[i])
        throw std::runtime_error("dataset: s_hat != S u_hat for k=" + std::to_string(k));
    if (c.normal[0] != 0.0 || c.normal[3] != 0.0)
      throw std::runtime_error("dataset: normal not S-odd for k=" + std::to_string(k));
    // grad column must be S-even: zero (v, pu) components
    if (c.A[1][3] != 0.0 || c.A[2][3] != 0.0)
      throw std::runtime_error("dataset: grad column not S-even for k=" + std::to_string(k));
  }
  // chart 3 columns vs chart 1 columns
  for (int i = 0; i < 4; ++i) {
    std::array<double, 4> col1{ds.chart(1).A[0][i], ds.chart(1).A[1][i], ds.chart(1).A[2][i],
                               ds.chart(1).A[3][i]};
    auto S1 = model::symmetry_S(col1);
    int target = i == 0 ? 1 : (i == 1 ? 0 : i);
    double sign = (i == 2) ? -1.0 : 1.0;
    for (int r = 0; r < 4; ++r)
      if (ds.chart(3).A[r][target] != sign * S1[r])
        throw std::runtime_error("dataset: chart 3 columns are not the S-mirror of chart 1");
  }
  model::check_mu_convention(ds.m);
}

}  // namespace reg3bp::prove

#pragma once

/* -----------------------------------------------------------------
 * Time propagation.
 *
 * RigorousFlow advances a doubleton set representation
 *
 *     X(t) = c(t) + C(t) r0 + B(t) r(t)
 *
 * with a validated Taylor method: per step a high-order enclosure E
 * of the solution over the step is established (Picard-bootstrapped
 * Taylor polynomial plus remainder candidate), the Lagrange
 * remainder and the step transition matrix are enclosed from series
 * coefficients over E, and the remainder part r is re-expressed in
 * a fresh orthogonal frame (QR) to control the wrapping effect.
 * First variations ride along as V = Qv Rv with the same frame
 * treatment.  Each step keeps its series so the solution can be
 * evaluated densely on any sub-interval of the step.
 *
 * FastFlow is the plain double-precision companion used for guesses
 * and non-rigorous checks.
 * ----------------------------------------------------------------- */

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "reg3bp/ad.hpp"
#include "reg3bp/interval_linalg.hpp"

namespace reg3bp::flow {

using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;

struct BlowUp : std::runtime_error {
  explicit BlowUp(const std::string& w) : std::runtime_error("enclosure blow-up: " + w) {}
};
struct StepUnderflow : std::runtime_error {
  StepUnderflow() : std::runtime_error("validated step size underflow") {}
};
struct SingularityHit : std::runtime_error {
  explicit SingularityHit(const std::string& w)
      : std::runtime_error("vector-field singularity: " + w) {}
};
struct NoCrossing : std::runtime_error {
  explicit NoCrossing(const std::string& w) : std::runtime_error("no section crossing: " + w) {}
};
struct TangentialCrossing : std::runtime_error {
  explicit TangentialCrossing(const std::string& w)
      : std::runtime_error("transversality not established: " + w) {}
};

struct IntegratorConfig {
  int order = 20;
  double init_step = 0.05;
  double tol = 1e-14;      // remainder target per step
  int max_steps = 200000;
  double min_step = 1e-12;
  double max_step = 0.5;
  double blowup_diam = 5e-3;  // hull diameter budget
};

/* Doubleton set representation. */
struct Doubleton {
  IntervalVector c;   // thin center
  IntervalMatrix C;   // transport of the initial offsets
  IntervalVector r0;  // initial offsets, zero-centered, never changes
  IntervalMatrix B;   // thin near-orthogonal frame
  IntervalVector r;   // accumulated remainder in the B frame

  static Doubleton from_box(const IntervalVector& X) {
    const std::size_t n = X.size();
    Doubleton d;
    d.c = IntervalVector(n);
    d.r0 = IntervalVector(n);
    for (std::size_t i = 0; i < n; ++i) {
      double m = X[i].mid();
      d.c[i] = Interval(m);
      d.r0[i] = X[i] - Interval(m);
    }
    d.C = IntervalMatrix::identity(n);
    d.B = IntervalMatrix::identity(n);
    d.r = IntervalVector(n);
    return d;
  }

  // X = c + A u for u in offsets (an affine set, e.g. a chart parallelepiped)
  static Doubleton from_affine(const IntervalVector& c, const IntervalMatrix& A,
                               const IntervalVector& offsets) {
    Doubleton d;
    d.c = c;
    d.C = A;
    d.r0 = offsets;
    d.B = IntervalMatrix::identity(c.size());
    d.r = IntervalVector(c.size());
    return d;
  }

  IntervalVector hull() const { return c + C * r0 + B * r; }
  std::size_t dim() const { return c.size(); }
};

namespace detail {

// modified Gram-Schmidt on columns; degenerate columns fall back to unit
// vectors re-orthogonalized against the previous ones
inline std::vector<double> qr_orth(const std::vector<double>& G, std::size_t n) {
  std::vector<double> Q = G;
  auto col = [&](std::size_t j, std::size_t i) -> double& { return Q[i * n + j]; };
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += col(k, i) * col(j, i);
      for (std::size_t i = 0; i < n; ++i) col(j, i) -= dot * col(k, i);
    }
    double nrm = 0;
    for (std::size_t i = 0; i < n; ++i) nrm += col(j, i) * col(j, i);
    nrm = std::sqrt(nrm);
    if (nrm < 1e-150) {
      for (std::size_t basis = 0; basis < n; ++basis) {
        for (std::size_t i = 0; i < n; ++i) col(j, i) = (i == basis) ? 1.0 : 0.0;
        for (std::size_t k = 0; k < j; ++k) {
          double dot = 0;
          for (std::size_t i = 0; i < n; ++i) dot += col(k, i) * col(j, i);
          for (std::size_t i = 0; i < n; ++i) col(j, i) -= dot * col(k, i);
        }
        nrm = 0;
        for (std::size_t i = 0; i < n; ++i) nrm += col(j, i) * col(j, i);
        nrm = std::sqrt(nrm);
        if (nrm > 1e-8) break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) col(j, i) /= nrm;
  }
  return Q;
}

inline IntervalMatrix thin_matrix(const std::vector<double>& M, std::size_t n) {
  IntervalMatrix R(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) R(i, j) = Interval(M[i * n + j]);
  return R;
}

inline Interval dot_thin(std::span<const double> n_vec, const IntervalVector& x,
                         double offset) {
  Interval acc(-offset);
  for (std::size_t i = 0; i < n_vec.size(); ++i)
    if (n_vec[i] != 0.0) acc += Interval(n_vec[i]) * x[i];
  return acc;
}

}  // namespace detail

/* One validated step, retaining everything needed for dense output. */
struct StepRecord {
  Interval t0;    // global time at step start
  double h = 0;   // step size
  int order = 0;  // series order p
  std::vector<IntervalVector> xc;  // center series, orders 0..p
  std::vector<IntervalMatrix> J;   // transition series over the start hull, 0..p
  IntervalVector rem_c;            // (p+1)-coefficient over E
  IntervalMatrix rem_J;            // (p+1)-coefficient of the variation over E, times Ve
  IntervalVector e;                // a-priori enclosure over [0, h]
  Doubleton start;                 // representation at step start
  IntervalMatrix Qv, Rv;           // variation at step start (V = Qv Rv), if tracked
  bool has_v = false;

  // center trajectory at tau in [0, h]
  IntervalVector eval_center(const Interval& tau) const {
    const std::size_t n = xc[0].size();
    IntervalVector acc = xc[order];
    for (int k = order - 1; k >= 0; --k) {
      for (std::size_t i = 0; i < n; ++i) acc[i] = acc[i] * tau + xc[k][i];
    }
    Interval tp = ivl::pow_i(tau, order + 1);
    for (std::size_t i = 0; i < n; ++i) acc[i] += rem_c[i] * tp;
    return acc;
  }

  // step transition matrix A(tau) enclosing D Phi_tau over the start hull
  IntervalMatrix eval_transition(const Interval& tau) const {
    const std::size_t n = xc[0].size();
    IntervalMatrix acc = J[order];
    for (int k = order - 1; k >= 0; --k) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) acc(i, j) = acc(i, j) * tau + J[k](i, j);
    }
    Interval tp = ivl::pow_i(tau, order + 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) acc(i, j) += rem_J(i, j) * tp;
    return acc;
  }

  IntervalVector eval_hull(const Interval& tau) const {
    IntervalMatrix A = eval_transition(tau);
    return eval_center(tau) + (A * start.C) * start.r0 + (A * start.B) * start.r;
  }

  /* Project a thin row vector through the step series before evaluating in
   * time: rc = row . c(tau), rA = row^T A(tau).  Evaluating the series of the
   * projected quantities keeps cancellations (e.g. of the flow direction in
   * chart coordinates) that boxing X(tau) first would destroy. */
  void eval_row_pieces(std::span<const Interval> row, const Interval& tau, Interval& rc,
                       IntervalVector& rA) const {
    const std::size_t n = xc[0].size();
    rc = Interval(0.0);
    rA = IntervalVector(n);
    Interval acc;
    for (std::size_t i = 0; i < n; ++i) acc += row[i] * xc[order][i];
    IntervalVector vac(n);
    for (std::size_t j = 0; j < n; ++j) {
      Interval s;
      for (std::size_t i = 0; i < n; ++i) s += row[i] * J[order](i, j);
      vac[j] = s;
    }
    for (int k = order - 1; k >= 0; --k) {
      Interval sk;
      for (std::size_t i = 0; i < n; ++i) sk += row[i] * xc[k][i];
      acc = acc * tau + sk;
      for (std::size_t j = 0; j < n; ++j) {
        Interval vj;
        for (std::size_t i = 0; i < n; ++i) vj += row[i] * J[k](i, j);
        vac[j] = vac[j] * tau + vj;
      }
    }
    Interval tp = ivl::pow_i(tau, order + 1);
    Interval rrem;
    for (std::size_t i = 0; i < n; ++i) rrem += row[i] * rem_c[i];
    rc = acc + rrem * tp;
    for (std::size_t j = 0; j < n; ++j) {
      Interval vj;
      for (std::size_t i = 0; i < n; ++i) vj += row[i] * rem_J(i, j);
      rA[j] = vac[j] + vj * tp;
    }
  }

  // row . X(tau) - offset for a thin row vector, fully projected
  Interval eval_row(std::span<const Interval> row, double offset, const Interval& tau) const {
    Interval rc;
    IntervalVector rA;
    eval_row_pieces(row, tau, rc, rA);
    Interval acc = rc - offset;
    for (std::size_t j = 0; j < start.r0.size(); ++j) {
      Interval s;
      for (std::size_t i = 0; i < rA.size(); ++i) s += rA[i] * start.C(i, j);
      acc += s * start.r0[j];
    }
    for (std::size_t j = 0; j < start.r.size(); ++j) {
      Interval s;
      for (std::size_t i = 0; i < rA.size(); ++i) s += rA[i] * start.B(i, j);
      acc += s * start.r[j];
    }
    return acc;
  }

  // tight <n, X(tau)> - offset without boxing the set first
  Interval eval_functional(std::span<const double> n_vec, double offset,
                           const Interval& tau) const {
    const std::size_t n = xc[0].size();
    IntervalVector ctr = eval_center(tau);
    IntervalMatrix A = eval_transition(tau);
    Interval acc = detail::dot_thin(n_vec, ctr, offset);
    // row = n^T A, then row*(C r0) + row*(B r)
    IntervalVector row(n);
    for (std::size_t j = 0; j < n; ++j) {
      Interval s;
      for (std::size_t i = 0; i < n; ++i)
        if (n_vec[i] != 0.0) s += Interval(n_vec[i]) * A(i, j);
      row[j] = s;
    }
    for (std::size_t j = 0; j < start.r0.size(); ++j) {
      Interval s1;
      for (std::size_t i = 0; i < n; ++i) s1 += row[i] * start.C(i, j);
      acc += s1 * start.r0[j];
    }
    for (std::size_t j = 0; j < start.r.size(); ++j) {
      Interval s2;
      for (std::size_t i = 0; i < n; ++i) s2 += row[i] * start.B(i, j);
      acc += s2 * start.r[j];
    }
    return acc;
  }
};

class RigorousFlow {
 public:
  RigorousFlow(const ad::Tape& tape, const IntegratorConfig& cfg, bool want_derivative)
      : tape_(&tape),
        cfg_(cfg),
        n_(tape.n_in),
        want_v_(want_derivative),
        engX_(tape, cfg.order + 1, true),
        engC_(tape, cfg.order + 1, false),
        engE_(tape, cfg.order + 1, true) {}

  void init(const Doubleton& X0) {
    cur_ = X0;
    t_ = Interval(0.0);
    h_next_ = cfg_.init_step;
    records_.clear();
    Qv_ = IntervalMatrix::identity(n_);
    Rv_ = IntervalMatrix::identity(n_);
    steps_ = 0;
    // factor the initial-offset transport as Qc Rc with Qc kept orthogonal:
    // long products of step matrices then accumulate in near-triangular
    // factors instead of wrapping entrywise
    const std::size_t mc = X0.C.cols();
    std::vector<double> Cm = X0.C.mid();
    std::vector<double> Csq(n_ * n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < std::min(mc, n_); ++j) Csq[i * n_ + j] = Cm[i * mc + j];
    Qc_ = detail::thin_matrix(detail::qr_orth(Csq, n_), n_);
    Rc_ = ivl::verified_inverse(Qc_) * X0.C;
  }

  const Doubleton& current() const { return cur_; }
  IntervalVector hull() const { return cur_.hull(); }
  const Interval& time() const { return t_; }
  IntervalMatrix derivative() const { return Qv_ * Rv_; }
  const std::vector<StepRecord>& records() const { return records_; }
  int steps() const { return steps_; }
  const IntegratorConfig& config() const { return cfg_; }
  std::size_t dim() const { return n_; }

  // one validated step; h_request > 0 forces the step size (still validated,
  // may underflow-halve below it); h_cap > 0 bounds the adaptive choice
  const StepRecord& step(double h_request = 0.0, double h_cap = 0.0) {
    if (++steps_ > cfg_.max_steps) throw NoCrossing("max_steps exceeded");
    const int p = cfg_.order;
    IntervalVector X = cur_.hull();
    double dia = X.max_diam();
    if (dia > cfg_.blowup_diam) throw BlowUp("diameter " + std::to_string(dia));

    std::vector<Interval> x0(n_), c0(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      x0[i] = X[i];
      c0[i] = cur_.c[i];
    }
    try {
      engX_.run(x0, p);
      engC_.run(c0, p);
    } catch (const ivl::DivisionByZeroInterval& e) {
      throw SingularityHit(e.what());
    } catch (const ivl::DomainError& e) {
      throw SingularityHit(e.what());
    }

    // step size: requested, or adaptive from the center series decay; scan
    // the upper half of the orders so irregular coefficient patterns do not
    // fool the estimate
    double h = h_request > 0.0 ? h_request : std::min(h_next_, cfg_.max_step);
    if (h_request <= 0.0) {
      for (int k = std::max(2, p / 2); k <= p; ++k) {
        double mx = 0;
        for (std::size_t i = 0; i < n_; ++i) mx = std::max(mx, ivl::mag(engC_.state(i, k)));
        if (mx > 0) h = std::min(h, 0.9 * std::pow(cfg_.tol / mx, 1.0 / k));
      }
      h = std::min(h, cfg_.max_step);
    }
    if (h_cap > 0.0) h = std::min(h, h_cap);

    // high-order enclosure: E = poly(X, [0,h]) + R, validated by the
    // Lagrange coefficient over E itself
    StepRecord rec;
    IntervalVector E(n_), rem(n_);
    bool ok = false;
    while (!ok) {
      if (h < cfg_.min_step) throw StepUnderflow();
      Interval th = Interval::unchecked(0.0, h);
      IntervalVector P(n_);
      for (std::size_t i = 0; i < n_; ++i) {
        Interval acc = engX_.state(i, p);
        for (int k = p - 1; k >= 0; --k) acc = acc * th + engX_.state(i, k);
        P[i] = acc;
      }
      // seed the remainder guess from the series tail itself so the
      // validation does not fight the step controller at tight tolerances
      IntervalVector R(n_);
      for (std::size_t i = 0; i < n_; ++i) {
        double tail = ivl::mag(engX_.state(i, p)) * std::pow(h, p) * h;
        double guess = 8.0 * tail + 1e-3 * cfg_.tol * std::max(1.0, h);
        R[i] = Interval::unchecked(-guess, guess);
      }
      for (int attempt = 0; attempt < 6 && !ok; ++attempt) {
        IntervalVector Ec = P + R;
        std::vector<Interval> e0(n_);
        for (std::size_t i = 0; i < n_; ++i) e0[i] = Ec[i];
        bool singular = false;
        try {
          engE_.run(e0, p + 1);
        } catch (const ivl::DivisionByZeroInterval&) {
          singular = true;
        } catch (const ivl::DomainError&) {
          singular = true;
        }
        if (singular) break;  // shrink h
        Interval tp = ivl::pow_i(th, p + 1);
        bool contained = true;
        for (std::size_t i = 0; i < n_; ++i) {
          rem[i] = engE_.state(i, p + 1);
          if (!(rem[i] * tp).interior_subset_of(R[i])) contained = false;
        }
        if (contained) {
          E = Ec;
          ok = true;
          // tightening passes: with E accepted, every trajectory lies in
          // P + rem(E) tp, so re-enclosing over that smaller set is sound and
          // slims the Lagrange terms (the accepted guess is usually coarse)
          for (int pass = 0; pass < 2; ++pass) {
            IntervalVector Et = P;
            for (std::size_t i = 0; i < n_; ++i) Et[i] += rem[i] * tp;
            std::vector<Interval> et(n_);
            for (std::size_t i = 0; i < n_; ++i) et[i] = ivl::intersect(Et[i], E[i]);
            try {
              engE_.run(et, p + 1);
            } catch (...) {
              engE_.run(e0, p + 1);
              for (std::size_t i = 0; i < n_; ++i) rem[i] = engE_.state(i, p + 1);
              break;
            }
            for (std::size_t i = 0; i < n_; ++i) {
              E[i] = et[i];
              rem[i] = engE_.state(i, p + 1);
            }
          }
        } else {
          for (std::size_t i = 0; i < n_; ++i) {
            Interval grow = (rem[i] * tp) * Interval(4.0);
            R[i] = Interval::hull(R[i], Interval::hull(grow, -grow));
          }
        }
      }
      if (!ok) h *= 0.5;
    }

    // variational a-priori enclosure Ve over the step (Picard on V' = Df V)
    IntervalMatrix DfE(n_, n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) DfE(i, j) = engE_.state_dual(i, j, 1);
    IntervalMatrix Ve = IntervalMatrix::identity(n_);
    {
      Interval th = Interval::unchecked(0.0, h);
      bool vok = false;
      for (int attempt = 0; attempt < 8 && !vok; ++attempt) {
        IntervalMatrix Vn = IntervalMatrix::identity(n_) + th * (DfE * Ve);
        vok = true;
        for (std::size_t i = 0; i < n_ && vok; ++i)
          for (std::size_t j = 0; j < n_ && vok; ++j)
            if (!Vn(i, j).interior_subset_of(Ve(i, j))) vok = false;
        if (vok) {
          Ve = Vn;
        } else {
          for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
              Ve(i, j) = ivl::inflate(Interval::hull(Ve(i, j), Vn(i, j)),
                                      1e-12 + 0.1 * Vn(i, j).diam());
        }
      }
      if (!vok) {
        // fall back: entrywise bound |V| <= exp(||Df||_inf h)
        double nrm = 0;
        for (std::size_t i = 0; i < n_; ++i) {
          double s = 0;
          for (std::size_t j = 0; j < n_; ++j) s = ivl::rnd::add_up(s, ivl::mag(DfE(i, j)));
          nrm = std::max(nrm, s);
        }
        double bound = ivl::rnd::next_up(std::exp(nrm * h) * (1.0 + 1e-12));
        for (std::size_t i = 0; i < n_; ++i)
          for (std::size_t j = 0; j < n_; ++j) Ve(i, j) = Interval::unchecked(-bound, bound);
      }
    }

    // assemble the record
    rec.t0 = t_;
    rec.h = h;
    rec.order = p;
    rec.start = cur_;
    rec.e = E;
    rec.xc.resize(p + 1, IntervalVector(n_));
    rec.J.resize(p + 1, IntervalMatrix(n_, n_));
    for (int k = 0; k <= p; ++k)
      for (std::size_t i = 0; i < n_; ++i) {
        rec.xc[k][i] = engC_.state(i, k);
        for (std::size_t j = 0; j < n_; ++j) rec.J[k](i, j) = engX_.state_dual(i, j, k);
      }
    rec.rem_c = rem;
    IntervalMatrix Jrem(n_, n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) Jrem(i, j) = engE_.state_dual(i, j, p + 1);
    rec.rem_J = Jrem * Ve;
    if (want_v_) {
      rec.Qv = Qv_;
      rec.Rv = Rv_;
      rec.has_v = true;
    }

    // advance the doubleton
    Interval hh(h);
    IntervalMatrix A = rec.eval_transition(hh);
    IntervalVector c_raw = rec.eval_center(hh);
    Doubleton nxt;
    nxt.r0 = cur_.r0;
    nxt.c = IntervalVector(n_);
    IntervalVector slack(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double m = c_raw[i].mid();
      nxt.c[i] = Interval(m);
      slack[i] = c_raw[i] - Interval(m);
    }
    {
      IntervalMatrix Wc = A * Qc_;
      IntervalMatrix Qn = detail::thin_matrix(detail::qr_orth(Wc.mid(), n_), n_);
      Rc_ = (ivl::verified_inverse(Qn) * Wc) * Rc_;
      Qc_ = Qn;
      nxt.C = Qc_ * Rc_;
    }
    IntervalMatrix G = A * cur_.B;
    std::vector<double> Q = detail::qr_orth(G.mid(), n_);
    nxt.B = detail::thin_matrix(Q, n_);
    IntervalMatrix Qinv = ivl::verified_inverse(nxt.B);
    nxt.r = (Qinv * G) * cur_.r + Qinv * slack;
    cur_ = std::move(nxt);

    if (want_v_) {
      IntervalMatrix W = A * Qv_;
      std::vector<double> Qw = detail::qr_orth(W.mid(), n_);
      IntervalMatrix Qn = detail::thin_matrix(Qw, n_);
      IntervalMatrix Qni = ivl::verified_inverse(Qn);
      Rv_ = (Qni * W) * Rv_;
      Qv_ = Qn;
    }

    t_ = t_ + Interval(h);
    h_next_ = std::min(h * 1.5, cfg_.max_step);
    records_.push_back(std::move(rec));
    return records_.back();
  }

  // drop the last record and restore the pre-step state
  void undo_last() {
    const StepRecord& rec = records_.back();
    cur_ = rec.start;
    t_ = rec.t0;
    if (rec.has_v) {
      Qv_ = rec.Qv;
      Rv_ = rec.Rv;
    }
    // re-factor the restored transport
    std::vector<double> Cm = cur_.C.mid();
    const std::size_t mc = cur_.C.cols();
    std::vector<double> Csq(n_ * n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < std::min(mc, n_); ++j) Csq[i * n_ + j] = Cm[i * mc + j];
    Qc_ = detail::thin_matrix(detail::qr_orth(Csq, n_), n_);
    Rc_ = ivl::verified_inverse(Qc_) * cur_.C;
    --steps_;
    records_.pop_back();
  }

  void drop_records_before(std::size_t keep_from) {
    if (keep_from > 0 && keep_from <= records_.size())
      records_.erase(records_.begin(), records_.begin() + keep_from);
  }

 private:
  const ad::Tape* tape_;
  IntegratorConfig cfg_;
  std::size_t n_;
  bool want_v_;
  ad::TaylorEngine<Interval> engX_, engC_, engE_;
  Doubleton cur_;
  Interval t_;
  IntervalMatrix Qv_, Rv_;
  IntervalMatrix Qc_, Rc_;
  double h_next_ = 0.05;
  int steps_ = 0;
  std::vector<StepRecord> records_;
};

/* ------------------------- fixed-horizon propagation ------------------------- */

struct FlowResult {
  IntervalVector state;
  std::optional<IntervalMatrix> derivative;
  Interval elapsed;
};

// enclosure of Phi_{t*}(X0) (and of D Phi_{t*} over X0 when requested)
inline FlowResult flow_rigorous(const ad::Tape& tape, const IntervalVector& X0, double t_star,
                                const IntegratorConfig& cfg, bool want_derivative) {
  RigorousFlow rf(tape, cfg, want_derivative);
  rf.init(Doubleton::from_box(X0));
  while (rf.time().hi() < t_star) {
    // cap the step so the horizon is never overrun by more than rounding;
    // once the adaptive step reaches the cap, the step covers t*
    double cap = ivl::rnd::next_up(ivl::rnd::next_up(t_star - rf.time().lo()));
    rf.step(0.0, cap);
  }
  const StepRecord& last = rf.records().back();
  Interval tau = ivl::intersect(Interval(t_star) - last.t0, Interval::unchecked(0.0, last.h));
  FlowResult out;
  IntervalMatrix A = last.eval_transition(tau);
  out.state = last.eval_center(tau) + (A * last.start.C) * last.start.r0 +
              (A * last.start.B) * last.start.r;
  out.elapsed = Interval(t_star);
  if (want_derivative && last.has_v) out.derivative = A * (last.Qv * last.Rv);
  return out;
}

/* ------------------------- section crossing ------------------------- */

struct SectionSpec {
  std::vector<double> normal;  // length = state dimension (augmented dims padded 0)
  double offset = 0.0;         // sigma(x) = <normal, x> - offset
  int direction = +1;          // +1: crossings with sigma rising; -1: falling

  static SectionSpec coordinate(std::size_t n_dim, std::size_t index, double value,
                                int direction) {
    SectionSpec s;
    s.normal.assign(n_dim, 0.0);
    s.normal[index] = 1.0;
    s.offset = value;
    s.direction = direction;
    return s;
  }

  Interval sigma(const IntervalVector& x) const {
    return detail::dot_thin(normal, x, offset) * Interval(double(direction));
  }
  Interval sigma(const StepRecord& rec, const Interval& tau) const {
    return rec.eval_functional(normal, offset, tau) * Interval(double(direction));
  }
};

struct CrossingOutput {
  // affine pieces of the crossing set: image = c + C r0 + B r
  IntervalVector c;
  IntervalMatrix C;
  IntervalVector r0;
  IntervalMatrix B;
  IntervalVector r;
  IntervalVector hull;
  Interval time;                          // global crossing-time enclosure
  std::optional<IntervalMatrix> deriv;    // section-projected D P over the start set
  std::size_t bracket_record = 0;         // index of the crossing step record
  Interval tau_local;                     // crossing window inside that record
};

namespace detail {

// directional sigma' = direction * <n, f(box)> via a field evaluation
inline Interval sigma_rate(const ad::Tape& tape, ad::Evaluator<Interval>& ev,
                           const SectionSpec& sec, const IntervalVector& box) {
  std::vector<Interval> in(tape.n_in), out(tape.n_in);
  for (int i = 0; i < tape.n_in; ++i) in[i] = box[i];
  ev.eval(in, out);
  Interval acc;
  for (int i = 0; i < tape.n_in; ++i)
    if (sec.normal[i] != 0.0) acc += Interval(sec.normal[i]) * out[i];
  return acc * Interval(double(sec.direction));
}

}  // namespace detail

/* Flow rf (already initialized) to the first directional crossing with sec.
 * The start set must not straddle the section.  Monotonicity of sigma in the
 * crossing zone is verified, which both localizes the crossing time for every
 * point of the set and rules out earlier directional crossings. */
inline CrossingOutput flow_to_section(RigorousFlow& rf, const ad::Tape& tape,
                                      const SectionSpec& sec, bool want_deriv,
                                      double max_time = 50.0) {
  ad::Evaluator<Interval> field_ev(tape);
  Interval s0 = sec.sigma(rf.hull());
  // a start on the section is allowed: the transversal-departure rules below
  // arm the search only after the set has wholly left the plane
  bool armed = s0.hi() < 0.0;

  int grow_retries = 0;
  double force_h = 0.0;
  while (true) {
    if (rf.time().lo() > max_time) throw NoCrossing("time budget exhausted");
    const StepRecord& rec = rf.step(force_h);
    force_h = 0.0;
    Interval th = Interval::unchecked(0.0, rec.h);
    Interval srange = sec.sigma(rec, th);
    Interval send = sec.sigma(rec, Interval(rec.h));

    if (!srange.contains_zero()) {
      if (armed && srange.lo() > 0.0)
        throw NoCrossing("internal: sign flip without bracketing");
      if (!armed && srange.hi() < 0.0) armed = true;
      continue;
    }

    // the step touches the section plane
    Interval rate = detail::sigma_rate(tape, field_ev, sec, rec.e);
    if (!armed) {
      if (rate.hi() < 0.0) continue;  // still moving to the negative side
      if (rate.lo() > 0.0 && send.lo() > 0.0) continue;  // departing to the far side
      if (send.hi() < 0.0 && rate.contains_zero()) {
        // try to resolve with pointwise evaluations in time
        bool clean = true;
        const int m = 16;
        for (int i = 0; i < m && clean; ++i) {
          Interval ti = Interval::unchecked(rec.h * i / m, rec.h * (i + 1) / m);
          Interval si = sec.sigma(rec, ti);
          if (si.contains_zero()) {
            Interval ri = detail::sigma_rate(tape, field_ev, sec, rec.eval_hull(ti));
            if (ri.hi() >= 0.0) clean = false;
          }
        }
        if (clean) continue;
      }
      throw TangentialCrossing("ambiguous section contact before arming");
    }

    if (rate.lo() <= 0.0) {
      throw TangentialCrossing("sigma-rate enclosure touches zero in the crossing step");
    }

    if (!(send.lo() > 0.0)) {
      // crossing spreads past the step end: redo with a longer step so the
      // whole set brackets inside one record
      if (grow_retries++ >= 8) throw NoCrossing("could not bracket the whole set in one step");
      double h_old = rec.h;
      rf.undo_last();
      force_h = std::min(h_old * 1.7, h_old + 0.1);
      continue;
    }

    // localization within the bracketing record
    const StepRecord& br = rf.records().back();
    double a = 0.0, b = br.h;
    // refine a: largest tau wholly negative
    {
      double lo = a, hi = br.h;
      for (int it = 0; it < 50; ++it) {
        double mdl = 0.5 * (lo + hi);
        if (sec.sigma(br, Interval(mdl)).hi() < 0.0)
          lo = mdl;
        else
          hi = mdl;
      }
      a = lo;
    }
    // refine b: smallest tau wholly positive
    {
      double lo = a, hi = br.h;
      for (int it = 0; it < 50; ++it) {
        double mdl = 0.5 * (lo + hi);
        if (sec.sigma(br, Interval(mdl)).lo() > 0.0)
          hi = mdl;
        else
          lo = mdl;
      }
      b = hi;
    }
    Interval T = Interval::unchecked(a, b);

    CrossingOutput out;
    IntervalMatrix A = br.eval_transition(T);
    out.c = br.eval_center(T);
    out.C = A * br.start.C;
    out.r0 = br.start.r0;
    out.B = A * br.start.B;
    out.r = br.start.r;
    out.hull = out.c + out.C * out.r0 + out.B * out.r;
    out.time = br.t0 + T;
    out.bracket_record = rf.records().size() - 1;
    out.tau_local = T;

    if (want_deriv) {
      if (!br.has_v) throw std::logic_error("derivative requested but not tracked");
      const std::size_t n = rf.dim();
      std::vector<Interval> in(n), f(n);
      for (std::size_t i = 0; i < n; ++i) in[i] = out.hull[i];
      field_ev.eval(in, f);
      Interval denom;
      for (std::size_t i = 0; i < n; ++i)
        if (sec.normal[i] != 0.0) denom += Interval(sec.normal[i]) * f[i];
      if (denom.contains_zero())
        throw TangentialCrossing("projection denominator encloses zero");
      IntervalMatrix proj = IntervalMatrix::identity(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (sec.normal[j] != 0.0)
            proj(i, j) = proj(i, j) - f[i] * Interval(sec.normal[j]) / denom;
      out.deriv = proj * (A * (br.Qv * br.Rv));
    }
    return out;
  }
}

/* ------------------------- tube enclosures ------------------------- */

struct TubeSegment {
  Interval t;          // global time window
  IntervalVector box;  // contains every trajectory point over the window
};

struct TubeEnclosure {
  std::vector<TubeSegment> segments;
};

// tube from retained step records, m sub-segments per step
inline TubeEnclosure tube_from_records(const std::vector<StepRecord>& recs, int m = 1,
                                       double t_cap = -1.0) {
  TubeEnclosure tube;
  for (const auto& rec : recs) {
    double hi_t = rec.h;
    for (int i = 0; i < m; ++i) {
      double ta = hi_t * i / m, tb = hi_t * (i + 1) / m;
      Interval tau = Interval::unchecked(ta, tb);
      TubeSegment seg;
      seg.t = rec.t0 + tau;
      if (t_cap >= 0.0 && seg.t.lo() > t_cap) return tube;
      seg.box = rec.eval_hull(tau);
      tube.segments.push_back(std::move(seg));
    }
  }
  return tube;
}

/* ------------------------- fast (double) propagation ------------------------- */

class FastFlow {
 public:
  FastFlow(const ad::Tape& tape, const IntegratorConfig& cfg)
      : tape_(&tape), cfg_(cfg), n_(tape.n_in), eng_(tape, cfg.order + 1, false) {}

  void init(std::span<const double> x0) {
    x_.assign(x0.begin(), x0.end());
    t_ = 0.0;
    h_next_ = cfg_.init_step;
  }

  const std::vector<double>& state() const { return x_; }
  double time() const { return t_; }

  // advance one step; returns the step size used
  double step(double h_request = 0.0, double h_cap = 0.0) {
    eng_.run(std::span<const double>(x_), cfg_.order);
    double h = h_request > 0.0 ? h_request : h_next_;
    if (h_request <= 0.0) {
      for (int k = std::max(2, cfg_.order / 2); k <= cfg_.order; ++k) {
        double mx = 0;
        for (std::size_t i = 0; i < n_; ++i) mx = std::max(mx, std::fabs(eng_.state(i, k)));
        if (mx > 0) h = std::min(h, 0.9 * std::pow(cfg_.tol / mx, 1.0 / k));
      }
      h = std::min(h, cfg_.max_step);
    }
    if (h_cap > 0.0) h = std::min(h, h_cap);
    last_h_ = h;
    for (std::size_t i = 0; i < n_; ++i) x_[i] = eval_component(i, h);
    for (double v : x_)
      if (!std::isfinite(v)) throw SingularityHit("non-finite state in fast flow");
    t_ += h;
    h_next_ = std::min(h * 1.2, cfg_.max_step);
    return h;
  }

  // series evaluation of component i at tau in [0, last step size] (call
  // before the next step overwrites the engine)
  double eval_component(std::size_t i, double tau) const {
    double acc = eng_.state(i, cfg_.order + 1);
    for (int k = cfg_.order; k >= 0; --k) acc = acc * tau + eng_.state(i, k);
    return acc;
  }
  double last_h() const { return last_h_; }
  const ad::TaylorEngine<double>& engine() const { return eng_; }

 private:
  const ad::Tape* tape_;
  IntegratorConfig cfg_;
  std::size_t n_;
  ad::TaylorEngine<double> eng_;
  std::vector<double> x_;
  double t_ = 0, h_next_ = 0.05, last_h_ = 0;
};

inline std::vector<double> flow_fast(const ad::Tape& tape, std::span<const double> x0,
                                     double t_star, const IntegratorConfig& cfg) {
  FastFlow ff(tape, cfg);
  ff.init(x0);
  while (ff.time() < t_star) ff.step(0.0, t_star - ff.time());
  return ff.state();
}

// first directional crossing of the double-precision trajectory; returns time
inline double fast_to_section(const ad::Tape& tape, std::vector<double>& x,
                              const SectionSpec& sec, const IntegratorConfig& cfg,
                              double max_time = 50.0) {
  FastFlow ff(tape, cfg);
  ff.init(x);
  auto sig = [&](const std::vector<double>& s) {
    double acc = -sec.offset;
    for (std::size_t i = 0; i < s.size(); ++i) acc += sec.normal[i] * s[i];
    return acc * sec.direction;
  };
  double s_prev = sig(ff.state());
  bool armed = s_prev < 0.0;
  while (ff.time() < max_time) {
    double t_before = ff.time();
    ff.step();
    double s_now = sig(ff.state());
    if (!armed) {
      if (s_now < 0.0) armed = true;
      s_prev = s_now;
      continue;
    }
    if (s_prev < 0.0 && s_now >= 0.0) {
      // Newton in tau on the step series
      double tau = ff.last_h() * s_prev / (s_prev - s_now);
      for (int it = 0; it < 60; ++it) {
        std::vector<double> pt(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) pt[i] = ff.eval_component(i, tau);
        // sigma and sigma' via series derivative
        double s = -sec.offset, ds = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (sec.normal[i] == 0.0) continue;
          s += sec.normal[i] * pt[i];
          double acc = 0;
          for (int k = cfg.order + 1; k >= 1; --k)
            acc = acc * tau + k * ff.engine().state(i, k);
          ds += sec.normal[i] * acc;
        }
        s *= sec.direction;
        ds *= sec.direction;
        double delta = s / ds;
        tau -= delta;
        if (std::fabs(delta) < 1e-15 * std::max(1.0, std::fabs(tau))) break;
      }
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = ff.eval_component(i, tau);
      return t_before + tau;
    }
    s_prev = s_now;
  }
  throw NoCrossing("fast flow: time budget exhausted");
}

}  // namespace reg3bp::flow

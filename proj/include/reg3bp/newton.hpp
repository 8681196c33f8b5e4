#pragma once

/* -----------------------------------------------------------------
 * Interval Newton operator, plain and parametrized.
 *
 * N(x, X) = x - [DF(X)^{-1}] [F(x)].  Containment N(x,X) in int(X)
 * certifies a zero in N(x,X); an empty intersection with X certifies
 * there is none.  The parametrized variant runs the same operator
 * with F and DxF evaluated over a parameter box I, certifying a C^1
 * family of zeros lambda -> x*(lambda).
 * ----------------------------------------------------------------- */

#include <functional>
#include <string>

#include "reg3bp/interval_linalg.hpp"

namespace reg3bp::rootfind {

using ivl::Interval;
using ivl::IntervalMatrix;
using ivl::IntervalVector;

enum class NewtonStatus { verified, no_conclusion, proved_empty };

struct NewtonOutcome {
  NewtonStatus status = NewtonStatus::no_conclusion;
  IntervalVector enclosure;  // meaningful iff status == verified
  int iterations = 0;
  std::string diagnostic;

  bool verified() const { return status == NewtonStatus::verified; }
};

struct NewtonOptions {
  int max_iterations = 30;   // contraction passes after first verification
  double stagnation = 4.0;   // stop when diameter improves by < this many ulps
};

namespace detail {

inline IntervalVector midpoint_vector(const IntervalVector& X) {
  IntervalVector x(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) x[i] = Interval(X[i].mid());
  return x;
}

}  // namespace detail

// F: IntervalVector (thin point box) -> IntervalVector enclosure of F there
// DF: IntervalVector (box) -> IntervalMatrix enclosure of the Jacobian
template <class Fn, class DFn>
NewtonOutcome interval_newton(Fn&& F, DFn&& DF, IntervalVector x, IntervalVector X,
                              const NewtonOptions& opt = {}) {
  NewtonOutcome out;
  for (int it = 0;; ++it) {
    out.iterations = it + 1;
    IntervalVector N(X.size());
    try {
      IntervalVector step = ivl::linear_solve_enclosure(DF(X), F(x));
      for (std::size_t i = 0; i < X.size(); ++i) N[i] = x[i] - step[i];
    } catch (const ivl::SingularEnclosure& e) {
      out.diagnostic = e.what();
      return out;  // no_conclusion
    }
    if (N.disjoint_from(X)) {
      out.status = NewtonStatus::proved_empty;
      return out;
    }
    if (!X.interior_contains(N)) {
      if (out.status == NewtonStatus::verified) return out;  // keep last good enclosure
      out.diagnostic = "N(x,X) not strictly inside X";
      return out;
    }
    // verified; contract and repeat until the width stagnates
    bool improved = false;
    for (std::size_t i = 0; i < X.size(); ++i) {
      double before = X[i].diam();
      double after = N[i].diam();
      double m = std::fabs(N[i].mid());
      double ulp = (ivl::rnd::next_up(std::max(m, 1e-300)) - std::max(m, 1e-300));
      if (before - after > opt.stagnation * ulp) improved = true;
    }
    out.status = NewtonStatus::verified;
    out.enclosure = N;
    X = N;
    x = detail::midpoint_vector(X);
    if (!improved || it + 1 >= opt.max_iterations) return out;
  }
}

// Parametrized operator: F(I, x) with a parameter box I held fixed.
// Verified means: for every lambda in I there is x*(lambda) in the enclosure
// with F(lambda, x*(lambda)) = 0, and x* is C^1.
template <class Fn, class DFn>
NewtonOutcome interval_newton_parametrized(Fn&& F, DFn&& DxF, IntervalVector x,
                                           const IntervalVector& I, IntervalVector X,
                                           const NewtonOptions& opt = {}) {
  auto Fp = [&](const IntervalVector& pt) { return F(I, pt); };
  auto DFp = [&](const IntervalVector& box) { return DxF(I, box); };
  return interval_newton(Fp, DFp, std::move(x), std::move(X), opt);
}

}  // namespace reg3bp::rootfind

#pragma once

/* -----------------------------------------------------------------
 * Outward-rounded interval arithmetic on binary64 endpoints.
 *
 * Directed rounding is realized without switching the FPU mode:
 * every elementary operation is evaluated in round-to-nearest
 * together with its exact residual (TwoSum, FMA), and an endpoint
 * is bumped by one ulp only when the residual shows the rounded
 * value lies on the wrong side.  Endpoints are therefore correctly
 * rounded, and values can migrate freely between threads.
 * ----------------------------------------------------------------- */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

namespace reg3bp::ivl {

struct DivisionByZeroInterval : std::runtime_error {
  DivisionByZeroInterval()
      : std::runtime_error("interval division by an interval containing zero") {}
};

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyIntersection : std::runtime_error {
  EmptyIntersection() : std::runtime_error("empty interval intersection") {}
};

struct SingularEnclosure : std::runtime_error {
  explicit SingularEnclosure(const std::string& what) : std::runtime_error(what) {}
};

namespace rnd {

inline double next_up(double x) noexcept {
  if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) return x;
  if (x == 0.0) return std::numeric_limits<double>::denorm_min();
  std::uint64_t b;
  std::memcpy(&b, &x, sizeof b);
  b += (b >> 63) ? std::uint64_t(-1) : std::uint64_t(1);
  std::memcpy(&x, &b, sizeof x);
  return x;
}

inline double next_down(double x) noexcept { return -next_up(-x); }

// Below this magnitude the FMA residual of a product/quotient may itself be
// inexact (subnormal territory); fall back to an unconditional bump.
inline constexpr double eft_guard = 1e-290;

inline double add_down(double a, double b) noexcept {
  double s = a + b;
  if (!std::isfinite(s))
    return s < 0 ? s : std::numeric_limits<double>::max();
  double bb = s - a;
  double err = (a - (s - bb)) + (b - bb);  // exact: a+b = s + err
  return err < 0.0 ? next_down(s) : s;
}

inline double add_up(double a, double b) noexcept {
  double s = a + b;
  if (!std::isfinite(s))
    return s > 0 ? s : -std::numeric_limits<double>::max();
  double bb = s - a;
  double err = (a - (s - bb)) + (b - bb);
  return err > 0.0 ? next_up(s) : s;
}

inline double sub_down(double a, double b) noexcept { return add_down(a, -b); }
inline double sub_up(double a, double b) noexcept { return add_up(a, -b); }

inline double mul_down(double a, double b) noexcept {
  double p = a * b;
  if (!std::isfinite(p))
    return p < 0 ? p : std::numeric_limits<double>::max();
  if (p == 0.0) {
    // one factor is zero, or the product underflowed to zero
    if (a == 0.0 || b == 0.0) return 0.0;
    return -std::numeric_limits<double>::denorm_min();
  }
  if (std::fabs(p) < eft_guard) return next_down(p);
  double err = std::fma(a, b, -p);  // exact: a*b = p + err
  return err < 0.0 ? next_down(p) : p;
}

inline double mul_up(double a, double b) noexcept {
  double p = a * b;
  if (!std::isfinite(p))
    return p > 0 ? p : -std::numeric_limits<double>::max();
  if (p == 0.0) {
    if (a == 0.0 || b == 0.0) return 0.0;
    return std::numeric_limits<double>::denorm_min();
  }
  if (std::fabs(p) < eft_guard) return next_up(p);
  double err = std::fma(a, b, -p);
  return err > 0.0 ? next_up(p) : p;
}

inline double div_down(double a, double b) noexcept {
  double q = a / b;
  if (!std::isfinite(q))
    return q < 0 ? q : std::numeric_limits<double>::max();
  if (q == 0.0) {
    if (a == 0.0) return 0.0;
    return -std::numeric_limits<double>::denorm_min();
  }
  if (std::fabs(q) < eft_guard || std::fabs(a) > 1e290) return next_down(q);
  double err = std::fma(q, b, -a);  // a - q*b = -err; a/b - q = -err/b
  bool exact_above = (err > 0.0) == (b > 0.0);  // true quotient below q
  if (err == 0.0) return q;
  return exact_above ? next_down(q) : q;
}

inline double div_up(double a, double b) noexcept {
  double q = a / b;
  if (!std::isfinite(q))
    return q > 0 ? q : -std::numeric_limits<double>::max();
  if (q == 0.0) {
    if (a == 0.0) return 0.0;
    return std::numeric_limits<double>::denorm_min();
  }
  if (std::fabs(q) < eft_guard || std::fabs(a) > 1e290) return next_up(q);
  double err = std::fma(q, b, -a);
  bool exact_below = (err < 0.0) == (b > 0.0);  // true quotient above q
  if (err == 0.0) return q;
  return exact_below ? next_up(q) : q;
}

inline double sqrt_down(double a) noexcept {
  if (a <= 0.0) return 0.0;
  double r = std::sqrt(a);
  if (r < eft_guard) return next_down(r);
  double err = std::fma(r, r, -a);  // r^2 - a; sqrt(a) < r iff err > 0
  return err > 0.0 ? next_down(r) : r;
}

inline double sqrt_up(double a) noexcept {
  if (a <= 0.0) return 0.0;
  double r = std::sqrt(a);
  if (r < eft_guard) return next_up(r);
  double err = std::fma(r, r, -a);
  return err < 0.0 ? next_up(r) : r;
}

}  // namespace rnd

class Interval {
 public:
  Interval() noexcept : lo_(0.0), hi_(0.0) {}
  Interval(double x) : lo_(x), hi_(x) {
    if (std::isnan(x)) throw DomainError("NaN interval endpoint");
  }
  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (std::isnan(lo) || std::isnan(hi) || lo > hi)
      throw DomainError("invalid interval endpoints");
  }

  static Interval hull(double a, double b) noexcept {
    Interval r;
    r.lo_ = std::min(a, b);
    r.hi_ = std::max(a, b);
    return r;
  }
  static Interval hull(const Interval& a, const Interval& b) noexcept {
    Interval r;
    r.lo_ = std::min(a.lo_, b.lo_);
    r.hi_ = std::max(a.hi_, b.hi_);
    return r;
  }
  // endpoints taken as given; caller guarantees lo <= hi
  static Interval unchecked(double lo, double hi) noexcept {
    Interval r;
    r.lo_ = lo;
    r.hi_ = hi;
    return r;
  }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }

  double mid() const noexcept {
    double m = 0.5 * (lo_ + hi_);
    if (!std::isfinite(m)) m = 0.5 * lo_ + 0.5 * hi_;
    return std::clamp(m, lo_, hi_);
  }
  // upper bound on the radius around mid()
  double rad() const noexcept {
    double m = mid();
    return std::max(rnd::sub_up(hi_, m), rnd::sub_up(m, lo_));
  }
  double diam() const noexcept { return rnd::sub_up(hi_, lo_); }

  bool is_finite() const noexcept { return std::isfinite(lo_) && std::isfinite(hi_); }
  bool is_point() const noexcept { return lo_ == hi_; }

  bool contains(double x) const noexcept { return lo_ <= x && x <= hi_; }
  bool contains(const Interval& o) const noexcept { return lo_ <= o.lo_ && o.hi_ <= hi_; }
  bool contains_zero() const noexcept { return lo_ <= 0.0 && 0.0 <= hi_; }
  bool subset_of(const Interval& o) const noexcept { return o.contains(*this); }
  bool interior_subset_of(const Interval& o) const noexcept {
    return o.lo_ < lo_ && hi_ < o.hi_;
  }
  bool disjoint_from(const Interval& o) const noexcept {
    return hi_ < o.lo_ || o.hi_ < lo_;
  }

  Interval operator-() const noexcept { return unchecked(-hi_, -lo_); }

  friend Interval operator+(const Interval& a, const Interval& b) noexcept {
    return unchecked(rnd::add_down(a.lo_, b.lo_), rnd::add_up(a.hi_, b.hi_));
  }
  friend Interval operator-(const Interval& a, const Interval& b) noexcept {
    return unchecked(rnd::sub_down(a.lo_, b.hi_), rnd::sub_up(a.hi_, b.lo_));
  }
  friend Interval operator*(const Interval& a, const Interval& b) noexcept {
    using namespace rnd;
    double lo, hi;
    if (a.lo_ >= 0.0) {
      if (b.lo_ >= 0.0) {
        lo = mul_down(a.lo_, b.lo_);
        hi = mul_up(a.hi_, b.hi_);
      } else if (b.hi_ <= 0.0) {
        lo = mul_down(a.hi_, b.lo_);
        hi = mul_up(a.lo_, b.hi_);
      } else {
        lo = mul_down(a.hi_, b.lo_);
        hi = mul_up(a.hi_, b.hi_);
      }
    } else if (a.hi_ <= 0.0) {
      if (b.lo_ >= 0.0) {
        lo = mul_down(a.lo_, b.hi_);
        hi = mul_up(a.hi_, b.lo_);
      } else if (b.hi_ <= 0.0) {
        lo = mul_down(a.hi_, b.hi_);
        hi = mul_up(a.lo_, b.lo_);
      } else {
        lo = mul_down(a.lo_, b.hi_);
        hi = mul_up(a.lo_, b.lo_);
      }
    } else {
      if (b.lo_ >= 0.0) {
        lo = mul_down(a.lo_, b.hi_);
        hi = mul_up(a.hi_, b.hi_);
      } else if (b.hi_ <= 0.0) {
        lo = mul_down(a.hi_, b.lo_);
        hi = mul_up(a.lo_, b.lo_);
      } else {
        lo = std::min(mul_down(a.lo_, b.hi_), mul_down(a.hi_, b.lo_));
        hi = std::max(mul_up(a.lo_, b.lo_), mul_up(a.hi_, b.hi_));
      }
    }
    return unchecked(lo, hi);
  }
  friend Interval operator/(const Interval& a, const Interval& b) {
    using namespace rnd;
    if (b.contains_zero()) throw DivisionByZeroInterval();
    double lo, hi;
    if (b.lo_ > 0.0) {
      if (a.lo_ >= 0.0) {
        lo = div_down(a.lo_, b.hi_);
        hi = div_up(a.hi_, b.lo_);
      } else if (a.hi_ <= 0.0) {
        lo = div_down(a.lo_, b.lo_);
        hi = div_up(a.hi_, b.hi_);
      } else {
        lo = div_down(a.lo_, b.lo_);
        hi = div_up(a.hi_, b.lo_);
      }
    } else {
      if (a.lo_ >= 0.0) {
        lo = div_down(a.hi_, b.hi_);
        hi = div_up(a.lo_, b.lo_);
      } else if (a.hi_ <= 0.0) {
        lo = div_down(a.hi_, b.lo_);
        hi = div_up(a.lo_, b.hi_);
      } else {
        lo = div_down(a.hi_, b.hi_);
        hi = div_up(a.lo_, b.hi_);
      }
    }
    return unchecked(lo, hi);
  }

  Interval& operator+=(const Interval& o) noexcept { return *this = *this + o; }
  Interval& operator-=(const Interval& o) noexcept { return *this = *this - o; }
  Interval& operator*=(const Interval& o) noexcept { return *this = *this * o; }
  Interval& operator/=(const Interval& o) { return *this = *this / o; }

  friend bool operator==(const Interval& a, const Interval& b) noexcept {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

 private:
  double lo_, hi_;
};

inline Interval operator+(double a, const Interval& b) noexcept { return Interval(a) + b; }
inline Interval operator+(const Interval& a, double b) noexcept { return a + Interval(b); }
inline Interval operator-(double a, const Interval& b) noexcept { return Interval(a) - b; }
inline Interval operator-(const Interval& a, double b) noexcept { return a - Interval(b); }
inline Interval operator*(double a, const Interval& b) noexcept { return Interval(a) * b; }
inline Interval operator*(const Interval& a, double b) noexcept { return a * Interval(b); }
inline Interval operator/(double a, const Interval& b) { return Interval(a) / b; }
inline Interval operator/(const Interval& a, double b) { return a / Interval(b); }

inline Interval sqr(const Interval& x) noexcept {
  using namespace rnd;
  if (x.lo() >= 0.0)
    return Interval::unchecked(mul_down(x.lo(), x.lo()), mul_up(x.hi(), x.hi()));
  if (x.hi() <= 0.0)
    return Interval::unchecked(mul_down(x.hi(), x.hi()), mul_up(x.lo(), x.lo()));
  return Interval::unchecked(0.0, std::max(mul_up(x.lo(), x.lo()), mul_up(x.hi(), x.hi())));
}

// Enclosure of sqrt on x intersected with [0, inf); the negative part, when
// present, is clamped.  Throws when the whole interval is negative.
inline Interval sqrt(const Interval& x) {
  if (x.hi() < 0.0) throw DomainError("sqrt of a negative interval");
  double lo = x.lo() <= 0.0 ? 0.0 : rnd::sqrt_down(x.lo());
  return Interval::unchecked(lo, rnd::sqrt_up(x.hi()));
}

inline Interval abs(const Interval& x) noexcept {
  if (x.lo() >= 0.0) return x;
  if (x.hi() <= 0.0) return -x;
  return Interval::unchecked(0.0, std::max(-x.lo(), x.hi()));
}

inline Interval pow_i(const Interval& x, int n) {
  if (n < 0) return 1.0 / pow_i(x, -n);
  Interval acc(1.0), base = x;
  while (n > 0) {
    if (n & 1) acc *= base;
    base = sqr(base);
    n >>= 1;
  }
  return acc;
}

inline Interval intersect(const Interval& a, const Interval& b) {
  double lo = std::max(a.lo(), b.lo());
  double hi = std::min(a.hi(), b.hi());
  if (lo > hi) throw EmptyIntersection();
  return Interval::unchecked(lo, hi);
}

inline std::optional<Interval> try_intersect(const Interval& a, const Interval& b) noexcept {
  double lo = std::max(a.lo(), b.lo());
  double hi = std::min(a.hi(), b.hi());
  if (lo > hi) return std::nullopt;
  return Interval::unchecked(lo, hi);
}

inline Interval inflate(const Interval& x, double r) noexcept {
  return Interval::unchecked(rnd::sub_down(x.lo(), r), rnd::add_up(x.hi(), r));
}

inline double mag(const Interval& x) noexcept {
  return std::max(std::fabs(x.lo()), std::fabs(x.hi()));
}
inline double mig(const Interval& x) noexcept {
  if (x.contains_zero()) return 0.0;
  return std::min(std::fabs(x.lo()), std::fabs(x.hi()));
}

inline std::ostream& operator<<(std::ostream& os, const Interval& x) {
  char buf[80];
  std::snprintf(buf, sizeof buf, "[%.17g, %.17g]", x.lo(), x.hi());
  return os << buf;
}

}  // namespace reg3bp::ivl

#pragma once

/* -----------------------------------------------------------------
 * Interval vectors and matrices, plus a verified enclosure of the
 * inverse of an interval matrix (midpoint preconditioning followed
 * by a Neumann-series residual bound).
 * ----------------------------------------------------------------- */

#include <cassert>
#include <cstddef>
#include <vector>

#include "reg3bp/interval.hpp"

namespace reg3bp::ivl {

class IntervalVector {
 public:
  IntervalVector() = default;
  explicit IntervalVector(std::size_t n) : v_(n) {}
  IntervalVector(std::initializer_list<Interval> init) : v_(init) {}

  std::size_t size() const noexcept { return v_.size(); }
  Interval& operator[](std::size_t i) { return v_[i]; }
  const Interval& operator[](std::size_t i) const { return v_[i]; }

  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  friend IntervalVector operator+(const IntervalVector& a, const IntervalVector& b) {
    assert(a.size() == b.size());
    IntervalVector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
  }
  friend IntervalVector operator-(const IntervalVector& a, const IntervalVector& b) {
    assert(a.size() == b.size());
    IntervalVector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
  }
  friend IntervalVector operator*(const Interval& s, const IntervalVector& a) {
    IntervalVector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
    return r;
  }
  IntervalVector operator-() const {
    IntervalVector r(size());
    for (std::size_t i = 0; i < size(); ++i) r[i] = -v_[i];
    return r;
  }

  bool contains(const IntervalVector& o) const {
    if (o.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (!v_[i].contains(o[i])) return false;
    return true;
  }
  bool interior_contains(const IntervalVector& o) const {
    if (o.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (!o[i].interior_subset_of(v_[i])) return false;
    return true;
  }
  bool disjoint_from(const IntervalVector& o) const {
    for (std::size_t i = 0; i < size(); ++i)
      if (v_[i].disjoint_from(o[i])) return true;
    return false;
  }
  double max_diam() const {
    double d = 0.0;
    for (const auto& x : v_) d = std::max(d, x.diam());
    return d;
  }
  std::vector<double> mid() const {
    std::vector<double> m(size());
    for (std::size_t i = 0; i < size(); ++i) m[i] = v_[i].mid();
    return m;
  }

  static IntervalVector hull(const IntervalVector& a, const IntervalVector& b) {
    assert(a.size() == b.size());
    IntervalVector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = Interval::hull(a[i], b[i]);
    return r;
  }

 private:
  std::vector<Interval> v_;
};

class IntervalMatrix {
 public:
  IntervalMatrix() = default;
  IntervalMatrix(std::size_t rows, std::size_t cols) : r_(rows), c_(cols), m_(rows * cols) {}

  static IntervalMatrix identity(std::size_t n) {
    IntervalMatrix I(n, n);
    for (std::size_t i = 0; i < n; ++i) I(i, i) = Interval(1.0);
    return I;
  }

  std::size_t rows() const noexcept { return r_; }
  std::size_t cols() const noexcept { return c_; }
  Interval& operator()(std::size_t i, std::size_t j) { return m_[i * c_ + j]; }
  const Interval& operator()(std::size_t i, std::size_t j) const { return m_[i * c_ + j]; }

  friend IntervalMatrix operator+(const IntervalMatrix& a, const IntervalMatrix& b) {
    assert(a.r_ == b.r_ && a.c_ == b.c_);
    IntervalMatrix r(a.r_, a.c_);
    for (std::size_t i = 0; i < a.m_.size(); ++i) r.m_[i] = a.m_[i] + b.m_[i];
    return r;
  }
  friend IntervalMatrix operator-(const IntervalMatrix& a, const IntervalMatrix& b) {
    assert(a.r_ == b.r_ && a.c_ == b.c_);
    IntervalMatrix r(a.r_, a.c_);
    for (std::size_t i = 0; i < a.m_.size(); ++i) r.m_[i] = a.m_[i] - b.m_[i];
    return r;
  }
  friend IntervalMatrix operator*(const IntervalMatrix& a, const IntervalMatrix& b) {
    assert(a.c_ == b.r_);
    IntervalMatrix r(a.r_, b.c_);
    for (std::size_t i = 0; i < a.r_; ++i)
      for (std::size_t j = 0; j < b.c_; ++j) {
        Interval acc;
        for (std::size_t k = 0; k < a.c_; ++k) acc += a(i, k) * b(k, j);
        r(i, j) = acc;
      }
    return r;
  }
  friend IntervalVector operator*(const IntervalMatrix& a, const IntervalVector& x) {
    assert(a.c_ == x.size());
    IntervalVector r(a.r_);
    for (std::size_t i = 0; i < a.r_; ++i) {
      Interval acc;
      for (std::size_t k = 0; k < a.c_; ++k) acc += a(i, k) * x[k];
      r[i] = acc;
    }
    return r;
  }
  friend IntervalMatrix operator*(const Interval& s, const IntervalMatrix& a) {
    IntervalMatrix r(a.r_, a.c_);
    for (std::size_t i = 0; i < a.m_.size(); ++i) r.m_[i] = s * a.m_[i];
    return r;
  }

  IntervalMatrix transpose() const {
    IntervalMatrix t(c_, r_);
    for (std::size_t i = 0; i < r_; ++i)
      for (std::size_t j = 0; j < c_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  std::vector<double> mid() const {
    std::vector<double> m(m_.size());
    for (std::size_t i = 0; i < m_.size(); ++i) m[i] = m_[i].mid();
    return m;
  }
  double max_diam() const {
    double d = 0.0;
    for (const auto& x : m_) d = std::max(d, x.diam());
    return d;
  }

 private:
  std::size_t r_ = 0, c_ = 0;
  std::vector<Interval> m_;
};

namespace detail {

// plain double Gauss-Jordan inverse with partial pivoting; empty on failure
inline std::vector<double> approx_inverse(const std::vector<double>& a, std::size_t n) {
  std::vector<double> m = a, inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(m[r * n + col]) > std::fabs(m[piv * n + col])) piv = r;
    if (m[piv * n + col] == 0.0) return {};
    if (piv != col)
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(m[piv * n + j], m[col * n + j]);
        std::swap(inv[piv * n + j], inv[col * n + j]);
      }
    double d = m[col * n + col];
    for (std::size_t j = 0; j < n; ++j) {
      m[col * n + j] /= d;
      inv[col * n + j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = m[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        m[r * n + j] -= f * m[col * n + j];
        inv[r * n + j] -= f * inv[col * n + j];
      }
    }
  }
  for (double x : inv)
    if (!std::isfinite(x)) return {};
  return inv;
}

}  // namespace detail

// Verified enclosure of {B^{-1} : B in A}.  R = approximate midpoint inverse,
// D = I - R*A; if ||D||_inf < 1 then B^{-1} = (I - D_B)^{-1} R lies in
// R + [-delta_j, delta_j] columnwise with delta_j = e/(1-e) * max_i |R_ij|.
inline IntervalMatrix verified_inverse(const IntervalMatrix& A) {
  const std::size_t n = A.rows();
  if (n != A.cols()) throw SingularEnclosure("verified_inverse: not square");
  std::vector<double> Rm = detail::approx_inverse(A.mid(), n);
  if (Rm.empty()) throw SingularEnclosure("verified_inverse: midpoint inverse failed");

  IntervalMatrix R(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) R(i, j) = Interval(Rm[i * n + j]);

  // D = I - R*A
  IntervalMatrix D = IntervalMatrix::identity(n) - R * A;
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row = rnd::add_up(row, mag(D(i, j)));
    e = std::max(e, row);
  }
  if (!(e < 1.0))
    throw SingularEnclosure("verified_inverse: residual norm " + std::to_string(e) +
                            " >= 1, invertibility not established");

  double factor = rnd::div_up(e, rnd::sub_down(1.0, e));
  IntervalMatrix out(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double cmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) cmax = std::max(cmax, std::fabs(Rm[i * n + j]));
    double delta = rnd::mul_up(factor, cmax);
    for (std::size_t i = 0; i < n; ++i)
      out(i, j) = R(i, j) + Interval::unchecked(-delta, delta);
  }
  return out;
}

// Enclosure of {B^{-1} c : B in A, c in b}; throws SingularEnclosure when the
// invertibility of A cannot be verified.
inline IntervalVector linear_solve_enclosure(const IntervalMatrix& A, const IntervalVector& b) {
  return verified_inverse(A) * b;
}

}  // namespace reg3bp::ivl

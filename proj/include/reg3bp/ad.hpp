#pragma once

/* -----------------------------------------------------------------
 * A small straight-line expression tape with three execution modes:
 *
 *   - plain evaluation (double or Interval scalars),
 *   - forward-mode derivatives (Jacobian rows alongside values),
 *   - recurrent Taylor coefficients of an ODE solution, optionally
 *     with derivatives of every coefficient w.r.t. the initial state
 *     (the coefficients of the variational equations).
 *
 * Vector fields are written once as templated formulas and recorded
 * onto a tape via the Var operator overloads.
 * ----------------------------------------------------------------- */

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "reg3bp/interval.hpp"

namespace reg3bp::ad {

using ivl::Interval;

enum class Op : std::uint8_t { in, konst, add, sub, mul, div, sqrt_, neg, sqr };

struct Ins {
  Op op;
  std::uint16_t out, a, b;
};

struct Tape {
  int n_in = 0;
  int n_reg = 0;
  std::vector<Ins> code;
  std::vector<Interval> consts;        // constant value per konst register
  std::vector<std::uint16_t> k_reg;    // register of each constant
  std::vector<std::uint16_t> outputs;  // registers holding the tape outputs

  std::size_t n_out() const { return outputs.size(); }
};

class Builder;

struct Var {
  Builder* b = nullptr;
  std::uint16_t reg = 0;
};

class Builder {
 public:
  Var input() {
    if (!inputs_done_) tape_.n_in++;
    return Var{this, fresh()};
  }
  Var constant(const Interval& c) {
    inputs_done_ = true;
    std::uint64_t key[2];
    std::memcpy(key, &c, sizeof key);
    auto it = const_cache_.find({key[0], key[1]});
    if (it != const_cache_.end()) return Var{this, it->second};
    std::uint16_t r = fresh();
    tape_.consts.push_back(c);
    tape_.k_reg.push_back(r);
    const_cache_[{key[0], key[1]}] = r;
    return Var{this, r};
  }
  Var constant(double c) { return constant(Interval(c)); }

  Var emit(Op op, Var a, Var b = {}) {
    inputs_done_ = true;
    std::uint16_t r = fresh();
    tape_.code.push_back(Ins{op, r, a.reg, b.reg});
    return Var{this, r};
  }
  void output(Var v) { tape_.outputs.push_back(v.reg); }

  Tape take() { return std::move(tape_); }

 private:
  std::uint16_t fresh() { return static_cast<std::uint16_t>(tape_.n_reg++); }

  Tape tape_;
  bool inputs_done_ = false;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint16_t> const_cache_;
};

inline Var operator+(Var a, Var b) { return a.b->emit(Op::add, a, b); }
inline Var operator-(Var a, Var b) { return a.b->emit(Op::sub, a, b); }
inline Var operator*(Var a, Var b) { return a.b->emit(Op::mul, a, b); }
inline Var operator/(Var a, Var b) { return a.b->emit(Op::div, a, b); }
inline Var operator-(Var a) { return a.b->emit(Op::neg, a); }
inline Var sqrt(Var a) { return a.b->emit(Op::sqrt_, a); }
inline Var sqr(Var a) { return a.b->emit(Op::sqr, a); }

inline Var operator+(Var a, double c) { return a + a.b->constant(c); }
inline Var operator+(double c, Var a) { return a.b->constant(c) + a; }
inline Var operator-(Var a, double c) { return a - a.b->constant(c); }
inline Var operator-(double c, Var a) { return a.b->constant(c) - a; }
inline Var operator*(Var a, double c) { return a * a.b->constant(c); }
inline Var operator*(double c, Var a) { return a.b->constant(c) * a; }
inline Var operator/(Var a, double c) { return a / a.b->constant(c); }
inline Var operator/(double c, Var a) { return a.b->constant(c) / a; }
inline Var operator+(Var a, const Interval& c) { return a + a.b->constant(c); }
inline Var operator+(const Interval& c, Var a) { return a.b->constant(c) + a; }
inline Var operator-(Var a, const Interval& c) { return a - a.b->constant(c); }
inline Var operator-(const Interval& c, Var a) { return a.b->constant(c) - a; }
inline Var operator*(Var a, const Interval& c) { return a * a.b->constant(c); }
inline Var operator*(const Interval& c, Var a) { return a.b->constant(c) * a; }
inline Var operator/(Var a, const Interval& c) { return a / a.b->constant(c); }
inline Var operator/(const Interval& c, Var a) { return a.b->constant(c) / a; }

inline double sqr(double x) { return x * x; }

namespace detail {
template <class S>
S to_scalar(const Interval& c);
template <>
inline double to_scalar<double>(const Interval& c) {
  return c.mid();
}
template <>
inline Interval to_scalar<Interval>(const Interval& c) {
  return c;
}
inline double s_sqrt(double x) { return std::sqrt(x); }
inline Interval s_sqrt(const Interval& x) { return ivl::sqrt(x); }
inline double s_sqr(double x) { return x * x; }
inline Interval s_sqr(const Interval& x) { return ivl::sqr(x); }
}  // namespace detail

/* Plain evaluation with reusable scratch. */
template <class S>
class Evaluator {
 public:
  explicit Evaluator(const Tape& t) : t_(&t), reg_(t.n_reg) {
    for (std::size_t i = 0; i < t.consts.size(); ++i)
      reg_[t.k_reg[i]] = detail::to_scalar<S>(t.consts[i]);
  }

  // values only
  void eval(std::span<const S> in, std::span<S> out) {
    for (int i = 0; i < t_->n_in; ++i) reg_[i] = in[i];
    for (const Ins& I : t_->code) run(I);
    for (std::size_t i = 0; i < t_->outputs.size(); ++i) out[i] = reg_[t_->outputs[i]];
  }

  // values plus Jacobian w.r.t. all inputs (row-major out_jac[i*n_in + j])
  void eval_jac(std::span<const S> in, std::span<S> out, std::span<S> out_jac) {
    const int n = t_->n_in;
    if (d_.empty()) d_.assign(static_cast<std::size_t>(t_->n_reg) * n, S{});
    for (auto& x : d_) x = S{};
    for (int i = 0; i < n; ++i) {
      reg_[i] = in[i];
      d_[static_cast<std::size_t>(i) * n + i] = S(1.0);
    }
    for (const Ins& I : t_->code) run_d(I, n);
    for (std::size_t i = 0; i < t_->outputs.size(); ++i) {
      out[i] = reg_[t_->outputs[i]];
      for (int j = 0; j < n; ++j)
        out_jac[i * n + j] = d_[static_cast<std::size_t>(t_->outputs[i]) * n + j];
    }
  }

 private:
  void run(const Ins& I) {
    S* r = reg_.data();
    switch (I.op) {
      case Op::add: r[I.out] = r[I.a] + r[I.b]; break;
      case Op::sub: r[I.out] = r[I.a] - r[I.b]; break;
      case Op::mul: r[I.out] = r[I.a] * r[I.b]; break;
      case Op::div: r[I.out] = r[I.a] / r[I.b]; break;
      case Op::sqrt_: r[I.out] = detail::s_sqrt(r[I.a]); break;
      case Op::sqr: r[I.out] = detail::s_sqr(r[I.a]); break;
      case Op::neg: r[I.out] = -r[I.a]; break;
      default: break;
    }
  }
  void run_d(const Ins& I, int n) {
    run(I);
    S* r = reg_.data();
    auto D = [&](std::uint16_t reg, int j) -> S& {
      return d_[static_cast<std::size_t>(reg) * n + j];
    };
    switch (I.op) {
      case Op::add:
        for (int j = 0; j < n; ++j) D(I.out, j) = D(I.a, j) + D(I.b, j);
        break;
      case Op::sub:
        for (int j = 0; j < n; ++j) D(I.out, j) = D(I.a, j) - D(I.b, j);
        break;
      case Op::mul:
        for (int j = 0; j < n; ++j) D(I.out, j) = D(I.a, j) * r[I.b] + r[I.a] * D(I.b, j);
        break;
      case Op::div:
        for (int j = 0; j < n; ++j)
          D(I.out, j) = (D(I.a, j) - r[I.out] * D(I.b, j)) / r[I.b];
        break;
      case Op::sqrt_: {
        S two_r = r[I.out] + r[I.out];
        for (int j = 0; j < n; ++j) D(I.out, j) = D(I.a, j) / two_r;
        break;
      }
      case Op::sqr:
        for (int j = 0; j < n; ++j) D(I.out, j) = (r[I.a] + r[I.a]) * D(I.a, j);
        break;
      case Op::neg:
        for (int j = 0; j < n; ++j) D(I.out, j) = -D(I.a, j);
        break;
      default: break;
    }
  }

  const Tape* t_;
  std::vector<S> reg_;
  std::vector<S> d_;
};

/* -----------------------------------------------------------------
 * Recurrent Taylor coefficients of x' = f(x) for a tape with
 * n_in state inputs and n_in outputs.  After run(p):
 *   state coefficient slots hold x[0..p+1],
 * and in dual mode also d x[k] / d x0[j] for the same range.
 * ----------------------------------------------------------------- */
template <class S>
class TaylorEngine {
 public:
  TaylorEngine(const Tape& t, int max_order, bool with_duals)
      : t_(&t),
        cap_(max_order + 3),
        nd_(with_duals ? t.n_in : 0),
        c_(static_cast<std::size_t>(t.n_reg) * cap_),
        d_(static_cast<std::size_t>(t.n_reg) * nd_ * cap_) {}

  int capacity_order() const { return cap_ - 3; }
  bool has_duals() const { return nd_ > 0; }

  void run(std::span<const S> x0, int p) {
    const int n = t_->n_in;
    for (auto& x : c_) x = S{};
    for (auto& x : d_) x = S{};
    for (std::size_t i = 0; i < t_->consts.size(); ++i)
      c_[idx(t_->k_reg[i], 0)] = detail::to_scalar<S>(t_->consts[i]);
    for (int i = 0; i < n; ++i) {
      c_[idx(i, 0)] = x0[i];
      if (nd_) d_[didx(i, i, 0)] = S(1.0);
    }
    for (int k = 0; k <= p; ++k) {
      for (const Ins& I : t_->code) sweep(I, k);
      for (int i = 0; i < n; ++i) {
        S inv_k1 = S(1.0) / S(double(k + 1));
        c_[idx(i, k + 1)] = c_[idx(t_->outputs[i], k)] * inv_k1;
        for (int j = 0; j < nd_; ++j)
          d_[didx(i, j, k + 1)] = d_[didx(t_->outputs[i], j, k)] * inv_k1;
      }
    }
    ran_order_ = p;
  }

  // x[k], the k-th Taylor coefficient of the solution component `var`
  const S& state(int var, int k) const { return c_[idx(var, k)]; }
  // d x[k] / d x0[dir]
  const S& state_dual(int var, int dir, int k) const { return d_[didx(var, dir, k)]; }
  int ran_order() const { return ran_order_; }

 private:
  std::size_t idx(int reg, int k) const { return static_cast<std::size_t>(reg) * cap_ + k; }
  std::size_t didx(int reg, int dir, int k) const {
    return (static_cast<std::size_t>(reg) * nd_ + dir) * cap_ + k;
  }

  void sweep(const Ins& I, int k) {
    S* c = c_.data();
    const std::size_t oa = idx(I.a, 0), ob = idx(I.b, 0), oo = idx(I.out, 0);
    switch (I.op) {
      case Op::add: c[oo + k] = c[oa + k] + c[ob + k]; break;
      case Op::sub: c[oo + k] = c[oa + k] - c[ob + k]; break;
      case Op::neg: c[oo + k] = -c[oa + k]; break;
      case Op::mul: {
        S acc{};
        for (int i = 0; i <= k; ++i) acc += c[oa + i] * c[ob + k - i];
        c[oo + k] = acc;
        break;
      }
      case Op::sqr: {
        if (k == 0) {
          c[oo] = detail::s_sqr(c[oa]);
        } else {
          S acc{};
          for (int i = 0; 2 * i < k; ++i) acc += c[oa + i] * c[oa + k - i];
          acc = acc + acc;
          if (k % 2 == 0) acc += detail::s_sqr(c[oa + k / 2]);
          c[oo + k] = acc;
        }
        break;
      }
      case Op::div: {
        S acc = c[oa + k];
        for (int i = 0; i < k; ++i) acc -= c[oo + i] * c[ob + k - i];
        c[oo + k] = acc / c[ob];
        break;
      }
      case Op::sqrt_: {
        if (k == 0) {
          c[oo] = detail::s_sqrt(c[oa]);
        } else {
          S acc = c[oa + k];
          for (int i = 1; i < k; ++i) acc -= c[oo + i] * c[oo + k - i];
          c[oo + k] = acc / (c[oo] + c[oo]);
        }
        break;
      }
      default: break;
    }
    if (!nd_) return;
    S* d = d_.data();
    for (int j = 0; j < nd_; ++j) {
      const std::size_t da = didx(I.a, j, 0), db = didx(I.b, j, 0), dq = didx(I.out, j, 0);
      switch (I.op) {
        case Op::add: d[dq + k] = d[da + k] + d[db + k]; break;
        case Op::sub: d[dq + k] = d[da + k] - d[db + k]; break;
        case Op::neg: d[dq + k] = -d[da + k]; break;
        case Op::mul: {
          S acc{};
          for (int i = 0; i <= k; ++i)
            acc += d[da + i] * c[ob + k - i] + c[oa + i] * d[db + k - i];
          d[dq + k] = acc;
          break;
        }
        case Op::sqr: {
          S acc{};
          for (int i = 0; i <= k; ++i) acc += c[oa + i] * d[da + k - i];
          d[dq + k] = acc + acc;
          break;
        }
        case Op::div: {
          S acc = d[da + k];
          for (int i = 0; i < k; ++i) acc -= d[dq + i] * c[ob + k - i];
          for (int i = 0; i <= k; ++i) acc -= c[oo + i] * d[db + k - i];
          d[dq + k] = acc / c[ob];
          break;
        }
        case Op::sqrt_: {
          S acc = d[da + k];
          for (int i = 0; i < k; ++i) acc -= (c[oo + k - i] + c[oo + k - i]) * d[dq + i];
          d[dq + k] = acc / (c[oo] + c[oo]);
          break;
        }
        default: break;
      }
    }
  }

  const Tape* t_;
  int cap_;
  int nd_;
  int ran_order_ = -1;
  std::vector<S> c_;
  std::vector<S> d_;
};

}  // namespace reg3bp::ad

#pragma once

/**
 * @file signal.hpp
 * @brief Bounded measurable signals and left-continuous bounded-variation
 * signals (finitely many jumps plus an absolutely continuous part).
 */

#include "patchy/core.hpp"

#include <map>
#include <optional>
#include <random>
#include <sstream>

namespace patchy {

namespace detail {

template <class F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                            int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

/// Adaptive Simpson quadrature of a scalar function on [a, b].
template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol = 1e-10, int max_depth = 40) {
  if (!(b > a)) return 0.0;
  // Seed with a few panels so narrow features are not missed.
  constexpr int panels = 8;
  double h = (b - a) / panels;
  double acc = 0.0;
  for (int k = 0; k < panels; ++k) {
    double lo = a + k * h, hi = (k + 1 == panels) ? b : a + (k + 1) * h;
    double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    acc += adaptive_simpson_rec(f, lo, hi, fa, fm, fb, whole, tol / panels, max_depth);
  }
  return acc;
}

/// Portable uniform double in [0, 1) from a 64-bit engine.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// One smooth piece of a signal, supported on [t0, t1).
struct SignalPiece {
  enum class Kind { constant, linear, sinusoid, custom };

  double t0 = 0.0;
  double t1 = 0.0;
  Kind kind = Kind::custom;
  /// constant: {c}; linear: {a, b} with a + b (t - t0); sinusoid: {amp, omega, phase}
  /// with amp * sin(omega t + phase) componentwise.
  std::vector<Vec> params;
  TimeFunction fn;

  Vec operator()(double t) const { return fn(t); }

  /// Exact integral over [a, b] (a subset of the support) when the kind allows it.
  std::optional<Vec> closed_form_integral(double a, double b) const {
    switch (kind) {
      case Kind::constant:
        return Vec(params[0] * (b - a));
      case Kind::linear: {
        double ia = a - t0, ib = b - t0;
        return Vec(params[0] * (b - a) + params[1] * (0.5 * (ib * ib - ia * ia)));
      }
      case Kind::sinusoid: {
        const Vec& amp = params[0];
        const Vec& om = params[1];
        const Vec& ph = params[2];
        Vec out(amp.size());
        for (Eigen::Index k = 0; k < amp.size(); ++k) {
          if (om[k] == 0.0)
            out[k] = amp[k] * std::sin(ph[k]) * (b - a);
          else
            out[k] = -amp[k] / om[k] * (std::cos(om[k] * b + ph[k]) - std::cos(om[k] * a + ph[k]));
        }
        return out;
      }
      case Kind::custom:
        break;
    }
    return std::nullopt;
  }
};

/// A bounded measurable signal given as a sum of smooth pieces. Overlapping
/// pieces add up, so the sum of two signals is the concatenation of their
/// pieces.
class PiecewiseSignal {
 public:
  PiecewiseSignal() = default;
  explicit PiecewiseSignal(Eigen::Index dim) : dim_(dim) {}

  static PiecewiseSignal zero(Eigen::Index dim) { return PiecewiseSignal(dim); }

  static SignalPiece constant_piece(double t0, double t1, Vec c) {
    SignalPiece p;
    p.t0 = t0;
    p.t1 = t1;
    p.kind = SignalPiece::Kind::constant;
    p.params = {c};
    p.fn = [c](double) { return c; };
    return p;
  }

  static SignalPiece linear_piece(double t0, double t1, Vec a, Vec b) {
    SignalPiece p;
    p.t0 = t0;
    p.t1 = t1;
    p.kind = SignalPiece::Kind::linear;
    p.params = {a, b};
    p.fn = [a, b, t0](double t) { return Vec(a + b * (t - t0)); };
    return p;
  }

  static SignalPiece sinusoid_piece(double t0, double t1, Vec amp, Vec omega, Vec phase) {
    SignalPiece p;
    p.t0 = t0;
    p.t1 = t1;
    p.kind = SignalPiece::Kind::sinusoid;
    p.params = {amp, omega, phase};
    p.fn = [amp, omega, phase](double t) {
      return Vec((amp.array() * (omega.array() * t + phase.array()).sin()).matrix());
    };
    return p;
  }

  static SignalPiece custom_piece(double t0, double t1, TimeFunction fn) {
    SignalPiece p;
    p.t0 = t0;
    p.t1 = t1;
    p.kind = SignalPiece::Kind::custom;
    p.fn = std::move(fn);
    return p;
  }

  static PiecewiseSignal constant(double t0, double t1, Vec c) {
    PiecewiseSignal s(c.size());
    s.add(constant_piece(t0, t1, std::move(c)));
    return s;
  }

  PiecewiseSignal& add(SignalPiece piece) {
    if (!(piece.t1 > piece.t0)) throw ValidationError("signal piece: empty support");
    if (!piece.fn) throw ValidationError("signal piece: missing function");
    Vec probe = piece.fn(piece.t0);
    if (dim_ < 0) dim_ = probe.size();
    if (probe.size() != dim_) throw ValidationError("signal piece: dimension mismatch");
    pieces_.push_back(std::move(piece));
    return *this;
  }

  PiecewiseSignal operator+(const PiecewiseSignal& other) const {
    PiecewiseSignal out = *this;
    if (out.dim_ < 0) out.dim_ = other.dim_;
    for (const auto& p : other.pieces_) out.add(p);
    return out;
  }

  PiecewiseSignal scaled(double factor) const {
    PiecewiseSignal out(dim_);
    for (const auto& p : pieces_) {
      SignalPiece q = p;
      if (q.kind == SignalPiece::Kind::sinusoid)
        q.params[0] *= factor;  // omega and phase are not amplitudes
      else
        for (auto& v : q.params) v *= factor;
      auto f = p.fn;
      q.fn = [f, factor](double t) { return Vec(factor * f(t)); };
      out.pieces_.push_back(std::move(q));
    }
    return out;
  }

  Eigen::Index dim() const { return dim_; }
  bool empty() const { return pieces_.empty(); }
  const std::vector<SignalPiece>& pieces() const { return pieces_; }

  /// Value at t with half-open piece supports [t0, t1).
  Vec value(double t) const { return value_within(t, t); }

  /// Value at t of the pieces whose support contains `ref`. Integrators pass
  /// the midpoint of the current step so step endpoints see the same pieces.
  Vec value_within(double t, double ref) const {
    Vec v = Vec::Zero(std::max<Eigen::Index>(dim_, 0));
    for (const auto& p : pieces_)
      if (ref >= p.t0 && ref < p.t1) v += p.fn(t);
    return v;
  }

  /// Sorted, de-duplicated piece endpoints.
  std::vector<double> breakpoints() const {
    std::vector<double> b;
    for (const auto& p : pieces_) {
      b.push_back(p.t0);
      b.push_back(p.t1);
    }
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
  }

  /// Integral of the signal over [a, b].
  Vec integral(double a, double b) const {
    Vec acc = Vec::Zero(std::max<Eigen::Index>(dim_, 0));
    if (!(b > a)) return acc;
    for (const auto& p : pieces_) {
      double lo = std::max(a, p.t0), hi = std::min(b, p.t1);
      if (!(hi > lo)) continue;
      if (auto exact = p.closed_form_integral(lo, hi)) {
        acc += *exact;
        continue;
      }
      for (Eigen::Index k = 0; k < acc.size(); ++k)
        acc[k] += detail::adaptive_simpson([&](double t) { return p.fn(t)[k]; }, lo, hi);
    }
    return acc;
  }

  /// Integral of |signal| over [a, b].
  double integral_norm(double a, double b, double tol = 1e-10) const {
    if (!(b > a)) return 0.0;
    std::vector<double> cuts = breakpoints();
    cuts.push_back(a);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      double lo = cuts[i], hi = cuts[i + 1];
      if (lo < a || hi > b || !(hi > lo)) continue;
      double mid = 0.5 * (lo + hi);
      // Constant-only stretches are exact.
      bool all_constant = true;
      for (const auto& p : pieces_)
        if (mid >= p.t0 && mid < p.t1 && p.kind != SignalPiece::Kind::constant) all_constant = false;
      if (all_constant) {
        acc += value_within(mid, mid).norm() * (hi - lo);
        continue;
      }
      acc += detail::adaptive_simpson([&](double t) { return value_within(t, mid).norm(); }, lo, hi, tol);
    }
    return acc;
  }

  /// Sampled sup norm over [a, b] (exact for constant and linear pieces).
  double sup_norm(double a, double b, int samples_per_piece = 2048) const {
    std::vector<double> cuts = breakpoints();
    cuts.push_back(a);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      double lo = cuts[i], hi = cuts[i + 1];
      if (lo < a || hi > b || !(hi > lo)) continue;
      double mid = 0.5 * (lo + hi);
      for (int k = 0; k <= samples_per_piece; ++k) {
        double t = lo + (hi - lo) * k / samples_per_piece;
        best = std::max(best, value_within(t, mid).norm());
      }
    }
    return best;
  }

 private:
  Eigen::Index dim_ = -1;
  std::vector<SignalPiece> pieces_;
};

/// Time interval for total-variation queries. Jumps at times s with
/// a <= s <= b are counted for [a, b] and a < s <= b for (a, b].
struct Interval {
  double a = 0.0;
  double b = 0.0;
  bool left_closed = true;

  static Interval closed(double a, double b) { return {a, b, true}; }
  static Interval left_open(double a, double b) { return {a, b, false}; }
};

struct Jump {
  double time = 0.0;
  Vec delta;
};

/// Left-continuous BV signal w on [t0, T]:
///   w(t) = origin + sum_{s < t} jump(s) + integral_{t0}^{t} density.
/// A jump at s affects values on (s, T] only.
class BVSignal {
 public:
  BVSignal() = default;

  BVSignal(double t0, double t1, Vec origin, std::vector<Jump> jumps = {}, PiecewiseSignal density = {})
      : t0_(t0), t1_(t1), origin_(std::move(origin)), jumps_(std::move(jumps)), density_(std::move(density)) {
    if (!(t1_ >= t0_)) throw ValidationError("BV signal: span must satisfy t0 <= T");
    Eigen::Index n = origin_.size();
    if (density_.dim() < 0) density_ = PiecewiseSignal(n);
    if (density_.dim() != n) throw ValidationError("BV signal: density dimension mismatch");
    for (std::size_t i = 0; i < jumps_.size(); ++i) {
      const auto& j = jumps_[i];
      if (j.delta.size() != n) throw ValidationError("BV signal: jump dimension mismatch");
      if (!(j.time > t0_ && j.time <= t1_)) throw ValidationError("BV signal: jump time outside (t0, T]");
      if (i > 0 && !(j.time > jumps_[i - 1].time)) throw ValidationError("BV signal: jump times must increase");
      if (!j.delta.allFinite()) throw ValidationError("BV signal: non-finite jump");
    }
  }

  static BVSignal zero(Eigen::Index dim, double t0, double t1) { return BVSignal(t0, t1, Vec::Zero(dim)); }

  static BVSignal single_jump(double t0, double t1, double at, Vec delta) {
    Eigen::Index n = delta.size();
    return BVSignal(t0, t1, Vec::Zero(n), {Jump{at, std::move(delta)}});
  }

  Eigen::Index dim() const { return origin_.size(); }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  const Vec& origin() const { return origin_; }
  const std::vector<Jump>& jumps() const { return jumps_; }
  const PiecewiseSignal& density() const { return density_; }

  bool is_zero() const {
    if (!origin_.isZero(0.0)) return false;
    for (const auto& j : jumps_)
      if (!j.delta.isZero(0.0)) return false;
    return density_.empty();
  }

  /// Jump at exactly time t (zero if none).
  Vec jump_at(double t) const {
    for (const auto& j : jumps_)
      if (j.time == t) return j.delta;
    return Vec::Zero(dim());
  }

  /// w(t) = w(t-).
  Vec eval_left(double t) const {
    Vec v = origin_;
    for (const auto& j : jumps_) {
      if (j.time < t)
        v += j.delta;
      else
        break;
    }
    v += density_.integral(t0_, t);
    return v;
  }

  /// w(t+).
  Vec eval_right(double t) const { return eval_left(t) + jump_at(t); }

  double total_variation(const Interval& J) const {
    double tv = 0.0;
    for (const auto& j : jumps_) {
      bool in = J.left_closed ? (j.time >= J.a && j.time <= J.b) : (j.time > J.a && j.time <= J.b);
      if (in) tv += j.delta.norm();
    }
    tv += density_.integral_norm(std::max(J.a, t0_), std::min(J.b, t1_));
    return tv;
  }

  double total_variation() const { return total_variation(Interval::closed(t0_, t1_)); }

  /// Jump times plus density breakpoints, restricted to (t0, T).
  std::vector<double> breakpoints() const {
    std::vector<double> b;
    for (const auto& j : jumps_)
      if (j.time < t1_) b.push_back(j.time);
    for (double t : density_.breakpoints())
      if (t > t0_ && t < t1_) b.push_back(t);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
  }

  /// Same shape with every jump and the density multiplied by `factor`.
  BVSignal scaled(double factor) const {
    std::vector<Jump> js = jumps_;
    for (auto& j : js) j.delta *= factor;
    return BVSignal(t0_, t1_, origin_ * factor, std::move(js), density_.scaled(factor));
  }

 private:
  double t0_ = 0.0;
  double t1_ = 0.0;
  Vec origin_;
  std::vector<Jump> jumps_;
  PiecewiseSignal density_;
};

/// w(t) = e1(t) + integral_{t0}^{t} e2(s) ds.
inline BVSignal compose_inner_outer(const BVSignal& e1, const PiecewiseSignal& e2, double t0) {
  if (t0 != e1.t0()) throw ValidationError("compose_inner_outer: spans disagree");
  if (e2.dim() >= 0 && e2.dim() != e1.dim()) throw ValidationError("compose_inner_outer: dimension mismatch");
  return BVSignal(e1.t0(), e1.t1(), e1.origin(), e1.jumps(), e1.density() + e2);
}

/// Time partition 0 = tau_0 < ... < tau_{m+1} = T with measurement errors
/// e_0..e_m, one per sampling interval.
class SamplingPlan {
 public:
  SamplingPlan(std::vector<double> taus, std::vector<Vec> errors, double delta)
      : taus_(std::move(taus)), errors_(std::move(errors)), delta_(delta) {
    if (!(delta_ > 0.0)) throw ValidationError("sampling plan: delta must be positive");
    if (taus_.size() < 2) throw ValidationError("sampling plan: need at least one interval");
    if (errors_.size() + 1 != taus_.size())
      throw ValidationError("sampling plan: expected one error per sampling interval");
    const double slack = 1e-12 * delta_;
    for (std::size_t i = 0; i + 1 < taus_.size(); ++i) {
      double gap = taus_[i + 1] - taus_[i];
      if (gap < 0.5 * delta_ - slack || gap > delta_ + slack) {
        std::ostringstream os;
        os << "sampling plan: step " << i << " has length " << gap << " outside [delta/2, delta] with delta = "
           << delta_;
        throw ValidationError(os.str());
      }
    }
  }

  /// Partition of [0, T] with steps delta * (1 + u) / 2, u uniform in [0, 1).
  static std::vector<double> seeded_partition(double T, double delta, std::uint64_t seed) {
    if (!(T > 0.0) || !(delta > 0.0)) throw ValidationError("sampling partition: T and delta must be positive");
    std::mt19937_64 rng(seed);
    std::vector<double> taus{0.0};
    while (T - taus.back() > delta) taus.push_back(taus.back() + 0.5 * delta * (1.0 + detail::unit_uniform(rng)));
    double rest = T - taus.back();
    if (rest > 0.0) {
      if (rest >= 0.5 * delta || taus.size() == 1) {
        taus.push_back(T);
      } else {
        // Merge the short remainder with the previous step, splitting in two if needed.
        double prev = taus[taus.size() - 2];
        double span = T - prev;
        taus.pop_back();
        if (span <= delta) {
          taus.push_back(T);
        } else {
          taus.push_back(prev + 0.5 * span);
          taus.push_back(T);
        }
      }
    }
    if (taus.back() != T) taus.back() = T;
    return taus;
  }

  const std::vector<double>& taus() const { return taus_; }
  const std::vector<Vec>& errors() const { return errors_; }
  double delta() const { return delta_; }
  double horizon() const { return taus_.back(); }
  std::size_t intervals() const { return errors_.size(); }

  double max_error() const {
    double m = 0.0;
    for (const auto& e : errors_) m = std::max(m, e.norm());
    return m;
  }

  /// max |e_i| <= k_bar * delta.
  bool respects_error_bound(double k_bar) const { return max_error() <= k_bar * delta_ * (1.0 + 1e-12); }

 private:
  std::vector<double> taus_;
  std::vector<Vec> errors_;
  double delta_;
};

/// Piecewise-constant left-continuous zeta(t) = e_i on (tau_i, tau_{i+1}],
/// with zeta(0) = e_0.
inline BVSignal from_sampling_errors(const SamplingPlan& plan) {
  const auto& taus = plan.taus();
  const auto& e = plan.errors();
  std::vector<Jump> jumps;
  for (std::size_t i = 1; i < e.size(); ++i) {
    Vec d = e[i] - e[i - 1];
    if (!d.isZero(0.0)) jumps.push_back({taus[i], d});
  }
  return BVSignal(taus.front(), taus.back(), e.front(), std::move(jumps));
}

}  // namespace patchy

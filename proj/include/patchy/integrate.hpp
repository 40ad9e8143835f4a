#pragma once

/**
 * @file integrate.hpp
 * @brief Trajectory generation for patchy fields: Caratheodory solutions,
 * impulsive (BV-driven) solutions, feedback loops with measurement errors
 * and disturbances, sample-and-hold solutions, and branch enumeration at
 * grazing contacts.
 *
 * All solvers share one event-driven engine: fixed-step classical RK4 with
 * the active patch frozen during a step. When a step ends with a different
 * selection, the first change is bracketed by bisection (re-integrating a
 * single shortened step) and the trajectory continues from the last point
 * that still had the old selection, so every row satisfies
 * alpha_k == alpha*(x_k).
 */

#include "patchy/patchfield.hpp"
#include "patchy/signal.hpp"
#include "patchy/trajectory.hpp"

#include <set>

namespace patchy {

namespace detail {

struct Graze {
  double time = 0.0;
  Vec state;
  int from = 0;
  int to = 0;
  bool entry = false;  // numerically entered (true) or touched from outside (false)
};

/// Event-driven integrator for a switched system x' = drift(alpha, t, x).
class SwitchingEngine {
 public:
  using Select = std::function<std::optional<int>(double, const Vec&)>;
  using Drift = std::function<Vec(int, double, const Vec&, double)>;

  struct Hooks {
    Select select;
    /// Selection with the right limit of any measurement signal (defaults to select).
    Select select_right;
    Drift drift;
    /// State displacement at a breakpoint (empty or zero: none).
    std::function<Vec(double)> jump_at;
  };

  /// Optional grazing monitor used by branch enumeration.
  struct GrazeMonitor {
    const PatchyField* field = nullptr;
    std::set<int> suppressed;
    double band = 1e-6;
    double graze_tol = 1e-6;
  };

  struct State {
    double t = 0.0;
    Vec x;
    int active = 0;
    int previous = 0;
    bool pending = false;
    std::size_t events = 0;
    Trajectory traj;
  };

  SwitchingEngine(Hooks hooks, IntegratorConfig cfg) : hooks_(std::move(hooks)), cfg_(cfg) {
    cfg_.check();
    if (!hooks_.select_right) hooks_.select_right = hooks_.select;
  }

  GrazeMonitor* monitor = nullptr;

  /// Initial state at (t0, x0); throws OutsideDomain when x0 is not covered.
  State start(double t0, const Vec& x0) const {
    State s;
    s.t = t0;
    s.x = x0;
    auto a = hooks_.select(t0, x0);
    if (!a) {
      auto partial = std::make_shared<Trajectory>();
      partial->push(t0, x0, -1, EventKind::exit);
      partial->events.push_back({t0, EventKind::exit, -1, -1, {}});
      std::ostringstream os;
      os << "initial state (" << x0.transpose() << ") is outside the domain";
      throw OutsideDomain(os.str(), t0, partial);
    }
    s.active = *a;
    s.previous = *a;
    s.traj.push(t0, x0, *a, EventKind::start);
    s.traj.events.push_back({t0, EventKind::start, *a, *a, {}});
    return s;
  }

  /// Integrates to T through the sorted breakpoints in (t0, T). Returns a
  /// graze when a monitor is attached and one is detected.
  std::optional<Graze> run(State& s, double T, const std::vector<double>& breakpoints) const {
    std::vector<double> cuts;
    for (double b : breakpoints)
      if (b > s.t && b < T) cuts.push_back(b);
    cuts.push_back(T);
    for (double c : cuts) {
      while (s.t < c) {
        double rest = c - s.t;
        double h = rest <= cfg_.dt * (1.0 + 1e-9) ? rest : cfg_.dt;
        if (auto g = step(s, h, c)) return g;
      }
      if (c < T) breakpoint(s, c);
    }
    return std::nullopt;
  }

  Vec rk4(int a, double t, const Vec& x, double h, double ref) const {
    const auto& f = hooks_.drift;
    Vec k1 = f(a, t, x, ref);
    Vec k2 = f(a, t + 0.5 * h, x + (0.5 * h) * k1, ref);
    Vec k3 = f(a, t + 0.5 * h, x + (0.5 * h) * k2, ref);
    Vec k4 = f(a, t + h, x + h * k3, ref);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  const IntegratorConfig& config() const { return cfg_; }

  /// Switch the active index at the current point (used for branch entry).
  void force_switch(State& s, int to) const {
    if (!s.traj.empty()) s.traj.row_events.back() = EventKind::switch_index;
    s.traj.events.push_back({s.t, EventKind::switch_index, s.active, to, {}});
    count_event(s);
    s.previous = s.active;
    s.active = to;
    s.pending = true;
  }

 private:
  bool consistent(const State& s, const std::optional<int>& idx) const {
    return idx && (*idx == s.active || (s.pending && *idx == s.previous));
  }

  void count_event(State& s) const {
    if (++s.events > cfg_.max_events) {
      std::ostringstream os;
      os << "more than " << cfg_.max_events << " events before t = " << s.t;
      throw EventOverflow(os.str());
    }
  }

  [[noreturn]] void exit_domain(State& s, const std::string& why) const {
    if (!s.traj.empty()) s.traj.row_events.back() = EventKind::exit;
    s.traj.events.push_back({s.t, EventKind::exit, s.active, -1, {}});
    std::ostringstream os;
    os << why << " at t = " << s.t;
    throw OutsideDomain(os.str(), s.t, std::make_shared<Trajectory>(s.traj));
  }

  void accept(State& s, double t_new, Vec x_new) const {
    s.t = t_new;
    s.x = std::move(x_new);
    s.traj.push(s.t, s.x, s.active);
  }

  std::optional<Graze> step(State& s, double h, double cut) const {
    const double ref = s.t + 0.5 * h;
    const double t_end = (h == cut - s.t) ? cut : s.t + h;
    Vec x1 = rk4(s.active, s.t, s.x, h, ref);
    auto idx = hooks_.select(t_end, x1);
    if (consistent(s, idx)) {
      if (monitor) {
        if (auto g = touch_check(s, h, ref, x1)) return g;
      }
      if (*idx == s.active) s.pending = false;
      accept(s, t_end, std::move(x1));
      if (monitor) release_suppressed(s);
      return std::nullopt;
    }
    // Bracket the first selection change.
    double lo = 0.0, hi = h;
    while (hi - lo > cfg_.event_tol) {
      double mid = 0.5 * (lo + hi);
      if (consistent(s, hooks_.select(s.t + mid, rk4(s.active, s.t, s.x, mid, ref))))
        lo = mid;
      else
        hi = mid;
    }
    Vec x_hi = rk4(s.active, s.t, s.x, hi, ref);
    auto to = hooks_.select(s.t + hi, x_hi);
    if (lo > 0.0) accept(s, s.t + lo, rk4(s.active, s.t, s.x, lo, ref));
    if (!to) exit_domain(s, "trajectory left every patch");
    if (monitor && *to > s.active) {
      const Patch& entered = monitor->field->patch(*to);
      Vec gv = hooks_.drift(s.active, s.t, x_hi, ref);
      Vec n = entered.domain.outer_normal(x_hi);
      double gn = gv.norm();
      double ip = gn > 0.0 ? gv.dot(n) / gn : 0.0;
      if (ip > -monitor->graze_tol) return Graze{s.t, s.x, s.active, *to, true};
    }
    s.traj.row_events.back() = EventKind::switch_index;
    s.traj.events.push_back({s.t, EventKind::switch_index, s.active, *to, {}});
    count_event(s);
    s.previous = s.active;
    s.active = *to;
    s.pending = true;
    return std::nullopt;
  }

  /// Local minimum of psi_beta along the step with the state within `band`
  /// of a higher, non-suppressed boundary.
  std::optional<Graze> touch_check(State& s, double h, double ref, const Vec& x1) const {
    const PatchyField& field = *monitor->field;
    for (const auto& p : field.patches()) {
      if (p.index <= s.active || monitor->suppressed.count(p.index)) continue;
      const auto& dom = p.domain;
      auto rate = [&](double t, const Vec& x) { return dom.level_gradient(x).dot(hooks_.drift(s.active, t, x, ref)); };
      double d0 = rate(s.t, s.x);
      double d1 = rate(s.t + h, x1);
      if (!(d0 < 0.0 && d1 >= 0.0)) continue;
      double lo = 0.0, hi = h;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(s.t)); ++it) {
        double mid = 0.5 * (lo + hi);
        (rate(s.t + mid, rk4(s.active, s.t, s.x, mid, ref)) < 0.0 ? lo : hi) = mid;
      }
      Vec xs = rk4(s.active, s.t, s.x, lo, ref);
      if (dom.contains(xs)) continue;
      if (dom.signed_distance(xs) < -monitor->band) continue;
      if (lo > 0.0) accept(s, s.t + lo, std::move(xs));
      return Graze{s.t, s.x, s.active, p.index, false};
    }
    return std::nullopt;
  }

  void release_suppressed(State& s) const {
    for (auto it = monitor->suppressed.begin(); it != monitor->suppressed.end();) {
      const auto& dom = monitor->field->patch(*it).domain;
      double rate = dom.level_gradient(s.x).dot(hooks_.drift(s.active, s.t, s.x, s.t));
      if (!dom.contains(s.x) && rate > 0.0)
        it = monitor->suppressed.erase(it);
      else
        ++it;
    }
  }

  void breakpoint(State& s, double c) const {
    if (hooks_.jump_at) {
      Vec dw = hooks_.jump_at(c);
      if (dw.size() > 0 && !dw.isZero(0.0)) {
        s.traj.row_events.back() = EventKind::jump;
        Vec xp = s.x + dw;
        auto to = hooks_.select(c, xp);
        if (!to) {
          s.traj.push(c, xp, s.active, EventKind::exit);
          s.traj.events.push_back({c, EventKind::jump, s.active, -1, dw});
          s.x = xp;
          s.traj.events.push_back({c, EventKind::exit, s.active, -1, {}});
          std::ostringstream os;
          os << "jump moved the state outside every patch at t = " << c;
          throw OutsideDomain(os.str(), c, std::make_shared<Trajectory>(s.traj));
        }
        s.traj.events.push_back({c, EventKind::jump, s.active, *to, dw});
        count_event(s);
        s.x = std::move(xp);
        s.active = *to;
        s.previous = *to;
        s.pending = false;
        s.traj.push(c, s.x, s.active);
        return;
      }
    }
    auto to = hooks_.select_right(c, s.x);
    if (!to) exit_domain(s, "measured state left every patch");
    if (*to != s.active) {
      s.traj.row_events.back() = EventKind::switch_index;
      s.traj.events.push_back({c, EventKind::switch_index, s.active, *to, {}});
      count_event(s);
      s.active = *to;
      s.previous = *to;
      s.pending = false;
    }
  }

  Hooks hooks_;
  IntegratorConfig cfg_;
};

inline SwitchingEngine::Hooks field_hooks(const PatchyField& field, const BVSignal* w) {
  SwitchingEngine::Hooks hk;
  hk.select = [&field](double, const Vec& x) { return field.try_alpha_star(x); };
  if (w && !w->density().empty()) {
    const PiecewiseSignal* dens = &w->density();
    hk.drift = [&field, dens](int a, double t, const Vec& x, double ref) {
      return Vec(field.patch(a).field(x) + dens->value_within(t, ref));
    };
  } else {
    hk.drift = [&field](int a, double, const Vec& x, double) { return field.patch(a).field(x); };
  }
  if (w) hk.jump_at = [w](double t) { return w->jump_at(t); };
  return hk;
}

}  // namespace detail

/// Caratheodory solution of x' = g(x), x(t0) = x0 on [t0, T].
inline Trajectory solve_caratheodory(const PatchyField& field, const Vec& x0, double t0, double T,
                                     const IntegratorConfig& cfg) {
  detail::SwitchingEngine eng(detail::field_hooks(field, nullptr), cfg);
  auto s = eng.start(t0, x0);
  eng.run(s, T, {});
  return std::move(s.traj);
}

/// Solution of y' = g(y) + w' in the integral sense
/// y(t) = y0 + int g(y) + w(t) - w(t0); jumps of w displace the state.
inline Trajectory solve_impulsive(const PatchyField& field, const BVSignal& w, const Vec& y0, double t0, double T,
                                  const IntegratorConfig& cfg) {
  if (w.dim() != field.dim()) throw ValidationError("solve_impulsive: signal dimension mismatch");
  detail::SwitchingEngine eng(detail::field_hooks(field, &w), cfg);
  auto s = eng.start(t0, y0);
  eng.run(s, T, w.breakpoints());
  return std::move(s.traj);
}

/// x' = f(x, U(x + zeta(t))) + d(t). The control is selected from the
/// measured state; zeta's jumps change the selection, never the state.
inline Trajectory solve_perturbed_feedback(const PatchyFeedback& fb, const BVSignal& zeta, const PiecewiseSignal& d,
                                           const Vec& x0, double T, const IntegratorConfig& cfg) {
  const double t0 = zeta.t0();
  detail::SwitchingEngine::Hooks hk;
  hk.select = [&fb, &zeta](double t, const Vec& x) { return fb.try_alpha_star(x + zeta.eval_left(t)); };
  hk.select_right = [&fb, &zeta](double t, const Vec& x) { return fb.try_alpha_star(x + zeta.eval_right(t)); };
  const auto& f = fb.dynamics().f;
  if (d.empty()) {
    hk.drift = [&fb, &f](int a, double, const Vec& x, double) { return f(x, fb.control_of(a)); };
  } else {
    hk.drift = [&fb, &f, &d](int a, double t, const Vec& x, double ref) {
      return Vec(f(x, fb.control_of(a)) + d.value_within(t, ref));
    };
  }
  std::vector<double> cuts = zeta.breakpoints();
  for (double b : d.breakpoints()) cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  detail::SwitchingEngine eng(std::move(hk), cfg);
  auto s = eng.start(t0, x0);
  eng.run(s, T, cuts);
  return std::move(s.traj);
}

/// Sample-and-hold solution: on [tau_i, tau_{i+1}] the control is frozen at
/// U(x(tau_i) + e_i). Row alpha values are the measured indices.
inline Trajectory solve_sampling(const PatchyFeedback& fb, const SamplingPlan& plan, const PiecewiseSignal& d,
                                 const Vec& x0, const IntegratorConfig& cfg) {
  cfg.check();
  const auto& taus = plan.taus();
  const auto& errs = plan.errors();
  const auto& f = fb.dynamics().f;
  std::vector<double> dcuts = d.breakpoints();
  Trajectory tr;
  Vec x = x0;
  int last = 0;
  auto fail = [&](double t, const Vec& measured) {
    if (!tr.empty()) tr.row_events.back() = EventKind::exit;
    else tr.push(t, x, -1, EventKind::exit);
    tr.events.push_back({t, EventKind::exit, last, -1, {}});
    std::ostringstream os;
    os << "measured sample (" << measured.transpose() << ") outside every patch at t = " << t;
    throw OutsideDomain(os.str(), t, std::make_shared<Trajectory>(tr));
  };
  for (std::size_t i = 0; i + 1 < taus.size(); ++i) {
    Vec measured = x + errs[i];
    auto m = fb.try_alpha_star(measured);
    if (!m) fail(taus[i], measured);
    if (i == 0) {
      tr.push(taus[0], x, *m, EventKind::start);
      tr.events.push_back({taus[0], EventKind::start, *m, *m, {}});
    } else if (*m != last) {
      tr.row_events.back() = EventKind::switch_index;
      tr.events.push_back({taus[i], EventKind::switch_index, last, *m, {}});
    }
    tr.measured.push_back(*m);
    last = *m;
    const Vec& k = fb.control_of(*m);
    // Sub-steps of at most dt, split at disturbance breakpoints.
    std::vector<double> cuts;
    for (double c : dcuts)
      if (c > taus[i] && c < taus[i + 1]) cuts.push_back(c);
    cuts.push_back(taus[i + 1]);
    double t = taus[i];
    for (double c : cuts) {
      double span = c - t;
      auto n = static_cast<std::size_t>(std::ceil(span / cfg.dt - 1e-9));
      n = std::max<std::size_t>(n, 1);
      double h = span / static_cast<double>(n);
      double ref = t + 0.5 * span;
      auto rhs = [&](double s, const Vec& y) {
        Vec v = f(y, k);
        if (!d.empty()) v += d.value_within(s, ref);
        return v;
      };
      for (std::size_t j = 0; j < n; ++j) {
        double ts = t + static_cast<double>(j) * h;
        Vec k1 = rhs(ts, x);
        Vec k2 = rhs(ts + 0.5 * h, x + (0.5 * h) * k1);
        Vec k3 = rhs(ts + 0.5 * h, x + (0.5 * h) * k2);
        Vec k4 = rhs(ts + h, x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        double tn = (j + 1 == n) ? c : t + static_cast<double>(j + 1) * h;
        tr.push(tn, x, *m);
      }
      t = c;
    }
  }
  return tr;
}

/// y(t) = x(t) + zeta(t), with an extra right-limit row at each jump of zeta.
inline Trajectory shift_by_signal(const Trajectory& x, const BVSignal& zeta) {
  Trajectory y;
  y.events = x.events;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double t = x.times[k];
    y.push(t, x.states[k] + zeta.eval_left(t), x.alpha[k], x.row_events[k]);
    Vec j = zeta.jump_at(t);
    bool last_at_t = (k + 1 == x.size()) || x.times[k + 1] != t;
    if (last_at_t && !j.isZero(0.0)) {
      y.row_events.back() = EventKind::jump;
      y.push(t, x.states[k] + zeta.eval_right(t), x.alpha[k]);
    }
  }
  return y;
}

/// w(t) = zeta(t) + int_0^t (h(y(s), zeta(s)) + d(s)) ds with
/// h(y, z) = f(y - z, U(y)) - f(y, U(y)).
inline BVSignal build_equivalent_w(const Trajectory& y_traj, const BVSignal& zeta, const PiecewiseSignal& d,
                                   const PatchyFeedback& fb) {
  for (const auto& y : y_traj.states) fb.alpha_star(y);  // U must be defined along y
  auto yt = std::make_shared<const Trajectory>(y_traj);
  auto z = std::make_shared<const BVSignal>(zeta);
  const auto f = fb.dynamics().f;
  PiecewiseSignal dens = zeta.density();
  if (!d.empty()) dens = dens + d;
  dens.add(PiecewiseSignal::custom_piece(zeta.t0(), zeta.t1(), [yt, z, f, fb](double s) {
    Vec y = yt->value_left(s);
    Vec zs = z->eval_left(s);
    Vec u = fb.control_at(y);
    return Vec(f(y - zs, u) - f(y, u));
  }));
  return BVSignal(zeta.t0(), zeta.t1(), zeta.origin(), zeta.jumps(), std::move(dens));
}

/// Caratheodory solutions that differ at grazing contacts with higher
/// patches, found depth-first. Transversal crossings do not branch. The
/// canonical solve_caratheodory output is always part of the result.
inline std::vector<Trajectory> enumerate_solutions(const PatchyField& field, const Vec& x0, double t0, double T,
                                                   const IntegratorConfig& cfg, std::size_t branch_cap) {
  using detail::SwitchingEngine;
  std::vector<Trajectory> leaves;
  leaves.push_back(solve_caratheodory(field, x0, t0, T, cfg));

  SwitchingEngine eng(detail::field_hooks(field, nullptr), cfg);
  struct Node {
    SwitchingEngine::State state;
    std::set<int> suppressed;
  };
  std::vector<Node> stack;
  stack.push_back({eng.start(t0, x0), {}});
  std::vector<Trajectory> found;
  while (!stack.empty()) {
    Node node = std::move(stack.back());
    stack.pop_back();
    // The monitor holds the suppression set, so each node gets its own engine copy.
    SwitchingEngine local = eng;
    SwitchingEngine::GrazeMonitor mon;
    mon.field = &field;
    mon.suppressed = node.suppressed;
    mon.band = cfg.event_tol;
    mon.graze_tol = cfg.graze_tol;
    local.monitor = &mon;
    auto g = local.run(node.state, T, {});
    if (!g) {
      found.push_back(std::move(node.state.traj));
      if (found.size() > branch_cap) {
        std::ostringstream os;
        os << "more than " << branch_cap << " solution branches";
        throw BranchOverflow(os.str());
      }
      continue;
    }
    // Skip branch: stay on the current patch, ignore the touched one.
    Node skip{node.state, mon.suppressed};
    skip.suppressed.insert(g->to);
    // Enter branch: switch at the contact point.
    Node enter{std::move(node.state), mon.suppressed};
    local.force_switch(enter.state, g->to);
    stack.push_back(std::move(skip));
    stack.push_back(std::move(enter));
    if (stack.size() + found.size() > 4 * branch_cap + 8) throw BranchOverflow("branch stack exceeds cap");
  }
  // Branches re-grid after a contact, so linear interpolation between rows
  // differs by O(dt^2) even for identical solutions.
  const double same = 1e-7 + cfg.dt * cfg.dt;
  for (auto& tr : found) {
    bool dup = false;
    for (const auto& l : leaves)
      if (sup_distance(l, tr) <= same) dup = true;
    if (!dup) leaves.push_back(std::move(tr));
  }
  if (leaves.size() > branch_cap) throw BranchOverflow("solution count exceeds branch cap");
  return leaves;
}

}  // namespace patchy

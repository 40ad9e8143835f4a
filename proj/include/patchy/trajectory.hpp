#pragma once

/**
 * @file trajectory.hpp
 * @brief Sampled trajectories with their active-index history and event log,
 * plus CSV/JSON export.
 */

#include "patchy/core.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <ostream>
#include <sstream>

namespace patchy {

enum class EventKind { none, start, switch_index, jump, exit };

inline const char* event_label(EventKind k) {
  switch (k) {
    case EventKind::none:
    case EventKind::start:
      return "-";
    case EventKind::switch_index:
      return "switch";
    case EventKind::jump:
      return "jump";
    case EventKind::exit:
      return "exit";
  }
  return "-";
}

inline const char* event_name(EventKind k) {
  return k == EventKind::start ? "start" : event_label(k);
}

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::none;
  int from_index = 0;
  int to_index = 0;
  Vec displacement;
};

struct IntegratorConfig {
  double dt = 1e-3;
  /// Bisection tolerance on switch times.
  double event_tol = 1e-6;
  std::size_t max_events = 10000;
  std::uint64_t rng_seed = 0;
  /// Normalised entry inner product below which a crossing is transversal.
  double graze_tol = 1e-6;

  void check() const {
    if (!(dt > 0.0)) throw ConfigError("integrator: dt must be positive");
    if (!(event_tol > 0.0) || !(event_tol < dt)) throw ConfigError("integrator: need 0 < event_tol < dt");
    if (max_events == 0) throw ConfigError("integrator: max_events must be positive");
  }
};

/// Rows (t_k, x_k, alpha_k). alpha_k is the index active on (t_{k-1}, t_k];
/// alpha_0 is the index at the start. A jump at time s appears as two rows
/// with time s: the left value (event "jump") followed by the right value.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<int> alpha;
  std::vector<EventKind> row_events;
  std::vector<Event> events;
  /// Sampling solutions only: measured index per sampling interval.
  std::vector<int> measured;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  Eigen::Index dim() const { return states.empty() ? 0 : states.front().size(); }
  double t_begin() const { return times.front(); }
  double t_end() const { return times.back(); }
  const Vec& final_state() const { return states.back(); }

  void push(double t, Vec x, int a, EventKind ev = EventKind::none) {
    times.push_back(t);
    states.push_back(std::move(x));
    alpha.push_back(a);
    row_events.push_back(ev);
  }

  /// Left value x(t-) (linear interpolation between rows).
  Vec value_left(double t) const { return value(t, false); }
  /// Right value x(t+).
  Vec value_right(double t) const { return value(t, true); }

  std::size_t count_events(EventKind k) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [k](const Event& e) { return e.kind == k; }));
  }

 private:
  Vec value(double t, bool right) const {
    if (times.empty()) throw Error("trajectory: empty");
    if (t <= times.front()) {
      if (!right || t < times.front()) return states.front();
    }
    if (t >= times.back()) {
      if (right || t > times.back()) return states.back();
    }
    // First row with time >= t.
    auto lo = std::lower_bound(times.begin(), times.end(), t);
    std::size_t k = static_cast<std::size_t>(lo - times.begin());
    if (k < times.size() && times[k] == t) {
      if (!right) return states[k];
      while (k + 1 < times.size() && times[k + 1] == t) ++k;
      return states[k];
    }
    // times[k-1] < t < times[k]
    double ta = times[k - 1], tb = times[k];
    double th = (t - ta) / (tb - ta);
    return (1.0 - th) * states[k - 1] + th * states[k];
  }
};

/// sup_t |a(t) - b(t)| on the union of both grids, comparing left values
/// with left values and right values with right values.
inline double sup_distance(const Trajectory& a, const Trajectory& b) {
  std::vector<double> grid = a.times;
  grid.insert(grid.end(), b.times.begin(), b.times.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double lo = std::max(a.t_begin(), b.t_begin()), hi = std::min(a.t_end(), b.t_end());
  double best = 0.0;
  for (double t : grid) {
    if (t < lo || t > hi) continue;
    best = std::max(best, (a.value_left(t) - b.value_left(t)).norm());
    best = std::max(best, (a.value_right(t) - b.value_right(t)).norm());
  }
  return best;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header `t,x1..xn,alpha,event`.
inline void write_csv(std::ostream& os, const Trajectory& tr) {
  Eigen::Index n = tr.dim();
  os << "t";
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x" << i;
  os << ",alpha,event\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << format_double(tr.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(tr.states[k][i]);
    os << ',' << tr.alpha[k] << ',' << event_label(tr.row_events[k]) << '\n';
  }
}

inline nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline nlohmann::json to_json(const Trajectory& tr) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < tr.size(); ++k)
    rows.push_back({{"t", tr.times[k]},
                    {"x", vec_to_json(tr.states[k])},
                    {"alpha", tr.alpha[k]},
                    {"event", event_label(tr.row_events[k])}});
  nlohmann::json evs = nlohmann::json::array();
  for (const auto& e : tr.events) {
    nlohmann::json j = {{"time", e.time}, {"kind", event_name(e.kind)}, {"from", e.from_index}, {"to", e.to_index}};
    if (e.displacement.size() > 0) j["displacement"] = vec_to_json(e.displacement);
    evs.push_back(std::move(j));
  }
  nlohmann::json out = {{"rows", rows}, {"events", evs}};
  if (!tr.measured.empty()) out["measured"] = tr.measured;
  return out;
}

}  // namespace patchy

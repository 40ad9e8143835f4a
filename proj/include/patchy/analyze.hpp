#pragma once

/**
 * @file analyze.hpp
 * @brief Executable checks built on the solvers: index monotonicity,
 * optimal monotone partitions of an index history and the matching
 * monotone modification, integral-identity residuals, distance to the
 * Caratheodory solution set, convergence studies, reachability experiments
 * for perturbed and sampled feedbacks, and invariance/transit checks for a
 * single patch.
 */

#include "patchy/constants.hpp"
#include "patchy/integrate.hpp"

#include <limits>
#include <map>
#include <random>

namespace patchy {

// ---------------------------------------------------------------------------
// Index monotonicity

struct MonotoneCheck {
  bool monotone = true;
  double violation_time = std::numeric_limits<double>::quiet_NaN();
  std::size_t violation_row = 0;
};

/// True iff the recorded active index never decreases along the rows.
inline MonotoneCheck check_index_monotone(const Trajectory& tr) {
  MonotoneCheck c;
  for (std::size_t k = 1; k < tr.size(); ++k) {
    if (tr.alpha[k] < tr.alpha[k - 1]) {
      c.monotone = false;
      c.violation_time = tr.times[k];
      c.violation_row = k;
      return c;
    }
  }
  return c;
}

/// Same check on a plain index sequence (e.g. measured indices of a sampling run).
inline MonotoneCheck check_sequence_monotone(const std::vector<int>& seq, const std::vector<double>& times = {}) {
  MonotoneCheck c;
  for (std::size_t k = 1; k < seq.size(); ++k) {
    if (seq[k] < seq[k - 1]) {
      c.monotone = false;
      c.violation_row = k;
      c.violation_time = k < times.size() ? times[k] : std::numeric_limits<double>::quiet_NaN();
      return c;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Monotone partition

/// Cells are the row intervals (t_{k-1}, t_k], k >= 1, with history
/// alpha_k. `levels[k-1]` is the envelope level on cell k.
struct MonotonePartition {
  std::vector<double> taus;
  std::vector<int> indices;
  std::vector<int> levels;
  double excess_measure = 0.0;
};

/// Envelope e_k <= alpha_k, non-decreasing, with values among `allowed`,
/// minimising sum of widths where alpha_k > e_k. Ties go to the lowest
/// level at the last cell and then to the lowest predecessor.
inline std::vector<int> optimal_envelope(const std::vector<int>& history, const std::vector<double>& widths,
                                         const std::vector<int>& allowed, double* excess = nullptr) {
  const std::size_t K = history.size();
  const std::size_t L = allowed.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<int> env;
  if (K == 0) {
    if (excess) *excess = 0.0;
    return env;
  }
  std::vector<double> best(K * L, inf);
  std::vector<std::size_t> from(K * L, 0);
  auto cost = [&](std::size_t k, std::size_t j) {
    if (history[k] < allowed[j]) return inf;
    return history[k] > allowed[j] ? widths[k] : 0.0;
  };
  for (std::size_t j = 0; j < L; ++j) best[j] = cost(0, j);
  for (std::size_t k = 1; k < K; ++k) {
    double run = inf;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < L; ++j) {
      if (best[(k - 1) * L + j] < run) {
        run = best[(k - 1) * L + j];
        arg = j;
      }
      double c = cost(k, j);
      if (run < inf && c < inf) {
        best[k * L + j] = run + c;
        from[k * L + j] = arg;
      }
    }
  }
  std::size_t j = 0;
  double total = inf;
  for (std::size_t q = 0; q < L; ++q) {
    if (best[(K - 1) * L + q] < total) {
      total = best[(K - 1) * L + q];
      j = q;
    }
  }
  if (!(total < inf)) throw PartitionMismatch("monotone partition: history below every allowed level");
  env.assign(K, 0);
  for (std::size_t k = K; k-- > 0;) {
    env[k] = allowed[j];
    if (k > 0) j = from[k * L + j];
  }
  if (excess) *excess = total;
  return env;
}

inline MonotonePartition monotone_partition(const Trajectory& tr, const PatchyField& field) {
  MonotonePartition part;
  if (tr.empty()) throw ValidationError("monotone_partition: empty trajectory");
  std::vector<int> hist;
  std::vector<double> widths;
  for (std::size_t k = 1; k < tr.size(); ++k) {
    hist.push_back(tr.alpha[k]);
    widths.push_back(tr.times[k] - tr.times[k - 1]);
  }
  part.taus.push_back(tr.t_begin());
  if (hist.empty()) {
    part.indices = {tr.alpha[0]};
    part.taus.push_back(tr.t_end());
    return part;
  }
  part.levels = optimal_envelope(hist, widths, field.indices(), &part.excess_measure);
  part.indices.push_back(part.levels[0]);
  for (std::size_t k = 1; k < part.levels.size(); ++k) {
    if (part.levels[k] != part.levels[k - 1]) {
      part.indices.push_back(part.levels[k]);
      part.taus.push_back(tr.times[k]);  // start of cell k+1
    }
  }
  part.taus.push_back(tr.t_end());
  return part;
}

/// excess < C TV{w}, gated by TV{w} < delta. With TV{w} = 0 the strict
/// inequality degenerates; the check then requires zero excess.
inline bool check_prop22_budget(const MonotonePartition& part, const BVSignal& w, const RobustnessConstants& k) {
  double tv = w.total_variation();
  if (!(tv < k.delta)) {
    std::ostringstream os;
    os << "TV{w} = " << tv << " is not below delta = " << k.delta;
    throw Inconclusive(os.str());
  }
  if (tv == 0.0) return part.excess_measure == 0.0;
  return part.excess_measure < k.C_big * tv;
}

// ---------------------------------------------------------------------------
// Monotone modification

struct Modification {
  Trajectory y;
  BVSignal w;
  /// Per cell (k = 1..K, stored at k-1): true when the history exceeds the level.
  std::vector<bool> excess_cell;
};

namespace detail {

inline SignalPiece clip_piece(const SignalPiece& p, double a, double b) {
  SignalPiece q = p;
  q.t0 = std::max(p.t0, a);
  q.t1 = std::min(p.t1, b);
  if (p.kind == SignalPiece::Kind::linear) q.params[0] = p.params[0] + p.params[1] * (q.t0 - p.t0);
  return q;
}

}  // namespace detail

/// Replaces the parts of y where the index exceeds the partition level by
/// frozen states, so that alpha*(y_mod) is non-decreasing. Returns y_mod
/// and w_mod(t) = y_mod(t) - int_0^t g(y_mod).
inline Modification monotone_modification(const Trajectory& y, const BVSignal& w, const MonotonePartition& part,
                                          const PatchyField& field) {
  const std::size_t K = y.size() > 0 ? y.size() - 1 : 0;
  if (part.levels.size() != K) throw PartitionMismatch("monotone_modification: partition does not match the grid");
  Modification out;
  out.excess_cell.assign(K, false);
  for (std::size_t k = 1; k <= K; ++k) {
    if (y.alpha[k] < part.levels[k - 1]) {
      std::ostringstream os;
      os << "monotone_modification: index " << y.alpha[k] << " below level " << part.levels[k - 1] << " at t = "
         << y.times[k];
      throw PartitionMismatch(os.str());
    }
    out.excess_cell[k - 1] = y.alpha[k] > part.levels[k - 1];
  }
  if (part.excess_measure == 0.0) {
    out.y = y;
    out.w = w;
    return out;
  }

  // Per cell: follow y, or hold the state `held[k]`.
  std::vector<bool> follow(K + 1, true);
  std::vector<Vec> held(K + 1);
  std::vector<std::pair<std::size_t, std::size_t>> segs;  // [first, last] cells
  for (std::size_t k = 1; k <= K;) {
    std::size_t e = k;
    while (e + 1 <= K && part.levels[e] == part.levels[k - 1]) ++e;
    segs.push_back({k, e});
    k = e + 1;
  }
  std::optional<Vec> next_start;  // y_mod just after the start of the following segment
  for (std::size_t s = segs.size(); s-- > 0;) {
    auto [a, b] = segs[s];
    const int level = part.levels[a - 1];
    std::size_t first_match = 0;
    for (std::size_t k = a; k <= b && !first_match; ++k)
      if (y.alpha[k] == level) first_match = k;
    if (!first_match) {
      if (next_start) {
        for (std::size_t k = a; k <= b; ++k) {
          follow[k] = false;
          held[k] = *next_start;
        }
      }
    } else {
      std::size_t last_match = first_match;
      for (std::size_t k = a; k <= b; ++k) {
        if (y.alpha[k] == level) {
          last_match = k;
          continue;
        }
        follow[k] = false;
        held[k] = (k < first_match) ? y.states[first_match] : y.states[last_match];
      }
    }
    next_start = follow[a] ? y.states[a - 1] : held[a];
  }

  // Rows of y_mod, with a duplicate-time row wherever y_mod jumps.
  auto index_of = [&](const Vec& x) {
    auto i = field.try_alpha_star(x);
    return i ? *i : -1;
  };
  std::map<double, Vec> jumps;
  auto add_jump = [&](double t, const Vec& d) {
    if (d.isZero(0.0)) return;
    auto it = jumps.find(t);
    if (it == jumps.end())
      jumps.emplace(t, d);
    else
      it->second += d;
  };
  Trajectory& ym = out.y;
  Vec start = follow.size() > 1 && K > 0 ? (follow[1] ? y.states[0] : held[1]) : y.states[0];
  ym.push(y.times[0], start, index_of(start), EventKind::start);
  ym.events.push_back({y.times[0], EventKind::start, ym.alpha[0], ym.alpha[0], {}});
  PiecewiseSignal dens(y.dim());
  for (std::size_t k = 1; k <= K; ++k) {
    const double t0 = y.times[k - 1], t1 = y.times[k];
    Vec b = follow[k] ? y.states[k] : held[k];
    if (t1 == t0) {
      // A jump of y: y_mod moves straight from its left value to b.
      if (!(b - ym.states.back()).isZero(0.0)) {
        add_jump(t0, b - ym.states.back());
        ym.row_events.back() = EventKind::jump;
        ym.push(t1, b, index_of(b));
      }
      continue;
    }
    Vec a = follow[k] ? y.states[k - 1] : held[k];
    if (k > 1 && !(a - ym.states.back()).isZero(0.0)) {
      add_jump(t0, a - ym.states.back());
      ym.row_events.back() = EventKind::jump;
      ym.push(t0, a, index_of(a));
    }
    if (follow[k]) {
      for (const auto& p : w.density().pieces())
        if (p.t0 < t1 && p.t1 > t0) dens.add(detail::clip_piece(p, t0, t1));
    } else {
      dens.add(PiecewiseSignal::constant_piece(t0, t1, Vec(-field.eval(held[k]))));
    }
    ym.push(t1, b, index_of(b));
  }
  std::vector<Jump> js;
  for (auto& [t, d] : jumps)
    if (t > y.t_begin()) js.push_back({t, d});
  out.w = BVSignal(w.t0(), w.t1(), ym.states.front(), std::move(js), std::move(dens));
  return out;
}

// ---------------------------------------------------------------------------
// Integral identity

namespace detail {

/// Cubic Hermite interpolant on [0, h] at s.
inline Vec hermite(const Vec& y0, const Vec& d0, const Vec& y1, const Vec& d1, double h, double s) {
  double u = s / h, u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * y0 + (u3 - 2 * u2 + u) * h * d0 + (-2 * u3 + 3 * u2) * y1 + (u3 - u2) * h * d1;
}

}  // namespace detail

/// max over rows of |y(t) - y(t0) - int_{t0}^t g(y) - (w(t) - w(t0))|, the
/// integral taken over a cubic Hermite reconstruction of each cell with
/// 5-point Gauss-Legendre quadrature.
inline double integral_identity_residual(const PatchyField& field, const BVSignal& w, const Trajectory& y) {
  static constexpr double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                   0.9061798459386640};
  static constexpr double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                                   0.2369268850561891};
  const PiecewiseSignal& dens = w.density();
  Vec integral = Vec::Zero(y.dim());
  double worst = 0.0;
  const Vec w0 = w.eval_left(y.t_begin());
  for (std::size_t k = 1; k < y.size(); ++k) {
    double t0 = y.times[k - 1], t1 = y.times[k], h = t1 - t0;
    if (h > 0.0) {
      const auto& g = field.patch(y.alpha[k]).field;
      double mid = 0.5 * (t0 + t1);
      Vec d0 = g(y.states[k - 1]) + dens.value_within(t0, mid);
      Vec d1 = g(y.states[k]) + dens.value_within(t1, mid);
      for (int q = 0; q < 5; ++q) {
        double s = 0.5 * h * (gx[q] + 1.0);
        integral += 0.5 * h * gw[q] * g(detail::hermite(y.states[k - 1], d0, y.states[k], d1, h, s));
      }
    }
    bool post = (h == 0.0);
    Vec wt = post ? w.eval_right(t1) : w.eval_left(t1);
    double r = (y.states[k] - y.states[0] - integral - (wt - w0)).norm();
    worst = std::max(worst, r);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Distance to the solution set and convergence

inline double distance_to_solution_set(const Trajectory& y, const PatchyField& field, const IntegratorConfig& cfg,
                                       std::size_t branch_cap) {
  auto sols = enumerate_solutions(field, y.states.front(), y.t_begin(), y.t_end(), cfg, branch_cap);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : sols) best = std::min(best, sup_distance(x, y));
  return best;
}

struct ConvergenceRow {
  double tv = 0.0;
  double distance = 0.0;
};

/// For each tv, w = profile scaled to total variation tv; the impulsive
/// solution from x0 is compared with the Caratheodory solution set.
inline std::vector<ConvergenceRow> convergence_study(const PatchyField& field, const Vec& x0,
                                                     const std::vector<double>& tv_sequence, const BVSignal& profile,
                                                     const IntegratorConfig& cfg, std::size_t branch_cap = 16) {
  double base = profile.total_variation();
  if (!(base > 0.0)) throw ValidationError("convergence_study: jump profile has zero total variation");
  for (std::size_t i = 1; i < tv_sequence.size(); ++i)
    if (tv_sequence[i] > tv_sequence[i - 1]) throw ValidationError("convergence_study: tv_sequence must decrease");
  std::vector<ConvergenceRow> rows(tv_sequence.size());
  parallel_for(tv_sequence.size(), [&](std::size_t i) {
    double tv = tv_sequence[i];
    BVSignal w = tv == 0.0 ? BVSignal::zero(profile.dim(), profile.t0(), profile.t1()) : profile.scaled(tv / base);
    auto y = solve_impulsive(field, w, x0, profile.t0(), profile.t1(), cfg);
    rows[i] = {tv, distance_to_solution_set(y, field, cfg, branch_cap)};
  });
  return rows;
}

/// Distances non-increasing up to `slack`, and a 100-fold tv reduction
/// shrinks the distance at least 10-fold.
inline bool convergence_pass(const std::vector<ConvergenceRow>& rows, double slack = 0.1) {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].distance > rows[i - 1].distance * (1.0 + slack) + 1e-12) return false;
  if (rows.size() >= 2 && rows.front().tv > 0.0 && rows.back().tv <= rows.front().tv / 100.0)
    if (!(rows.back().distance < rows.front().distance / 10.0)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Reachability experiments

struct CellOutcome {
  Vec x0;
  bool reached = false;
  double t_hit = std::numeric_limits<double>::quiet_NaN();
  bool stayed_in_domain = true;
  bool index_monotone = true;
  std::string note;
};

struct RobustnessReport {
  std::string scenario;
  std::string kind;
  double r = 0.0;
  double s = 0.0;
  double chi = 0.0;
  double delta = 0.0;
  double k_bar = 0.0;
  bool check_monotone = false;
  std::vector<CellOutcome> outcomes;
  bool pass = false;

  bool cell_pass(const CellOutcome& c) const {
    return c.reached && c.stayed_in_domain && (!check_monotone || c.index_monotone);
  }

  std::vector<std::size_t> failing_cells() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      if (!cell_pass(outcomes[i])) out.push_back(i);
    return out;
  }

  void finalize() {
    pass = !outcomes.empty();
    for (const auto& c : outcomes) pass = pass && cell_pass(c);
  }
};

/// First time with |x| < r, interpolated on the row where the grid first
/// lands strictly inside. Grazing |x| = r does not count.
inline std::optional<double> reach_time(const Trajectory& tr, double r) {
  for (std::size_t k = 0; k < tr.size(); ++k) {
    double nk = tr.states[k].norm();
    if (!(nk < r)) continue;
    if (k == 0) return tr.times[0];
    double np = tr.states[k - 1].norm();
    if (tr.times[k] == tr.times[k - 1] || !(np >= r)) return tr.times[k];
    double th = (np - r) / (np - nk);
    return tr.times[k - 1] + th * (tr.times[k] - tr.times[k - 1]);
  }
  return std::nullopt;
}

inline void score_cell(CellOutcome& c, const Trajectory& tr, double r, std::optional<double> exit_time) {
  auto hit = reach_time(tr, r);
  if (hit) {
    c.reached = true;
    c.t_hit = *hit;
  }
  if (exit_time) {
    c.stayed_in_domain = hit && *hit < *exit_time;
    if (!c.stayed_in_domain) c.note = "left the domain";
  }
  if (!c.reached && c.note.empty()) c.note = "target not reached";
}

struct FeedbackCell {
  Vec x0;
  BVSignal zeta;
  PiecewiseSignal d;
};

inline void check_annulus(const Vec& x0, double r, double s) {
  double n = x0.norm();
  if (n < r - 1e-12 || n > s + 1e-12) {
    std::ostringstream os;
    os << "initial state (" << x0.transpose() << ") is outside the annulus " << r << " <= |x| <= " << s;
    throw ConfigError(os.str());
  }
}

/// Perturbed-feedback reachability: every cell must reach |x| < r before T
/// without leaving the domain.
inline RobustnessReport robustness_run(const PatchyFeedback& fb, double r, double s, double chi,
                                       const std::vector<FeedbackCell>& cells, double T, const IntegratorConfig& cfg) {
  if (!(r < s)) throw ConfigError("robustness_run: need r < s");
  for (const auto& c : cells) {
    check_annulus(c.x0, r, s);
    if (c.zeta.total_variation() > chi * (1.0 + 1e-12)) throw ConfigError("robustness_run: TV{zeta} exceeds chi");
    if (!c.d.empty() && c.d.sup_norm(0.0, T) > chi * (1.0 + 1e-12))
      throw ConfigError("robustness_run: |d| exceeds chi");
  }
  RobustnessReport rep;
  rep.kind = "feedback";
  rep.r = r;
  rep.s = s;
  rep.chi = chi;
  rep.outcomes.resize(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    CellOutcome& c = rep.outcomes[i];
    c.x0 = cells[i].x0;
    Trajectory tr;
    std::optional<double> exit_time;
    try {
      tr = solve_perturbed_feedback(fb, cells[i].zeta, cells[i].d, cells[i].x0, T, cfg);
    } catch (const OutsideDomain& e) {
      exit_time = e.time();
      if (e.partial()) tr = *e.partial();
    } catch (const EventOverflow& e) {
      c.note = e.what();
      c.stayed_in_domain = false;
      return;
    }
    score_cell(c, tr, r, exit_time);
    c.index_monotone = check_index_monotone(tr).monotone;
  });
  rep.finalize();
  return rep;
}

enum class ErrorFamily { zero, random, alternating };

inline const char* family_name(ErrorFamily f) {
  switch (f) {
    case ErrorFamily::zero:
      return "zero";
    case ErrorFamily::random:
      return "random";
    case ErrorFamily::alternating:
      return "alternating";
  }
  return "zero";
}

inline ErrorFamily parse_family(const std::string& s) {
  if (s == "zero") return ErrorFamily::zero;
  if (s == "random") return ErrorFamily::random;
  if (s == "alternating") return ErrorFamily::alternating;
  throw ConfigError("unknown error family '" + s + "'");
}

/// Measurement errors e_0..e_{m-1} with |e_i| <= bound.
inline std::vector<Vec> make_errors(ErrorFamily f, std::size_t count, double bound, Eigen::Index dim,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto unit = [&] {
    Vec u(dim);
    for (Eigen::Index k = 0; k < dim; ++k) u[k] = detail::unit_uniform(rng);
    return direction_from_unit_cube(u, dim);
  };
  std::vector<Vec> e(count, Vec::Zero(dim));
  if (f == ErrorFamily::random) {
    for (auto& v : e) {
      Vec dir = unit();
      v = bound * std::pow(detail::unit_uniform(rng), 1.0 / static_cast<double>(dim)) * dir;
    }
  } else if (f == ErrorFamily::alternating) {
    Vec dir = unit();
    for (std::size_t i = 0; i < count; ++i) e[i] = (i % 2 == 0 ? bound : -bound) * dir;
  }
  return e;
}

/// Piecewise-constant disturbance on [0, T] with `pieces` equal pieces and
/// |d| <= chi.
inline PiecewiseSignal make_disturbance(double T, double chi, Eigen::Index dim, std::uint64_t seed,
                                        std::size_t pieces = 8) {
  PiecewiseSignal d(dim);
  if (chi <= 0.0 || pieces == 0) return d;
  std::mt19937_64 rng(seed);
  for (std::size_t p = 0; p < pieces; ++p) {
    Vec u(dim);
    for (Eigen::Index k = 0; k < dim; ++k) u[k] = detail::unit_uniform(rng);
    Vec v = chi * detail::unit_uniform(rng) * direction_from_unit_cube(u, dim);
    double a = T * static_cast<double>(p) / static_cast<double>(pieces);
    double b = (p + 1 == pieces) ? T : T * static_cast<double>(p + 1) / static_cast<double>(pieces);
    d.add(PiecewiseSignal::constant_piece(a, b, v));
  }
  return d;
}

/// Pure-jump signal on [0, T] with `jumps` jumps at random times and total
/// variation just under tv.
inline BVSignal make_jump_signal(double T, double tv, Eigen::Index dim, std::uint64_t seed, std::size_t jumps = 3) {
  if (tv <= 0.0 || jumps == 0) return BVSignal::zero(dim, 0.0, T);
  std::mt19937_64 rng(seed);
  std::vector<double> times, weights;
  for (std::size_t i = 0; i < jumps; ++i) {
    times.push_back(T * (0.05 + 0.9 * detail::unit_uniform(rng)));
    weights.push_back(0.1 + detail::unit_uniform(rng));
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  double total = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) total += weights[i];
  std::vector<Jump> js;
  for (std::size_t i = 0; i < times.size(); ++i) {
    Vec u(dim);
    for (Eigen::Index k = 0; k < dim; ++k) u[k] = detail::unit_uniform(rng);
    js.push_back({times[i], tv * (1.0 - 1e-12) * weights[i] / total * direction_from_unit_cube(u, dim)});
  }
  return BVSignal(0.0, T, Vec::Zero(dim), std::move(js));
}

struct SamplingCell {
  Vec x0;
  ErrorFamily errors = ErrorFamily::zero;
  std::uint64_t seed = 0;
  PiecewiseSignal d;
};

/// Sample-and-hold reachability with partitions drawn per cell (steps in
/// [delta/2, delta]) and errors |e_i| <= k_bar delta. A cell also fails
/// when its measured index sequence decreases.
inline RobustnessReport sampling_robustness_run(const PatchyFeedback& fb, double r, double s, double chi,
                                                double delta, double k_bar, const std::vector<SamplingCell>& cells,
                                                double T, const IntegratorConfig& cfg) {
  if (!(r < s)) throw ConfigError("sampling_robustness_run: need r < s");
  if (!(delta > 0.0) || !(k_bar > 0.0)) throw ConfigError("sampling_robustness_run: delta and k_bar must be positive");
  for (const auto& c : cells) {
    check_annulus(c.x0, r, s);
    if (!c.d.empty() && c.d.sup_norm(0.0, T) > chi * (1.0 + 1e-12))
      throw ConfigError("sampling_robustness_run: |d| exceeds chi");
  }
  RobustnessReport rep;
  rep.kind = "sampling";
  rep.r = r;
  rep.s = s;
  rep.chi = chi;
  rep.delta = delta;
  rep.k_bar = k_bar;
  rep.check_monotone = true;
  rep.outcomes.resize(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const SamplingCell& cell = cells[i];
    CellOutcome& c = rep.outcomes[i];
    c.x0 = cell.x0;
    auto taus = SamplingPlan::seeded_partition(T, delta, cell.seed);
    auto errs = make_errors(cell.errors, taus.size() - 1, k_bar * delta, cell.x0.size(), cell.seed ^ 0x9e3779b97f4a7c15ULL);
    SamplingPlan plan(std::move(taus), std::move(errs), delta);
    Trajectory tr;
    std::optional<double> exit_time;
    try {
      tr = solve_sampling(fb, plan, cell.d, cell.x0, cfg);
    } catch (const OutsideDomain& e) {
      exit_time = e.time();
      if (e.partial()) tr = *e.partial();
    }
    score_cell(c, tr, r, exit_time);
    auto mono = check_sequence_monotone(tr.measured, plan.taus());
    c.index_monotone = mono.monotone;
    if (!mono.monotone) c.note = (c.note.empty() ? "" : c.note + "; ") + "measured index decreased";
  });
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------
// Invariance and transit checks on one patch

namespace detail {

/// RK4 for x' = g(x) + d(t) on one patch; `observe(t, x)` after every step
/// returns false to stop.
template <class Observe>
void integrate_patch(const Patch& p, const PiecewiseSignal& d, const Vec& x0, double T, double dt, Observe&& observe) {
  std::vector<double> cuts;
  for (double b : d.breakpoints())
    if (b > 0.0 && b < T) cuts.push_back(b);
  cuts.push_back(T);
  double t = 0.0;
  Vec x = x0;
  for (double c : cuts) {
    double span = c - t;
    auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / dt - 1e-9)));
    double h = span / static_cast<double>(n);
    double ref = t + 0.5 * span;
    auto rhs = [&](double s, const Vec& y) {
      Vec v = p.field(y);
      if (!d.empty()) v += d.value_within(s, ref);
      return v;
    };
    for (std::size_t j = 0; j < n; ++j) {
      double ts = t + static_cast<double>(j) * h;
      Vec k1 = rhs(ts, x);
      Vec k2 = rhs(ts + 0.5 * h, x + (0.5 * h) * k1);
      Vec k3 = rhs(ts + 0.5 * h, x + (0.5 * h) * k2);
      Vec k4 = rhs(ts + h, x + h * k3);
      Vec xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!observe(ts, x, ts + h, xn, rhs)) return;
      x = std::move(xn);
    }
    t = c;
  }
}

}  // namespace detail

/// First time the single-patch flow from x0 reaches the inset
/// {signed_distance >= level}, refined by bisection on the crossing step.
inline std::optional<double> first_entry_time(const Patch& p, const Vec& x0, double level, const PiecewiseSignal& d,
                                              double T, const IntegratorConfig& cfg) {
  const auto& dom = p.domain;
  if (dom.signed_distance(x0) >= level) return 0.0;
  std::optional<double> hit;
  detail::integrate_patch(p, d, x0, T, cfg.dt, [&](double t0, const Vec& x, double t1, const Vec& xn, auto& rhs) {
    if (dom.signed_distance(xn) < level) return true;
    double lo = 0.0, hi = t1 - t0;
    auto step = [&](double h) {
      Vec k1 = rhs(t0, x);
      Vec k2 = rhs(t0 + 0.5 * h, x + (0.5 * h) * k1);
      Vec k3 = rhs(t0 + 0.5 * h, x + (0.5 * h) * k2);
      Vec k4 = rhs(t0 + h, x + h * k3);
      return Vec(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    };
    while (hi - lo > cfg.event_tol) {
      double mid = 0.5 * (lo + hi);
      (dom.signed_distance(step(mid)) >= level ? hi : lo) = mid;
    }
    hit = t0 + hi;
    return false;
  });
  return hit;
}

struct InvarianceReport {
  int patch = 0;
  double rho = 0.0;
  double chi = 0.0;
  std::size_t p2_runs = 0;
  std::size_t p2_violations = 0;
  double p2_first_violation = std::numeric_limits<double>::quiet_NaN();
  std::size_t p3_runs = 0;
  std::size_t p3_missed = 0;
  double c_transit = 0.0;
  double c_transit_reseeded = 0.0;
  bool p3_stable = false;
  bool pass = false;
};

/// (P)2: runs from the inset Omega^rho with |d| <= chi stay in Omega^rho.
/// (P)3: runs from the rho-collar reach Omega^{2 rho}; c_transit is the
/// largest entry time divided by rho, and must agree within 20% with a
/// reseeded ensemble.
inline InvarianceReport invariance_checks(const Patch& patch, double rho, double chi, std::size_t sample_budget,
                                          double T, const IntegratorConfig& cfg, std::uint64_t seed = 0) {
  if (!(rho >= 0.0) || !(chi >= 0.0)) throw ConfigError("invariance_checks: rho and chi must be non-negative");
  const auto& dom = patch.domain;
  const Eigen::Index n = dom.dim();
  InvarianceReport rep;
  rep.patch = patch.index;
  rep.rho = rho;
  rep.chi = chi;

  // (P)2
  std::vector<Vec> starts;
  for (std::uint64_t i = 0; starts.size() < sample_budget && i < 64 * sample_budget + 64; ++i) {
    Vec u = halton(i, static_cast<std::size_t>(n), 2);
    Vec x = dom.anchor() + dom.bounding_radius() * (2.0 * u.array() - 1.0).matrix();
    if (dom.inset_contains(rho, x)) starts.push_back(x);
  }
  std::vector<double> violation(starts.size(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(starts.size(), [&](std::size_t i) {
    auto d = make_disturbance(T, chi, n, seed + 1000003ULL * (i + 1));
    detail::integrate_patch(patch, d, starts[i], T, cfg.dt, [&](double, const Vec&, double t1, const Vec& xn, auto&) {
      if (dom.inset_contains(rho, xn)) return true;
      violation[i] = t1;
      return false;
    });
  });
  rep.p2_runs = starts.size();
  for (double v : violation) {
    if (std::isnan(v)) continue;
    if (rep.p2_violations++ == 0 || v < rep.p2_first_violation) rep.p2_first_violation = v;
  }

  // (P)3
  auto transit = [&](std::size_t offset, std::uint64_t s) {
    std::vector<double> ratio(sample_budget, 0.0);
    std::vector<char> missed(sample_budget, 0);
    parallel_for(sample_budget, [&](std::size_t i) {
      auto [x, b] = detail::shell_point(dom, i + offset, -rho, 0.0, 5);
      if (!dom.contains(x)) return;
      auto d = make_disturbance(T, chi, n, s + 7919ULL * (i + 1));
      auto t = first_entry_time(patch, x, 2.0 * rho, d, T, cfg);
      if (!t)
        missed[i] = 1;
      else if (rho > 0.0)
        ratio[i] = *t / rho;
    });
    double c = 0.0;
    std::size_t miss = 0;
    for (std::size_t i = 0; i < sample_budget; ++i) {
      c = std::max(c, ratio[i]);
      miss += static_cast<std::size_t>(missed[i]);
    }
    return std::pair{c, miss};
  };
  auto [c1, miss1] = transit(0, seed);
  auto [c2, miss2] = transit(sample_budget, seed + 0x5851f42d4c957f2dULL);
  rep.p3_runs = sample_budget;
  rep.p3_missed = miss1;
  rep.c_transit = c1;
  rep.c_transit_reseeded = c2;
  double hi = std::max(c1, c2);
  rep.p3_stable = hi == 0.0 || std::abs(c1 - c2) <= 0.2 * hi;
  rep.pass = rep.p2_violations == 0 && miss1 == 0 && miss2 == 0 && rep.p3_stable;
  return rep;
}

}  // namespace patchy

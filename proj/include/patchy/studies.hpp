#pragma once

/**
 * @file studies.hpp
 * @brief Scenario-level drivers behind the CLI: solver runs by mode and the
 * five studies, each producing its artifacts and a pass verdict.
 */

#include "patchy/scenario.hpp"

namespace patchy {

enum class RunMode { carath, impulsive, feedback, sampling };
enum class StudyKind { convergence, prop22, robust, sampling, invariance };

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "carath") return RunMode::carath;
  if (s == "impulsive") return RunMode::impulsive;
  if (s == "feedback") return RunMode::feedback;
  if (s == "sampling") return RunMode::sampling;
  throw ConfigError("unknown mode '" + s + "' (expected carath, impulsive, feedback or sampling)");
}

inline StudyKind parse_study_kind(const std::string& s) {
  if (s == "convergence") return StudyKind::convergence;
  if (s == "prop22") return StudyKind::prop22;
  if (s == "robust") return StudyKind::robust;
  if (s == "sampling") return StudyKind::sampling;
  if (s == "invariance") return StudyKind::invariance;
  throw ConfigError("unknown study '" + s + "' (expected convergence, prop22, robust, sampling or invariance)");
}

/// Derives the seed of item `k` from a base seed (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Trajectory run_scenario(const Scenario& sc, RunMode mode, const IntegratorConfig& cfg) {
  switch (mode) {
    case RunMode::carath:
      return solve_caratheodory(sc.closed_field(), sc.x0, sc.t0, sc.T, cfg);
    case RunMode::impulsive:
      if (!sc.w) throw ConfigError("signals.w: impulsive mode needs a 'w' signal");
      return solve_impulsive(sc.closed_field(), *sc.w, sc.x0, sc.t0, sc.T, cfg);
    case RunMode::feedback:
      return solve_perturbed_feedback(sc.require_feedback("feedback mode"), sc.signal_or_zero(sc.zeta),
                                      sc.disturbance_or_zero(), sc.x0, sc.T, cfg);
    case RunMode::sampling: {
      const auto& fb = sc.require_feedback("sampling mode");
      return solve_sampling(fb, sc.sampling_plan(cfg.rng_seed), sc.disturbance_or_zero(), sc.x0, cfg);
    }
  }
  throw ConfigError("unknown mode");
}

struct StudyResult {
  bool pass = false;
  std::string status;  // pass, fail or inconclusive
  std::optional<std::string> csv;
  json report;
};

inline StudyResult study_convergence(const Scenario& sc, const IntegratorConfig& cfg) {
  if (!sc.convergence) throw ConfigError("study.convergence: section missing");
  const auto& spec = *sc.convergence;
  const BVSignal* profile = spec.profile ? &*spec.profile : (sc.w ? &*sc.w : nullptr);
  if (!profile) throw ConfigError("study.convergence: needs a 'profile' or a 'w' signal");
  auto rows = convergence_study(sc.closed_field(), sc.x0, spec.tv_sequence, *profile, cfg, spec.branch_cap);
  StudyResult out;
  out.pass = convergence_pass(rows, spec.slack);
  out.status = out.pass ? "pass" : "fail";
  std::ostringstream os;
  write_convergence_csv(os, rows);
  out.csv = os.str();
  out.report = make_report("convergence", sc.name, to_json(rows));
  out.report["pass"] = out.pass;
  return out;
}

inline StudyResult study_prop22(const Scenario& sc, const IntegratorConfig& cfg) {
  if (!sc.prop22) throw ConfigError("study.prop22: section missing");
  if (!sc.w) throw ConfigError("study.prop22: needs a 'w' signal");
  const auto& spec = *sc.prop22;
  PatchyField field = sc.closed_field();
  Trajectory y = solve_impulsive(field, *sc.w, sc.x0, sc.t0, sc.T, cfg);
  Prop22Report r;
  r.partition = monotone_partition(y, field);
  r.constants = estimate_constants(field, spec.rho_bar, spec.sample_budget, spec.options);
  r.tv = sc.w->total_variation();
  r.bound = r.constants.C_big * r.tv;
  Modification m = monotone_modification(y, *sc.w, r.partition, field);
  r.modification_monotone = check_index_monotone(m.y).monotone;
  r.modification_distance = sup_distance(m.y, y);
  r.modification_bound = r.constants.M * r.partition.excess_measure + r.tv + 10.0 * cfg.dt;
  StudyResult out;
  try {
    bool ok = check_prop22_budget(r.partition, *sc.w, r.constants) && r.modification_monotone &&
              r.modification_distance <= r.modification_bound;
    r.status = ok ? "pass" : "fail";
    out.pass = ok;
  } catch (const Inconclusive&) {
    r.status = "inconclusive";
    out.pass = true;
  }
  out.status = r.status;
  out.report = make_report("prop22", sc.name, to_json(r));
  return out;
}

inline StudyResult study_robust(const Scenario& sc, const IntegratorConfig& cfg) {
  if (!sc.robust) throw ConfigError("study.robust: section missing");
  const auto& spec = *sc.robust;
  const auto& fb = sc.require_feedback("study.robust");
  const double T = spec.horizon.value_or(sc.T);
  auto starts = spec.grid.resolve(sc.dim, cfg.rng_seed);
  std::vector<FeedbackCell> cells;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    auto zeta = make_jump_signal(T, spec.chi, sc.dim, derive_seed(cfg.rng_seed, 2 * i), spec.zeta_jumps);
    auto d = make_disturbance(T, spec.chi, sc.dim, derive_seed(cfg.rng_seed, 2 * i + 1), spec.d_pieces);
    cells.push_back({starts[i], std::move(zeta), std::move(d)});
  }
  auto rep = robustness_run(fb, spec.r, spec.s, spec.chi, cells, T, cfg);
  rep.scenario = sc.name;
  StudyResult out;
  out.pass = rep.pass;
  out.status = rep.pass ? "pass" : "fail";
  std::ostringstream os;
  write_robustness_csv(os, rep, sc.dim);
  out.csv = os.str();
  out.report = make_report("robustness", sc.name, to_json(rep));
  return out;
}

inline StudyResult study_sampling(const Scenario& sc, const IntegratorConfig& cfg) {
  if (!sc.sampling) throw ConfigError("study.sampling: section missing");
  const auto& spec = *sc.sampling;
  const auto& fb = sc.require_feedback("study.sampling");
  const double T = spec.horizon.value_or(sc.T);
  std::optional<RobustnessConstants> k;
  if (!spec.chi || !spec.delta || !spec.k_bar)
    k = estimate_constants(closed_loop(fb), spec.rho_bar, spec.sample_budget, spec.options);
  const double chi = spec.chi ? *spec.chi : k->chi_double_prime;
  const double delta = spec.delta ? *spec.delta : k->delta_bar;
  const double k_bar = spec.k_bar ? *spec.k_bar : k->k_bar;
  auto starts = spec.grid.resolve(sc.dim, cfg.rng_seed);
  std::vector<SamplingCell> cells;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    SamplingCell c;
    c.x0 = starts[i];
    c.errors = static_cast<ErrorFamily>(spec.families[i % spec.families.size()]);
    c.seed = derive_seed(cfg.rng_seed, 2 * i);
    c.d = make_disturbance(T, chi, sc.dim, derive_seed(cfg.rng_seed, 2 * i + 1), spec.d_pieces);
    cells.push_back(std::move(c));
  }
  auto rep = sampling_robustness_run(fb, spec.r, spec.s, chi, delta, k_bar, cells, T, cfg);
  rep.scenario = sc.name;
  StudyResult out;
  out.pass = rep.pass;
  out.status = rep.pass ? "pass" : "fail";
  std::ostringstream os;
  write_robustness_csv(os, rep, sc.dim);
  out.csv = os.str();
  out.report = make_report("sampling", sc.name, to_json(rep));
  if (k) out.report["constants"] = to_json(*k);
  return out;
}

inline StudyResult study_invariance(const Scenario& sc, const IntegratorConfig& cfg) {
  if (!sc.invariance) throw ConfigError("study.invariance: section missing");
  const auto& spec = *sc.invariance;
  PatchyField field = sc.closed_field();
  const auto ids = field.indices();
  if (std::find(ids.begin(), ids.end(), spec.patch) == ids.end())
    throw ConfigError("study.invariance.patch: no patch with index " + std::to_string(spec.patch));
  auto rep = invariance_checks(field.patch(spec.patch), spec.rho, spec.chi, spec.samples, spec.horizon, cfg,
                               cfg.rng_seed);
  StudyResult out;
  out.pass = rep.pass;
  out.status = rep.pass ? "pass" : "fail";
  out.report = make_report("invariance", sc.name, to_json(rep));
  return out;
}

inline StudyResult run_study(const Scenario& sc, StudyKind kind, const IntegratorConfig& cfg) {
  switch (kind) {
    case StudyKind::convergence:
      return study_convergence(sc, cfg);
    case StudyKind::prop22:
      return study_prop22(sc, cfg);
    case StudyKind::robust:
      return study_robust(sc, cfg);
    case StudyKind::sampling:
      return study_sampling(sc, cfg);
    case StudyKind::invariance:
      return study_invariance(sc, cfg);
  }
  throw ConfigError("unknown study");
}

}  // namespace patchy

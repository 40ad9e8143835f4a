// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// when any criterion fails.

#include "oracles.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

using namespace patchy;
namespace fs = std::filesystem;

namespace {

IntegratorConfig config(double dt = 1e-3) {
  IntegratorConfig cfg;
  cfg.dt = dt;
  cfg.event_tol = std::min(1e-6, 0.5 * dt);
  return cfg;
}

std::string scenario(const std::string& name) { return std::string(PATCHY_SCENARIO_DIR) + "/" + name; }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << what;
      pass = false;
    }
  }
};

Vec random_in_annulus(std::mt19937_64& rng, double r_lo, double r_hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = std::sqrt(r_lo * r_lo + (r_hi * r_hi - r_lo * r_lo) * u(rng));
  double th = 2.0 * std::numbers::pi * u(rng);
  return r * vec2(std::cos(th), std::sin(th));
}

double s1_error(double dt) {
  Vec x0 = vec2(1.5, 0.5);
  auto tr = solve_caratheodory(fixtures::s1(), x0, 0.0, 2.0, config(dt));
  return (tr.final_state() - oracle::decay(x0, 2.0)).norm();
}

void closed_form_accuracy(Outcome& o) {
  double e = s1_error(1e-3);
  double f1 = s1_error(0.1) / s1_error(0.05), f2 = s1_error(0.05) / s1_error(0.025);
  o.detail << "endpoint error " << e << ", halving factors " << f1 << ", " << f2;
  o.require(e <= 1e-6, "");
  o.require(f1 >= 12.0 && f2 >= 12.0, "");
}

void switch_localization(Outcome& o) {
  auto tr = solve_caratheodory(fixtures::s2(), vec2(2.5, 0), 0.0, 3.0, config());
  o.require(tr.count_events(EventKind::switch_index) == 1, "expected one switch");
  if (!o.pass) return;
  auto e = std::find_if(tr.events.begin(), tr.events.end(), [](const Event& v) { return v.kind == EventKind::switch_index; });
  double err = std::abs(e->time - std::log(5.0 / 3.0));
  o.detail << "switch time error " << err;
  o.require(err <= 1e-4, "");
}

void index_monotonicity(Outcome& o) {
  std::mt19937_64 rng(1);
  auto s2 = fixtures::s2();
  auto s3 = closed_loop(fixtures::s3());
  int runs = 0, violations = 0;
  for (int i = 0; i < 200; ++i, ++runs)
    if (!check_index_monotone(solve_caratheodory(s2, random_in_annulus(rng, 0.0, 2.9), 0.0, 3.0, config())).monotone)
      ++violations;
  for (int i = 0; i < 200; ++i, ++runs)
    if (!check_index_monotone(solve_caratheodory(s3, random_in_annulus(rng, 0.3, 2.0), 0.0, 3.0, config())).monotone)
      ++violations;
  o.detail << runs << " runs (200 on S2, 200 on S3), " << violations << " violations";
  o.require(violations == 0, "");
}

void integral_identity(Outcome& o) {
  const double dt = 1e-3;
  struct Case {
    const char* name;
    PatchyField field;
    BVSignal w;
    Vec x0;
    double T;
  };
  PiecewiseSignal dens(2);
  dens.add(PiecewiseSignal::constant_piece(0.0, 1.0, vec2(0.3, -0.2)));
  dens.add(PiecewiseSignal::sinusoid_piece(1.0, 2.0, vec2(0.1, 0.1), vec2(4.0, 2.0), vec2(0.0, 0.5)));
  std::vector<Case> cases = {
      {"S1 jump", fixtures::s1(), BVSignal::single_jump(0.0, 2.0, 1.0, vec2(0.1, 0)), vec2(1.5, 0.5), 2.0},
      {"S1 density", fixtures::s1(), BVSignal(0.0, 2.0, vec2(0, 0), {Jump{0.7, vec2(0, 0.2)}}, dens), vec2(1, 1), 2.0},
      {"S2 relocation", fixtures::s2(), fixtures::relocation_jump(3.0), fixtures::relocation_start(), 3.0},
      {"S2 kick", fixtures::s2(), fixtures::kick_out(3.0, 0.001), fixtures::relocation_start(), 3.0},
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    auto y = solve_impulsive(c.field, c.w, c.x0, 0.0, c.T, config(dt));
    double tol = 10.0 * std::pow(dt, 4) * c.T + 1e-9;
    double res = integral_identity_residual(c.field, c.w, y);
    worst = std::max(worst, res / tol);
    o.require(res <= tol, std::string(c.name) + " residual too large; ");
  }
  o.detail << cases.size() << " fixtures, worst residual/tolerance " << worst;
}

void solution_set_trend(Outcome& o) {
  auto s1 = convergence_study(fixtures::s1(), vec2(1.5, 0.5), {0.1, 0.01, 0.001},
                              BVSignal::single_jump(0.0, 2.0, 1.0, vec2(1, 0)), config());
  double worst = 0.0;
  for (const auto& r : s1) {
    double err = std::abs(r.distance - r.tv);
    worst = std::max(worst, err / (0.02 * r.tv + 2e-3));
  }
  std::vector<double> tvs;
  for (int k = 0; k <= 6; ++k) tvs.push_back(0.1 / std::pow(2.0, k));
  auto s2 = convergence_study(fixtures::s2(), vec2(2.5, 0), tvs, BVSignal::single_jump(0.0, 3.0, 0.2, vec2(0, 1)),
                              config());
  o.detail << "S1 worst error/tolerance " << worst << "; S2 distances";
  for (const auto& r : s2) o.detail << ' ' << r.distance;
  o.require(worst <= 1.0, "");
  o.require(convergence_pass(s2, 0.1), "");
}

void prop22_partition(Outcome& o) {
  // Exhaustive: every history of length <= 12 over every index set of size <= 3
  // drawn from {1, 2, 3}, with deterministic integer widths.
  const std::vector<std::vector<int>> sets = {{1}, {2}, {3}, {1, 2}, {1, 3}, {2, 3}, {1, 2, 3}};
  std::size_t cases = 0, mismatches = 0;
  for (const auto& allowed : sets) {
    for (std::size_t K = 1; K <= 12; ++K) {
      std::size_t total = 1;
      for (std::size_t k = 0; k < K; ++k) total *= allowed.size();
      std::vector<int> h(K);
      std::vector<double> w(K);
      for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t k = 0; k < K; ++k) {
          h[k] = allowed[c % allowed.size()];
          c /= allowed.size();
          w[k] = static_cast<double>(1 + (code + 3 * k) % 4);
        }
        double ex = 0.0;
        auto env = optimal_envelope(h, w, allowed, &ex);
        auto ref = oracle::brute_envelope(h, w, allowed);
        if (ex != ref.excess || env != ref.levels) ++mismatches;
        ++cases;
      }
    }
  }
  // Small perturbation of the relocation start (TV{w} < delta).
  const double h = 0.001;
  auto F = fixtures::s2();
  auto w = fixtures::kick_out(3.0, h);
  auto y = solve_impulsive(F, w, fixtures::relocation_start(), 0.0, 3.0, config());
  auto part = monotone_partition(y, F);
  auto k = estimate_constants(F, 0.2, 256);
  o.detail << cases << " histories, " << mismatches << " mismatches; kick TV " << w.total_variation() << " < delta "
           << k.delta << ", excess " << part.excess_measure << " < C*TV " << k.C_big * w.total_variation();
  o.require(mismatches == 0, "");
  o.require(w.total_variation() < k.delta, "");
  o.require(part.excess_measure < k.C_big * w.total_variation(), "");
}

void prop22_modification(Outcome& o) {
  const double dt = 1e-3;
  struct Case {
    const char* name;
    PatchyField field;
    BVSignal w;
    Vec x0;
    double T;
    double rho_bar;
  };
  std::vector<Case> cases = {
      {"kick", fixtures::s2(), fixtures::kick_out(3.0, 0.001), fixtures::relocation_start(), 3.0, 0.2},
      {"relocation", fixtures::s2(), fixtures::relocation_jump(3.0), fixtures::relocation_start(), 3.0, 0.2},
      {"S2 unperturbed", fixtures::s2(), BVSignal::zero(2, 0.0, 3.0), vec2(2.5, 0), 3.0, 0.2},
      {"tangency", fixtures::tangency(), BVSignal::single_jump(0.0, 3.0, 1.0, vec2(0, 0.05)), fixtures::tangency_start(),
       3.0, 0.1},
  };
  std::size_t non_trivial = 0;
  for (const auto& c : cases) {
    auto y = solve_impulsive(c.field, c.w, c.x0, 0.0, c.T, config(dt));
    auto part = monotone_partition(y, c.field);
    auto m = monotone_modification(y, c.w, part, c.field);
    auto k = estimate_constants(c.field, c.rho_bar, 256);
    std::string n = c.name;
    o.require(check_index_monotone(m.y).monotone, n + ": modified index log not monotone; ");
    for (std::size_t i = 0; i < m.y.size(); ++i)
      if (c.field.alpha_star(m.y.states[i]) != m.y.alpha[i]) {
        o.require(false, n + ": logged index differs from alpha*; ");
        break;
      }
    bool any_excess = false;
    for (std::size_t i = 1; i < y.size(); ++i) {
      if (m.excess_cell[i - 1]) {
        any_excess = true;
        continue;
      }
      double t = y.times[i];
      Vec v = y.times[i - 1] == t ? m.y.value_right(t) : m.y.value_left(t);
      if ((v - y.states[i]).norm() > 1e-12) {
        o.require(false, n + ": modification moves a non-excess cell; ");
        break;
      }
    }
    non_trivial += any_excess ? 1 : 0;
    double bound = k.M * part.excess_measure + c.w.total_variation() + 10.0 * dt;
    o.require(sup_distance(m.y, y) <= bound, n + ": sup distance above bound; ");
    if (part.excess_measure == 0.0)
      o.require(m.y.times == y.times && sup_distance(m.y, y) == 0.0, n + ": not the identity on a monotone input; ");
  }
  if (o.pass) o.detail << cases.size() << " fixtures, " << non_trivial << " with a non-empty excess set";
}

void reduction_equivalence(Outcome& o) {
  auto fb = fixtures::s2_feedback();
  PiecewiseSignal zd(2);
  zd.add(PiecewiseSignal::constant_piece(0.0, 3.0, vec2(0.002, 0)));
  BVSignal zeta(0.0, 3.0, vec2(0, 0), {Jump{1.0, vec2(0.004, 0)}}, zd);
  auto d = PiecewiseSignal::constant(0.0, 3.0, vec2(0, 0.01));
  Vec x0 = vec2(2.5, 0.1);
  auto cfg = config();
  auto x = solve_perturbed_feedback(fb, zeta, d, x0, 3.0, cfg);
  auto y = shift_by_signal(x, zeta);
  auto w = build_equivalent_w(y, zeta, d, fb);
  auto yi = solve_impulsive(closed_loop(fb), w, x0 + zeta.eval_left(0.0), 0.0, 3.0, cfg);
  double dist = sup_distance(y, yi);
  o.detail << "TV{zeta} " << zeta.total_variation() << ", |d| " << d.sup_norm(0.0, 3.0) << ", sup distance " << dist;
  o.require(std::abs(zeta.total_variation() - 0.01) < 1e-12, "");
  o.require(dist <= 1e-4, "");
}

void sampling_stabilization(Outcome& o) {
  auto sc = load_scenario(scenario("s3.json"));
  auto res = run_study(sc, StudyKind::sampling, sc.integrator);
  const auto& body = res.report["body"];
  const auto& k = res.report["constants"];
  std::size_t cells = body["cells"].size(), good = 0, monotone = 0;
  double latest = 0.0;
  for (const auto& c : body["cells"]) {
    if (c["reached"] == true && c["stayed_in_domain"] == true && c["index_monotone"] == true) ++good;
    if (c["index_monotone"] == true) ++monotone;
    if (c["t_hit"].is_number()) latest = std::max(latest, c["t_hit"].get<double>());
  }
  double delta = body["delta"], k_bar = body["k_bar"], chi = body["chi"];
  o.detail << good << "/" << cells << " cells, " << monotone << " monotone, latest hit " << latest << " (T " << sc.T
           << "), delta " << delta << " <= " << k["delta_bar"].get<double>() << ", k_bar " << k_bar << ", chi'' " << chi;
  o.require(cells == 64, "");
  o.require(good == cells && monotone == cells, "");
  o.require(latest < sc.T, "");
  o.require(delta <= k["delta_bar"].get<double>() && k_bar <= k["k_bar"].get<double>() &&
                chi <= k["chi_double_prime"].get<double>(),
            "");
  o.require(body["r"] == 0.5 && body["s"] == 2.0, "");
  o.require(res.pass, "");
}

void invariance(Outcome& o) {
  auto s1 = fixtures::s1();
  const Patch& p = s1.at(0);
  auto rep = invariance_checks(p, 0.2, 0.5, 100, 5.0, config(), 3);
  auto t = first_entry_time(p, vec2(1.8, 0), 0.4, PiecewiseSignal(2), 5.0, config());
  double err = t ? std::abs(*t - std::log(1.8 / 1.6)) : std::numeric_limits<double>::infinity();
  o.detail << rep.p2_runs << " runs, " << rep.p2_violations << " leave the inset; entry time error " << err;
  o.require(rep.p2_runs == 100 && rep.p2_violations == 0, "");
  o.require(err <= 1e-3, "");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism(Outcome& o) {
  fs::path dir = fs::temp_directory_path() / ("patchy_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::vector<std::string> commands = {
      "run " + scenario("s3.json") + " --mode sampling --seed 5",
      "run " + scenario("s2_feedback.json") + " --mode feedback --seed 5",
      "study " + scenario("s3.json") + " --study robust --seed 5",
  };
  std::size_t compared = 0;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::string reference;
    for (const char* threads : {"1", "4"}) {
      for (int rep = 0; rep < 2; ++rep) {
        fs::path out = dir / ("out_" + std::to_string(c) + "_" + threads + "_" + std::to_string(rep) + ".csv");
        std::string cmd = std::string("PATCHY_THREADS=") + threads + " " + PATCHY_CLI_PATH + " " + commands[c] +
                          " -o " + out.string();
        if (commands[c].starts_with("study")) cmd += " --report " + (dir / "report.json").string();
        cmd += " 2>/dev/null";
        int status = std::system(cmd.c_str());
        o.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, "CLI failed: " + commands[c] + "; ");
        std::string body = slurp(out);
        o.require(!body.empty(), "empty output; ");
        if (reference.empty())
          reference = body;
        else
          o.require(body == reference, "outputs differ for " + commands[c] + "; ");
        ++compared;
      }
    }
  }
  fs::remove_all(dir);
  if (o.pass) o.detail << compared << " CSVs from " << commands.size() << " commands, byte-identical per command";
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    void (*check)(Outcome&);
  };
  const Criterion criteria[] = {
      {"closed-form accuracy", closed_form_accuracy},
      {"switch localization", switch_localization},
      {"unperturbed index monotonicity", index_monotonicity},
      {"impulsive integral identity", integral_identity},
      {"distance to the solution set", solution_set_trend},
      {"monotone partition and excess budget", prop22_partition},
      {"monotone modification", prop22_modification},
      {"feedback reduction equivalence", reduction_equivalence},
      {"sample-and-hold stabilization", sampling_stabilization},
      {"patch invariance and entry time", invariance},
      {"determinism", determinism},
  };
  int failed = 0, n = 0;
  for (const auto& c : criteria) {
    ++n;
    Outcome o;
    auto start = std::chrono::steady_clock::now();
    try {
      c.check(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", n, c.name, o.detail.str().c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%d criteria passed\n", n - failed, n);
  return failed == 0 ? 0 : 1;
}

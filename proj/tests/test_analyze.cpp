#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace patchy;
using Catch::Matchers::WithinAbs;

namespace {

IntegratorConfig config() {
  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  return cfg;
}

Trajectory kick_run(double h) {
  return solve_impulsive(fixtures::s2(), fixtures::kick_out(3.0, h), fixtures::relocation_start(), 0.0, 3.0, config());
}

}  // namespace

TEST_CASE("index monotonicity checks", "[analyze]") {
  CHECK(check_sequence_monotone({1, 1, 2, 3, 3}).monotone);
  auto c = check_sequence_monotone({1, 2, 1}, {0.0, 0.5, 1.0});
  CHECK_FALSE(c.monotone);
  CHECK(c.violation_row == 2);
  CHECK(c.violation_time == 1.0);
  auto tr = solve_caratheodory(fixtures::s2(), vec2(2.5, 0), 0.0, 3.0, config());
  CHECK(check_index_monotone(tr).monotone);
}

TEST_CASE("envelope matches exhaustive search on small histories", "[analyze]") {
  std::mt19937_64 rng(5);
  std::vector<std::vector<int>> sets = {{1}, {1, 2}, {1, 3}, {2, 3}, {1, 2, 3}};
  int cases = 0;
  for (const auto& allowed : sets) {
    for (int K = 1; K <= 8; ++K) {
      for (int rep = 0; rep < 40; ++rep) {
        std::vector<int> h(K);
        std::vector<double> w(K);
        for (int k = 0; k < K; ++k) {
          h[k] = allowed[rng() % allowed.size()];
          w[k] = static_cast<double>(1 + rng() % 3);
        }
        double ex = -1.0;
        auto env = optimal_envelope(h, w, allowed, &ex);
        auto ref = oracle::brute_envelope(h, w, allowed);
        CHECK(ex == ref.excess);
        CHECK(env == ref.levels);
        ++cases;
      }
    }
  }
  CHECK(cases == 5 * 8 * 40);
}

TEST_CASE("envelope of a monotone history is the history", "[analyze]") {
  std::vector<int> h = {1, 1, 2, 2, 3};
  double ex = -1.0;
  CHECK(optimal_envelope(h, {1, 1, 1, 1, 1}, {1, 2, 3}, &ex) == h);
  CHECK(ex == 0.0);
  CHECK_THROWS_AS(optimal_envelope({1}, {1.0}, {2, 3}), PartitionMismatch);
}

TEST_CASE("partition of the relocation run", "[analyze]") {
  auto w = fixtures::relocation_jump(3.0);
  auto y = solve_impulsive(fixtures::s2(), w, fixtures::relocation_start(), 0.0, 3.0, config());
  auto part = monotone_partition(y, fixtures::s2());
  // Patch 2 is active on (ln(5/3), ln(25/6)]; the cheapest envelope stays at level 1.
  CHECK(part.indices == std::vector<int>{1});
  CHECK_THAT(part.excess_measure, WithinAbs(std::log(25.0 / 6.0) - std::log(5.0 / 3.0), 2e-3));
  auto k = estimate_constants(fixtures::s2(), 0.2, 256);
  CHECK_THROWS_AS(check_prop22_budget(part, w, k), Inconclusive);
}

TEST_CASE("budget check on a small kick", "[analyze]") {
  const double h = 0.001;
  auto y = kick_run(h);
  auto part = monotone_partition(y, fixtures::s2());
  auto k = estimate_constants(fixtures::s2(), 0.2, 256);
  REQUIRE(h < k.delta);
  CHECK(part.excess_measure > 0.0);
  CHECK(part.excess_measure < k.C_big * h);
  CHECK(check_prop22_budget(part, fixtures::kick_out(3.0, h), k));
}

TEST_CASE("budget check with zero perturbation requires zero excess", "[analyze]") {
  auto y = solve_caratheodory(fixtures::s2(), vec2(2.5, 0), 0.0, 3.0, config());
  auto part = monotone_partition(y, fixtures::s2());
  auto k = estimate_constants(fixtures::s2(), 0.2, 128);
  CHECK(part.excess_measure == 0.0);
  CHECK(check_prop22_budget(part, BVSignal::zero(2, 0.0, 3.0), k));
}

TEST_CASE("monotone modification of the kick run", "[analyze]") {
  const double h = 0.001;
  auto w = fixtures::kick_out(3.0, h);
  auto y = kick_run(h);
  auto F = fixtures::s2();
  auto part = monotone_partition(y, F);
  auto m = monotone_modification(y, w, part, F);
  CHECK(check_index_monotone(m.y).monotone);
  for (std::size_t k = 0; k < m.y.size(); ++k) CHECK(F.alpha_star(m.y.states[k]) == m.y.alpha[k]);
  // Identity off the excess set; a zero-width cell is a jump of y, compared on its right.
  for (std::size_t k = 1; k < y.size(); ++k) {
    if (m.excess_cell[k - 1]) continue;
    double t = y.times[k];
    Vec v = y.times[k - 1] == t ? m.y.value_right(t) : m.y.value_left(t);
    CHECK((v - y.states[k]).norm() <= 1e-12);
  }
  auto kc = estimate_constants(F, 0.2, 256);
  CHECK(sup_distance(m.y, y) <= kc.M * part.excess_measure + w.total_variation() + 10.0 * 1e-3);
  // y_mod solves the impulsive problem driven by w_mod.
  CHECK(integral_identity_residual(F, m.w, m.y) <= 1e-6);
}

TEST_CASE("monotone modification is the identity on monotone inputs", "[analyze]") {
  auto F = fixtures::s2();
  auto y = solve_caratheodory(F, vec2(2.5, 0), 0.0, 3.0, config());
  auto part = monotone_partition(y, F);
  auto m = monotone_modification(y, BVSignal::zero(2, 0.0, 3.0), part, F);
  CHECK(m.y.times == y.times);
  CHECK(sup_distance(m.y, y) == 0.0);
  CHECK(m.w.is_zero());
}

TEST_CASE("modification rejects a mismatched partition", "[analyze]") {
  auto F = fixtures::s2();
  auto y = solve_caratheodory(F, vec2(2.5, 0), 0.0, 3.0, config());
  auto part = monotone_partition(y, F);
  part.levels.pop_back();
  CHECK_THROWS_AS(monotone_modification(y, BVSignal::zero(2, 0.0, 3.0), part, F), PartitionMismatch);
}

TEST_CASE("distance to the solution set on S1 equals the jump size", "[analyze]") {
  // The jump h at t = 1 shifts the solution by h e^{-(t-1)}; the sup is h.
  auto profile = BVSignal::single_jump(0.0, 2.0, 1.0, vec2(1, 0));
  auto rows = convergence_study(fixtures::s1(), vec2(1.5, 0.5), {0.1, 0.01, 0.001}, profile, config());
  for (const auto& r : rows) CHECK_THAT(r.distance, WithinAbs(r.tv, 0.02 * r.tv + 2e-3));
  CHECK(convergence_pass(rows));
  CHECK_FALSE(convergence_pass({{0.1, 0.01}, {0.05, 0.02}}));
}

TEST_CASE("reach time uses the open condition", "[analyze]") {
  Trajectory tr;
  tr.push(0.0, vec2(1.0, 0), 1);
  tr.push(1.0, vec2(0.5, 0), 1);
  tr.push(2.0, vec2(0.5, 0), 1);
  CHECK_FALSE(reach_time(tr, 0.5).has_value());
  tr.push(3.0, vec2(0.25, 0), 1);
  // Linear interpolation puts the crossing at the start of the last segment.
  auto t = reach_time(tr, 0.5);
  REQUIRE(t);
  CHECK(*t == 2.0);
  Trajectory tr2;
  tr2.push(0.0, vec2(1.0, 0), 1);
  tr2.push(1.0, vec2(0.0, 0), 1);
  CHECK_THAT(*reach_time(tr2, 0.5), WithinAbs(0.5, 1e-15));
}

TEST_CASE("feedback robustness run on the spiral", "[analyze]") {
  auto fb = fixtures::s3();
  std::vector<FeedbackCell> cells;
  for (int i = 0; i < 8; ++i) {
    double th = 0.7 * i;
    Vec x0 = 1.8 * vec2(std::cos(th), std::sin(th));
    cells.push_back({x0, make_jump_signal(3.0, 0.05, 2, 100 + i), make_disturbance(3.0, 0.05, 2, 200 + i)});
  }
  auto rep = robustness_run(fb, 0.5, 2.0, 0.05, cells, fixtures::kSpiralHorizon, config());
  CHECK(rep.pass);
  CHECK(rep.failing_cells().empty());
  for (const auto& c : rep.outcomes) CHECK(c.t_hit < fixtures::kSpiralHorizon);
  cells[0].x0 = vec2(0.1, 0);
  CHECK_THROWS_AS(robustness_run(fb, 0.5, 2.0, 0.05, cells, 3.0, config()), ConfigError);
}

TEST_CASE("sampling robustness on the spiral with admissible parameters", "[analyze]") {
  auto fb = fixtures::s3();
  ConstantsOptions opt;
  opt.target_radius = 0.5;
  auto k = estimate_constants(closed_loop(fb), 0.1, 512, opt);
  std::vector<SamplingCell> cells;
  for (int i = 0; i < 6; ++i) {
    double th = 1.1 * i;
    cells.push_back({1.9 * vec2(std::cos(th), std::sin(th)), static_cast<ErrorFamily>(i % 3),
                     static_cast<std::uint64_t>(i + 1),
                     make_disturbance(3.0, k.chi_double_prime, 2, static_cast<std::uint64_t>(50 + i))});
  }
  auto rep = sampling_robustness_run(fb, 0.5, 2.0, k.chi_double_prime, k.delta_bar, k.k_bar, cells,
                                     fixtures::kSpiralHorizon, config());
  CHECK(rep.pass);
  for (const auto& c : rep.outcomes) CHECK(c.index_monotone);
}

TEST_CASE("error families respect their bound", "[analyze]") {
  for (auto f : {ErrorFamily::zero, ErrorFamily::random, ErrorFamily::alternating}) {
    auto e = make_errors(f, 50, 0.3, 2, 9);
    CHECK(e.size() == 50);
    for (const auto& v : e) CHECK(v.norm() <= 0.3 + 1e-15);
    CHECK(parse_family(family_name(f)) == f);
  }
  auto alt = make_errors(ErrorFamily::alternating, 4, 0.3, 2, 9);
  CHECK((alt[0] + alt[1]).norm() < 1e-15);
  CHECK_THROWS_AS(parse_family("gaussian"), ConfigError);
}

TEST_CASE("invariance and transit on the S1 patch", "[analyze]") {
  auto s1 = fixtures::s1();
  const Patch& p = s1.at(0);
  auto rep = invariance_checks(p, 0.2, 0.5, 100, 5.0, config(), 3);
  CHECK(rep.p2_runs == 100);
  CHECK(rep.p2_violations == 0);
  CHECK(rep.p3_missed == 0);
  CHECK(rep.pass);
  // From |x| = 1.8 with d = 0 the flow reaches |x| = 1.6 at ln(1.8/1.6).
  auto t = first_entry_time(p, vec2(1.8, 0), 0.4, PiecewiseSignal(2), 5.0, config());
  REQUIRE(t);
  CHECK_THAT(*t, WithinAbs(std::log(1.8 / 1.6), 1e-3));
}

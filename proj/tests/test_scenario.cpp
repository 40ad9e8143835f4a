#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <random>

using namespace patchy;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string path_of(const std::string& name) { return std::string(PATCHY_SCENARIO_DIR) + "/" + name; }

json s1_doc() { return read_json_file(path_of("s1.json")); }

std::string config_error(const json& doc) {
  try {
    scenario_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

IntegratorConfig config() {
  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("bundled scenarios parse", "[scenario]") {
  for (const char* name : {"s1.json", "s1_flipped.json", "s2.json", "s2_feedback.json", "s3.json", "s3_overdriven.json",
                           "kick.json", "relocation.json", "tangency.json"}) {
    INFO(name);
    auto sc = load_scenario(path_of(name));
    CHECK(sc.dim == 2);
    CHECK(sc.x0.size() == 2);
    CHECK(sc.T > sc.t0);
  }
  CHECK_THROWS_AS(load_scenario(path_of("malformed.json")), ConfigError);
}

TEST_CASE("the spiral scenario file describes the built-in spiral", "[scenario]") {
  auto sc = load_scenario(path_of("s3.json"));
  REQUIRE(sc.feedback);
  auto ref = fixtures::s3();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.2, 2.2);
  for (int i = 0; i < 2000; ++i) {
    Vec x = vec2(u(rng), u(rng));
    auto a = sc.feedback->try_alpha_star(x);
    auto b = ref.try_alpha_star(x);
    REQUIRE(a.has_value() == b.has_value());
    if (!a) continue;
    CHECK(*a == *b);
    CHECK((sc.feedback->closed_loop_velocity(x) - ref.closed_loop_velocity(x)).norm() < 1e-12);
  }
}

TEST_CASE("the S1 scenario file runs like the fixture", "[scenario]") {
  auto sc = load_scenario(path_of("s1.json"));
  auto a = solve_caratheodory(sc.closed_field(), sc.x0, sc.t0, sc.T, config());
  auto b = solve_caratheodory(fixtures::s1(), vec2(1.5, 0.5), 0.0, 2.0, config());
  CHECK(sup_distance(a, b) == 0.0);
  REQUIRE(sc.w);
  CHECK(sc.w->jumps().size() == 1);
  CHECK(sc.integrator.rng_seed == 7);
}

TEST_CASE("configuration errors name the offending field", "[scenario]") {
  auto doc = s1_doc();
  doc["patches"][0]["colour"] = "red";
  CHECK_THAT(config_error(doc), ContainsSubstring("patches[0].colour"));

  doc = s1_doc();
  doc["patches"][0]["domain"].erase("radius");
  CHECK_THAT(config_error(doc), ContainsSubstring("patches[0].domain.radius"));

  doc = s1_doc();
  doc["initial_state"] = "origin";
  CHECK_THAT(config_error(doc), ContainsSubstring("initial_state"));

  doc = s1_doc();
  doc["integrator"]["dt"] = -0.1;
  CHECK_THAT(config_error(doc), ContainsSubstring("integrator.dt"));

  doc = s1_doc();
  doc["schema"] = 99;
  CHECK_THAT(config_error(doc), ContainsSubstring("schema"));

  doc = s1_doc();
  doc["patches"][0]["domain"]["kind"] = "torus";
  CHECK_THAT(config_error(doc), ContainsSubstring("patches[0].domain"));

  doc = s1_doc();
  doc["initial_state"] = json::array({1.0, 2.0, 3.0});
  CHECK_FALSE(config_error(doc).empty());
}

TEST_CASE("malformed JSON reports the position", "[scenario]") {
  try {
    load_scenario(path_of("malformed.json"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK_THAT(e.what(), ContainsSubstring("line"));
  }
  CHECK_THROWS_AS(load_scenario(path_of("does_not_exist.json")), ConfigError);
}

TEST_CASE("sampling needs a plan section", "[scenario]") {
  auto sc = load_scenario(path_of("s1.json"));
  CHECK_THROWS_AS(sc.sampling_plan(1), ConfigError);
  auto fb = load_scenario(path_of("s2_feedback.json"));
  auto p = fb.sampling_plan(1);
  CHECK(p.taus().front() == fb.t0);
  CHECK(p.taus().back() == fb.T);
  CHECK(p.max_error() <= 0.01);
  CHECK(p.respects_error_bound(0.01 / 0.05));
  CHECK(fb.sampling_plan(1).taus() == p.taus());
}

TEST_CASE("reports round-trip through their schema", "[scenario]") {
  auto F = fixtures::s2();
  auto v = make_report("validation", "S2", to_json(validate(F, 90, 0.0)));
  CHECK(reparse_report(v).dump() == v["body"].dump());

  auto k = estimate_constants(F, 0.2, 64);
  auto c = make_report("constants", "S2", to_json(k));
  CHECK(reparse_report(c).dump() == c["body"].dump());

  auto y = solve_impulsive(F, fixtures::kick_out(3.0, 0.001), fixtures::relocation_start(), 0.0, 3.0, config());
  auto part = monotone_partition(y, F);
  auto pj = make_report("prop22", "kick", to_json(Prop22Report{"pass", 0.001, 0.5, part, k, true, 0.0, 0.1}));
  CHECK(reparse_report(pj).dump() == pj["body"].dump());

  auto rows = std::vector<ConvergenceRow>{{0.1, 0.1}, {0.01, 0.01}};
  auto cj = make_report("convergence", "S1", to_json(rows));
  cj["pass"] = true;
  CHECK(reparse_report(cj).dump() == cj["body"].dump());

  auto inv = invariance_checks(fixtures::s1().at(0), 0.2, 0.5, 10, 5.0, config(), 1);
  auto ij = make_report("invariance", "S1", to_json(inv));
  CHECK(reparse_report(ij).dump() == ij["body"].dump());

  auto bad = v;
  bad["body"]["extra"] = 1;
  CHECK_THROWS_AS(reparse_report(bad), ConfigError);
  bad = v;
  bad["schema"] = 2;
  CHECK_THROWS_AS(reparse_report(bad), ConfigError);
}

TEST_CASE("robustness CSV uses flags and nan", "[scenario]") {
  RobustnessReport r;
  CellOutcome o;
  o.x0 = vec2(1, 2);
  o.reached = false;
  o.t_hit = std::numeric_limits<double>::quiet_NaN();
  o.index_monotone = true;
  r.outcomes.push_back(o);
  std::ostringstream os;
  write_robustness_csv(os, r, 2);
  CHECK(os.str() == "x0_1,x0_2,reached,t_hit,monotone\n1,2,0,nan,1\n");
  auto j = make_report("robustness", "x", to_json(r));
  CHECK(j["body"]["cells"][0]["t_hit"].is_null());
  CHECK(reparse_report(j).dump() == j["body"].dump());
}

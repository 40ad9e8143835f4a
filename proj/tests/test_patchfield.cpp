#include "oracles.hpp"

#include <catch_amalgamated.hpp>

using namespace patchy;
using Catch::Matchers::WithinAbs;

TEST_CASE("alpha* picks the largest index whose domain contains x", "[patchfield]") {
  auto F = fixtures::s2();
  CHECK(F.alpha_star(vec2(2.0, 0)) == 1);
  CHECK(F.alpha_star(vec2(1.2, 0)) == 2);
  CHECK(F.alpha_star(vec2(1.5, 0)) == 1);  // boundary of patch 2 is outside the open disk
  CHECK_FALSE(F.try_alpha_star(vec2(3.5, 0)).has_value());
  CHECK_THROWS_AS(F.alpha_star(vec2(3.5, 0)), OutsideDomain);
  CHECK(F.in_exclusive_region(1, vec2(-2, 0)));
  CHECK_FALSE(F.in_exclusive_region(1, vec2(1, 0)));
  CHECK((F.eval(vec2(1.2, 0.1)) - vec2(-0.2, -0.1)).norm() < 1e-15);
}

TEST_CASE("patch order does not depend on construction order", "[patchfield]") {
  PatchyField F({Patch{2, SmoothDomain::ball(vec2(1, 0), 0.5), fixtures::toward(vec2(1, 0)), 0.25},
                 Patch{1, SmoothDomain::ball(vec2(0, 0), 3.0), fixtures::toward(vec2(0, 0)), 0.5}},
                2);
  CHECK(F.indices() == std::vector<int>{1, 2});
  CHECK(F.alpha_star(vec2(1.1, 0)) == 2);
}

TEST_CASE("malformed fields are rejected", "[patchfield]") {
  auto dom = SmoothDomain::ball(vec2(0, 0), 1.0);
  CHECK_THROWS_AS(PatchyField({}, 2), ValidationError);
  CHECK_THROWS_AS(PatchyField({Patch{1, dom, fixtures::toward(vec2(0, 0)), 0.1},
                               Patch{1, dom, fixtures::toward(vec2(0, 0)), 0.1}},
                              2),
                  ValidationError);
  CHECK_THROWS_AS(PatchyField({Patch{1, dom, fixtures::toward(vec2(0, 0)), 0.0}}, 2), ValidationError);
  CHECK_THROWS_AS(PatchyField({Patch{1, dom, fixtures::toward(vec2(0, 0)), 0.1}}, 3), ValidationError);
}

TEST_CASE("validate reports the inward margin on S1", "[patchfield]") {
  // <-x, x/|x|> = -|x| = -2 on the boundary, so the margin is 2 - chi.
  auto rep = validate(fixtures::s1(), 720, 0.0);
  REQUIRE(rep.patches.size() == 1);
  CHECK(rep.pass);
  CHECK_THAT(rep.patches[0].margin(), WithinAbs(2.0, 1e-12));
  auto rep2 = validate(fixtures::s1(), 720, 0.75);
  CHECK_THAT(rep2.patches[0].margin(), WithinAbs(1.25, 1e-12));
  auto rep3 = validate(fixtures::s1(), 720, 2.5);
  CHECK_FALSE(rep3.pass);
  CHECK(rep3.failing_patches() == std::vector<int>{1});
}

TEST_CASE("validate flags an outward field and names the patch", "[patchfield]") {
  PatchyField F({Patch{1, SmoothDomain::ball(vec2(0, 0), 2.0), [](const Vec& x) { return x; }, 0.5}}, 2);
  auto rep = validate(F, 360, 0.0);
  CHECK_FALSE(rep.pass);
  CHECK(rep.failing_patches() == std::vector<int>{1});
  CHECK_THAT(rep.patches[0].margin(), WithinAbs(-2.0, 1e-12));
}

TEST_CASE("validate finds cover gaps", "[patchfield]") {
  ValidateOptions opt;
  opt.cover_center = vec2(0, 0);
  opt.cover_radius = 2.5;
  opt.cover_samples = 2000;
  auto rep = validate(fixtures::s1(), 90, 0.0, opt);
  CHECK_FALSE(rep.cover_gaps.empty());
  for (const auto& x : rep.cover_gaps) CHECK(x.norm() >= 2.0);
  opt.cover_radius = 1.9;
  CHECK(validate(fixtures::s1(), 90, 0.0, opt).cover_gaps.empty());
}

TEST_CASE("spiral feedback passes the robust inward check", "[patchfield]") {
  auto F = closed_loop(fixtures::s3());
  auto rep = validate(F, 720, 0.05);
  CHECK(rep.pass);
  CHECK(rep.min_margin() > 0.5);
}

TEST_CASE("closed loop of the S2 feedback equals the S2 field", "[patchfield]") {
  auto fb = fixtures::s2_feedback();
  auto F = closed_loop(fb);
  auto G = fixtures::s2();
  for (Vec x : {vec2(2, 1), vec2(1.1, 0.2), vec2(-2.5, 0.3), vec2(0.6, 0)}) {
    CHECK(F.alpha_star(x) == G.alpha_star(x));
    CHECK((F.eval(x) - G.eval(x)).norm() < 1e-15);
    CHECK((fb.closed_loop_velocity(x) - G.eval(x)).norm() < 1e-15);
  }
  CHECK((fb.control_at(vec2(1.1, 0)) - vec2(1, 0)).norm() == 0.0);
}

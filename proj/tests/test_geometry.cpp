#include "oracles.hpp"

#include <catch_amalgamated.hpp>

using namespace patchy;
using Catch::Matchers::WithinAbs;

TEST_CASE("ball signed distance, projection and normal match closed forms", "[geometry]") {
  auto B = SmoothDomain::ball(vec2(1, -1), 2.0);
  for (Vec x : {vec2(1.5, -1), vec2(4, 3), vec2(-0.2, 0.7), vec2(1, 1.0)}) {
    Vec d = x - vec2(1, -1);
    CHECK_THAT(B.signed_distance(x), WithinAbs(2.0 - d.norm(), 1e-12));
    CHECK((B.project_boundary(x) - (vec2(1, -1) + 2.0 * d.normalized())).norm() < 1e-12);
    CHECK((B.outer_normal(x) - d.normalized()).norm() < 1e-12);
  }
  CHECK(B.contains(vec2(1, -1)));
  CHECK_FALSE(B.contains(vec2(3, -1)));  // boundary is not in the open domain
  CHECK_THROWS_AS(B.project_boundary(vec2(1, -1)), DegenerateBoundary);
}

TEST_CASE("ellipse signed distance agrees with dense boundary sampling", "[geometry]") {
  Vec c = vec2(0.5, -0.25), axes = vec2(2.0, 0.8);
  auto E = SmoothDomain::ellipsoid(c, axes);
  for (Vec x : {vec2(0.5, 0.3), vec2(2.0, 0.0), vec2(3.0, 1.0), vec2(-1.0, -0.9), vec2(0.0, 1.5), vec2(2.4, -0.3)}) {
    double ref = oracle::ellipse_signed_distance(c, axes, x);
    CHECK_THAT(E.signed_distance(x), WithinAbs(ref, 1e-6));
    Vec p = E.project_boundary(x);
    CHECK(std::abs(E.level(p)) < 1e-10);
  }
}

TEST_CASE("boundary_on_ray lands on the zero level set", "[geometry]") {
  auto E = SmoothDomain::ellipsoid(vec2(0, 0), vec2(3.0, 1.0));
  for (int i = 0; i < 16; ++i) {
    double th = 0.4 * i;
    Vec p = E.boundary_on_ray(vec2(std::cos(th), std::sin(th)));
    CHECK(std::abs(E.level(p)) < 1e-12);
    Vec n = E.normal_at_boundary(p);
    CHECK_THAT(n.norm(), WithinAbs(1.0, 1e-12));
    CHECK(n.dot(p) > 0.0);
  }
}

TEST_CASE("inset membership uses the distance to the boundary", "[geometry]") {
  auto B = SmoothDomain::ball(vec2(0, 0), 2.0);
  CHECK(B.inset_contains(0.2, vec2(1.79, 0)));
  CHECK_FALSE(B.inset_contains(0.2, vec2(1.81, 0)));
  CHECK_FALSE(B.inset_contains(0.0, vec2(2.5, 0)));
}

TEST_CASE("smooth intersection of half-spaces sits inside the exact intersection", "[geometry]") {
  // Square |x|,|y| < 1 from four half-spaces.
  std::vector<LevelFunction> parts = {halfspace_level(vec2(1, 0), 1.0), halfspace_level(vec2(-1, 0), 1.0),
                                      halfspace_level(vec2(0, 1), 1.0), halfspace_level(vec2(0, -1), 1.0)};
  const double k = 40.0;
  auto D = SmoothDomain::smooth_intersection(parts, k, vec2(0, 0), 1.5);
  CHECK(D.contains(vec2(0.9, 0.0)));
  CHECK_FALSE(D.contains(vec2(1.0, 0.0)));
  // The boundary is within log(4)/k of the exact square.
  for (int i = 0; i < 32; ++i) {
    double th = 2.0 * std::numbers::pi * i / 32.0;
    Vec p = D.boundary_on_ray(vec2(std::cos(th), std::sin(th)));
    double exact = std::max(std::abs(p[0]), std::abs(p[1]));
    CHECK(exact <= 1.0 + 1e-12);
    CHECK(exact >= 1.0 - std::log(4.0) / k - 1e-12);
  }
  // The smoothed level function has a unit-length gradient on the faces.
  Vec n = D.outer_normal(vec2(0.5, 0.0));
  CHECK((n - vec2(1, 0)).norm() < 1e-6);
}

TEST_CASE("invalid domains are rejected", "[geometry]") {
  CHECK_THROWS_AS(SmoothDomain::ball(vec2(0, 0), 0.0), ValidationError);
  CHECK_THROWS_AS(SmoothDomain::ellipsoid(vec2(0, 0), vec2(1, -1)), ValidationError);
  CHECK_THROWS_AS(halfspace_level(vec2(0, 0), 1.0), ValidationError);
  CHECK_THROWS_AS(SmoothDomain::smooth_intersection({}, 1.0, vec2(0, 0), 1.0), ValidationError);
}

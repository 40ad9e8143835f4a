#pragma once

/**
 * @file fixtures.hpp
 * @brief Reference scenarios with closed-form or hand-checkable behaviour.
 * The JSON files under scenarios/ describe the same objects.
 */

#include "patchy/patchfield.hpp"
#include "patchy/signal.hpp"

#include <numbers>

namespace patchy::fixtures {

/// g(x) = A x + b.
inline VectorField affine_field(Mat A, Vec b) {
  return [A = std::move(A), b = std::move(b)](const Vec& x) { return Vec(A * x + b); };
}

/// g(x) = target - x.
inline VectorField toward(Vec target) {
  return [t = std::move(target)](const Vec& x) { return Vec(t - x); };
}

/// S1: one ball B(0,2) with g(x) = -x.
inline PatchyField s1() {
  return PatchyField({Patch{1, SmoothDomain::ball(vec2(0, 0), 2.0), toward(vec2(0, 0)), 0.5}}, 2);
}

/// S2: B(0,3) with g1 = -x, and B((1,0),0.5) with g2 = (1,0) - x.
inline PatchyField s2() {
  return PatchyField({Patch{1, SmoothDomain::ball(vec2(0, 0), 3.0), toward(vec2(0, 0)), 0.5},
                      Patch{2, SmoothDomain::ball(vec2(1, 0), 0.5), toward(vec2(1, 0)), 0.25}},
                     2);
}

/// f(x, u) = lambda (u - x): the state relaxes toward the set point u.
inline ControlDynamics set_point_dynamics(double lambda, Eigen::Index n) {
  ControlDynamics d;
  d.f = [lambda](const Vec& x, const Vec& u) { return Vec(lambda * (u - x)); };
  d.control_dim = n;
  d.control_set_description = "set points in R^n";
  return d;
}

/// f(x, u) = u.
inline ControlDynamics velocity_dynamics(Eigen::Index n) {
  ControlDynamics d;
  d.f = [](const Vec&, const Vec& u) { return u; };
  d.control_dim = n;
  d.control_set_description = "velocities in R^n";
  return d;
}

/// S2 as a feedback: f(x, u) = u - x with k1 = 0 and k2 = (1,0).
inline PatchyFeedback s2_feedback() {
  return PatchyFeedback(set_point_dynamics(1.0, 2),
                        {FeedbackPatch{1, SmoothDomain::ball(vec2(0, 0), 3.0), vec2(0, 0), 0.5},
                         FeedbackPatch{2, SmoothDomain::ball(vec2(1, 0), 0.5), vec2(1, 0), 0.25}});
}

/// Parameters of the spiral feedback S3.
struct SpiralParams {
  int disks = 8;
  double ring_radius = 1.3;
  double disk_radius = 1.1;
  /// Set point of disk j (j < disks) is this fraction of the midpoint of centres j and j+1.
  double pull_in = 0.9;
  /// Radius of the set point of the last ring disk, on its own ray.
  double last_set_point = 0.6;
  double core_radius = 0.75;
  double lambda = 4.0;
};

inline Vec spiral_center(const SpiralParams& p, int j) {
  double th = 2.0 * std::numbers::pi * static_cast<double>(j - 1) / static_cast<double>(p.disks);
  return p.ring_radius * vec2(std::cos(th), std::sin(th));
}

/// Set point k_j of disk j; lies inside disk j and inside the next patch.
inline Vec spiral_set_point(const SpiralParams& p, int j) {
  if (j < p.disks) return p.pull_in * 0.5 * (spiral_center(p, j) + spiral_center(p, j + 1));
  return p.last_set_point * spiral_center(p, j).normalized();
}

/// S3: disks 1..8 around the annulus 0.5 <= |x| <= 2 chained in index
/// order, plus a core disk (index 9) steering to the origin; f(x,u) = 4 (u - x).
inline PatchyFeedback s3(const SpiralParams& p = {}) {
  std::vector<FeedbackPatch> patches;
  for (int j = 1; j <= p.disks; ++j)
    patches.push_back({j, SmoothDomain::ball(spiral_center(p, j), p.disk_radius), spiral_set_point(p, j), 0.3});
  patches.push_back({p.disks + 1, SmoothDomain::ball(vec2(0, 0), p.core_radius), vec2(0, 0), 0.3});
  return PatchyFeedback(set_point_dynamics(p.lambda, 2), std::move(patches));
}

/// Horizon used for the spiral reachability runs.
inline constexpr double kSpiralHorizon = 3.0;

/// Tangency: B(0,5) with g1 = -x and a small disk B((2,0.5),0.5) with
/// g2 = (2,0.5) - x whose boundary touches the g1-orbit of (4,0) at (2,0).
inline PatchyField tangency() {
  return PatchyField({Patch{1, SmoothDomain::ball(vec2(0, 0), 5.0), toward(vec2(0, 0)), 0.5},
                      Patch{2, SmoothDomain::ball(vec2(2, 0.5), 0.5), toward(vec2(2, 0.5)), 0.25}},
                     2);
}

inline Vec tangency_start() { return vec2(4, 0); }
inline constexpr double kTangencyHorizon = 3.0;

/// S2 from (2.5,0): the trajectory enters patch 2 at ln(5/3) and reaches
/// (1.2,0) at ln(25/6); the jump (-1.2,0) there drops it to the origin, in D_1.
inline Vec relocation_start() { return vec2(2.5, 0); }
inline double relocation_time() { return std::log(25.0 / 6.0); }
inline BVSignal relocation_jump(double T) { return BVSignal::single_jump(0.0, T, relocation_time(), vec2(-1.2, 0)); }

/// Small version of the relocation: just after entering patch 2 the state is
/// pushed back out by `h`, and the patch-1 flow carries it in again.
inline double kick_time() { return std::log(5.0 / 3.0) + 0.001; }
inline BVSignal kick_out(double T, double h) { return BVSignal::single_jump(0.0, T, kick_time(), vec2(h, 0)); }

}  // namespace patchy::fixtures

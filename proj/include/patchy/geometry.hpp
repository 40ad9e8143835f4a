#pragma once

/**
 * @file geometry.hpp
 * @brief Implicit smooth domains {psi < 0} with the metric queries used by
 * the patch machinery: signed distance, outer normal, boundary projection
 * and inner insets.
 *
 * Domains are assumed star-shaped with respect to their anchor point; the
 * boundary is sampled along rays from the anchor and the samples seed the
 * nearest-point search.
 */

#include "patchy/core.hpp"

#include <limits>
#include <optional>
#include <sstream>

namespace patchy {

/// A smooth level function together with its gradient.
struct LevelFunction {
  ScalarField value;
  VectorField gradient;
};

/// psi(x) = <normal, x> - offset; the half-space {<normal, x> < offset}.
inline LevelFunction halfspace_level(Vec normal, double offset) {
  double nrm = normal.norm();
  if (!(nrm > 0.0)) throw ValidationError("halfspace: normal must be non-zero");
  Vec n = normal / nrm;
  double b = offset / nrm;
  return {[n, b](const Vec& x) { return n.dot(x) - b; }, [n](const Vec&) { return Vec(n); }};
}

class SmoothDomain {
 public:
  /// Generic construction data. `projector`, when given, must return the
  /// exact nearest boundary point.
  struct Spec {
    LevelFunction level;
    Vec anchor;
    double bounding_radius = 0.0;
    double collar_width = -1.0;  // negative: 10% of bounding_radius
    VectorField projector;
    std::string description = "implicit";
  };

  static constexpr double kGradientFloor = 1e-9;

  explicit SmoothDomain(Spec spec) : data_(std::make_shared<Data>()) {
    if (spec.anchor.size() == 0) throw ValidationError("domain: anchor point required");
    if (!(spec.bounding_radius > 0.0) || !std::isfinite(spec.bounding_radius))
      throw ValidationError("domain: bounding_radius must be positive");
    if (spec.collar_width < 0.0) spec.collar_width = 0.1 * spec.bounding_radius;
    data_->spec = std::move(spec);
    if (!(level(anchor()) < 0.0)) throw ValidationError("domain '" + description() + "': anchor is not inside");
    sample_boundary();
  }

  static SmoothDomain ball(Vec center, double radius) {
    if (!(radius > 0.0)) throw ValidationError("ball: radius must be positive");
    Spec s;
    Vec c = center;
    s.level = {[c, radius](const Vec& x) { return (x - c).squaredNorm() - radius * radius; },
               [c](const Vec& x) { return Vec(2.0 * (x - c)); }};
    s.anchor = center;
    s.bounding_radius = radius;
    s.projector = [c, radius](const Vec& x) -> Vec {
      Vec d = x - c;
      double n = d.norm();
      if (n < 1e-300) throw DegenerateBoundary("ball: projection of the center is not unique");
      return c + radius * d / n;
    };
    std::ostringstream os;
    os << "ball(r=" << radius << ")";
    s.description = os.str();
    return SmoothDomain(std::move(s));
  }

  static SmoothDomain ellipsoid(Vec center, Vec semi_axes) {
    if (center.size() != semi_axes.size()) throw ValidationError("ellipsoid: dimension mismatch");
    if ((semi_axes.array() <= 0.0).any()) throw ValidationError("ellipsoid: semi-axes must be positive");
    Spec s;
    Vec c = center;
    Vec inv2 = semi_axes.array().square().inverse();
    s.level = {[c, inv2](const Vec& x) { return ((x - c).array().square() * inv2.array()).sum() - 1.0; },
               [c, inv2](const Vec& x) { return Vec(2.0 * (x - c).array() * inv2.array()); }};
    s.anchor = center;
    s.bounding_radius = semi_axes.maxCoeff();
    s.description = "ellipsoid";
    return SmoothDomain(std::move(s));
  }

  /// Smooth (approximate) intersection: psi = (1/k) log sum exp(k psi_i).
  /// The result sits slightly inside the exact intersection, by at most
  /// log(m)/k in level-function units.
  static SmoothDomain smooth_intersection(std::vector<LevelFunction> parts, double sharpness, Vec anchor,
                                          double bounding_radius) {
    if (parts.empty()) throw ValidationError("intersection: no parts");
    if (!(sharpness > 0.0)) throw ValidationError("intersection: sharpness must be positive");
    auto shared = std::make_shared<const std::vector<LevelFunction>>(std::move(parts));
    auto weights = [shared, sharpness](const Vec& x, std::vector<double>& vals) {
      vals.resize(shared->size());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < shared->size(); ++i) {
        vals[i] = sharpness * (*shared)[i].value(x);
        mx = std::max(mx, vals[i]);
      }
      return mx;
    };
    Spec s;
    s.level.value = [shared, sharpness, weights](const Vec& x) {
      std::vector<double> v;
      double mx = weights(x, v);
      double acc = 0.0;
      for (double e : v) acc += std::exp(e - mx);
      return (mx + std::log(acc)) / sharpness;
    };
    s.level.gradient = [shared, weights](const Vec& x) {
      std::vector<double> v;
      double mx = weights(x, v);
      double acc = 0.0;
      Vec g = Vec::Zero(x.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        double w = std::exp(v[i] - mx);
        acc += w;
        g += w * (*shared)[i].gradient(x);
      }
      return Vec(g / acc);
    };
    s.anchor = std::move(anchor);
    s.bounding_radius = bounding_radius;
    s.description = "smooth_intersection";
    return SmoothDomain(std::move(s));
  }

  Eigen::Index dim() const { return anchor().size(); }
  const Vec& anchor() const { return data_->spec.anchor; }
  double bounding_radius() const { return data_->spec.bounding_radius; }
  double collar_width() const { return data_->spec.collar_width; }
  const std::string& description() const { return data_->spec.description; }
  const std::vector<Vec>& boundary_samples() const { return data_->boundary; }

  double level(const Vec& x) const { return data_->spec.level.value(x); }
  Vec level_gradient(const Vec& x) const { return data_->spec.level.gradient(x); }
  LevelFunction level_function() const { return data_->spec.level; }

  bool contains(const Vec& x) const { return level(x) < 0.0; }

  /// Nearest point of the boundary.
  Vec project_boundary(const Vec& x) const {
    if (data_->spec.projector) return data_->spec.projector(x);
    return iterative_projection(x);
  }

  /// +d(x, boundary) inside, -d(x, boundary) outside.
  double signed_distance(const Vec& x) const {
    double d = (x - project_boundary(x)).norm();
    return contains(x) ? d : -d;
  }

  /// Unit outer normal at the projection of x.
  Vec outer_normal(const Vec& x) const { return normal_at_boundary(project_boundary(x)); }

  /// Unit outer normal at a boundary point p (gradient direction of psi).
  Vec normal_at_boundary(const Vec& p) const {
    Vec g = level_gradient(p);
    double n = g.norm();
    if (!(n > kGradientFloor)) throw DegenerateBoundary("domain '" + description() + "': vanishing gradient");
    return g / n;
  }

  /// Membership in the inset {x in Omega : d(x, boundary) >= rho}.
  bool inset_contains(double rho, const Vec& x) const {
    if (!contains(x)) return false;
    if (rho <= 0.0) return true;
    return signed_distance(x) >= rho;
  }

  /// Boundary point on the ray anchor + t * direction, t > 0.
  Vec boundary_on_ray(const Vec& direction) const {
    const Vec& a = anchor();
    Vec d = direction.normalized();
    double hi = bounding_radius() * (1.0 + 1e-6);
    if (!(level(a + hi * d) >= 0.0)) {
      hi *= 2.0;
      if (!(level(a + hi * d) >= 0.0))
        throw ValidationError("domain '" + description() + "': not contained in its bounding ball");
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
      double mid = 0.5 * (lo + hi);
      (level(a + mid * d) < 0.0 ? lo : hi) = mid;
    }
    // Newton polish along the ray.
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 8; ++it) {
      Vec p = a + t * d;
      double v = level(p);
      double dv = level_gradient(p).dot(d);
      if (std::abs(v) < 1e-15 || std::abs(dv) < kGradientFloor) break;
      double tn = t - v / dv;
      if (!(tn >= lo - 1e-12 && tn <= hi + 1e-12)) break;
      t = tn;
    }
    return a + t * d;
  }

 private:
  struct Data {
    Spec spec;
    std::vector<Vec> boundary;
  };

  static std::size_t boundary_sample_count(Eigen::Index n) {
    if (n <= 1) return 2;
    if (n == 2) return 720;
    if (n == 3) return 2048;
    return 4096;
  }

  void sample_boundary() {
    Eigen::Index n = dim();
    std::size_t count = boundary_sample_count(n);
    data_->boundary.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Vec dir;
      if (n == 1) {
        dir = Vec::Constant(1, i == 0 ? 1.0 : -1.0);
      } else if (n == 2) {
        double th = 6.283185307179586476925286766559 * static_cast<double>(i) / static_cast<double>(count);
        dir = vec2(std::cos(th), std::sin(th));
      } else {
        dir = direction_from_unit_cube(halton(i, static_cast<std::size_t>(n)), n);
      }
      Vec p = boundary_on_ray(dir);
      Vec g = level_gradient(p);
      if (!(g.norm() > kGradientFloor))
        throw ValidationError("domain '" + description() + "': gradient vanishes on the boundary");
      data_->boundary.push_back(std::move(p));
    }
  }

  /// Newton iteration along the gradient onto {psi = 0}.
  Vec onto_surface(Vec q) const {
    for (int it = 0; it < 60; ++it) {
      double v = level(q);
      Vec g = level_gradient(q);
      double g2 = g.squaredNorm();
      if (!(g2 > kGradientFloor * kGradientFloor))
        throw DegenerateBoundary("domain '" + description() + "': vanishing gradient near boundary");
      if (std::abs(v) <= 1e-14 * std::max(1.0, std::sqrt(g2) * bounding_radius())) return q;
      q -= (v / g2) * g;
    }
    if (std::abs(level(q)) > 1e-10)
      throw NumericalFailure("domain '" + description() + "': projection onto boundary did not converge");
    return q;
  }

  /// Damped foot-point iteration seeded by the nearest cached sample.
  Vec iterative_projection(const Vec& x) const {
    const auto& samples = data_->boundary;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      double d = (samples[i] - x).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    Vec p = onto_surface(samples[best]);
    double dist = (x - p).norm();
    for (int it = 0; it < 500; ++it) {
      Vec n = normal_at_boundary(p);
      Vec r = x - p;
      Vec tangential = r - r.dot(n) * n;
      double tn = tangential.norm();
      if (tn <= 1e-13 * (1.0 + dist)) break;
      double step = 1.0;
      bool moved = false;
      for (int k = 0; k < 40; ++k) {
        Vec cand = onto_surface(p + step * tangential);
        double cd = (x - cand).norm();
        if (cd < dist) {
          moved = (cand - p).norm() > 1e-16 * (1.0 + p.norm());
          p = std::move(cand);
          dist = cd;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    if (std::abs(level(p)) > 1e-10)
      throw NumericalFailure("domain '" + description() + "': projection residual too large");
    return p;
  }

  std::shared_ptr<Data> data_;
};

}  // namespace patchy

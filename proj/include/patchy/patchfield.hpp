#pragma once

/**
 * @file patchfield.hpp
 * @brief Ordered patch families, the selection rule alpha*, patchy feedbacks
 * and their closed loops, and sampled validation of the inward-pointing
 * condition.
 */

#include "patchy/geometry.hpp"

#include <map>
#include <optional>
#include <sstream>

namespace patchy {

/// A smooth domain with a smooth field that points strictly inward on its
/// boundary. `field` must be evaluable on the margin-neighbourhood of the
/// closed domain.
struct Patch {
  int index = 0;
  SmoothDomain domain;
  VectorField field;
  double margin = 0.1;
};

class PatchyField {
 public:
  PatchyField(std::vector<Patch> patches, Eigen::Index ambient_dim) : dim_(ambient_dim) {
    if (patches.empty()) throw ValidationError("patchy field: no patches");
    std::sort(patches.begin(), patches.end(), [](const Patch& a, const Patch& b) { return a.index < b.index; });
    for (std::size_t i = 0; i < patches.size(); ++i) {
      if (i > 0 && patches[i].index == patches[i - 1].index) {
        std::ostringstream os;
        os << "patchy field: duplicate patch index " << patches[i].index;
        throw ValidationError(os.str());
      }
      if (patches[i].domain.dim() != dim_) throw ValidationError("patchy field: domain dimension mismatch");
      if (!patches[i].field) throw ValidationError("patchy field: patch without a field");
      if (!(patches[i].margin > 0.0)) throw ValidationError("patchy field: margin must be positive");
    }
    patches_ = std::make_shared<const std::vector<Patch>>(std::move(patches));
  }

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return patches_->size(); }
  const std::vector<Patch>& patches() const { return *patches_; }
  const Patch& at(std::size_t position) const { return (*patches_)[position]; }

  /// Position of `index` in the sorted patch list.
  std::size_t position_of(int index) const {
    auto it = std::lower_bound(patches_->begin(), patches_->end(), index,
                               [](const Patch& p, int i) { return p.index < i; });
    if (it == patches_->end() || it->index != index) {
      std::ostringstream os;
      os << "patchy field: unknown patch index " << index;
      throw ValidationError(os.str());
    }
    return static_cast<std::size_t>(it - patches_->begin());
  }

  const Patch& patch(int index) const { return at(position_of(index)); }

  /// Maximal index whose open domain contains x, if any.
  std::optional<int> try_alpha_star(const Vec& x) const {
    for (auto it = patches_->rbegin(); it != patches_->rend(); ++it)
      if (it->domain.contains(x)) return it->index;
    return std::nullopt;
  }

  int alpha_star(const Vec& x) const {
    if (auto a = try_alpha_star(x)) return *a;
    std::ostringstream os;
    os << "point (" << x.transpose() << ") lies outside every patch";
    throw OutsideDomain(os.str());
  }

  bool covers(const Vec& x) const { return try_alpha_star(x).has_value(); }

  /// x in D_alpha = Omega_alpha minus the union of higher domains.
  bool in_exclusive_region(int index, const Vec& x) const {
    auto a = try_alpha_star(x);
    return a && *a == index;
  }

  Vec eval(const Vec& x) const { return patch(alpha_star(x)).field(x); }

  std::vector<int> indices() const {
    std::vector<int> out;
    for (const auto& p : *patches_) out.push_back(p.index);
    return out;
  }

 private:
  Eigen::Index dim_;
  std::shared_ptr<const std::vector<Patch>> patches_;
};

/// x' = f(x, u), u in the control set.
struct ControlDynamics {
  std::function<Vec(const Vec&, const Vec&)> f;
  Eigen::Index control_dim = 0;
  std::string control_set_description;
};

struct FeedbackPatch {
  int index = 0;
  SmoothDomain domain;
  Vec control;
  double margin = 0.1;
};

/// Piecewise-constant feedback U(x) = k_{alpha*(x)}.
class PatchyFeedback {
 public:
  PatchyFeedback(ControlDynamics dynamics, std::vector<FeedbackPatch> patches)
      : dynamics_(std::move(dynamics)) {
    if (!dynamics_.f) throw ValidationError("patchy feedback: dynamics missing");
    if (patches.empty()) throw ValidationError("patchy feedback: no patches");
    std::sort(patches.begin(), patches.end(),
              [](const FeedbackPatch& a, const FeedbackPatch& b) { return a.index < b.index; });
    for (std::size_t i = 1; i < patches.size(); ++i)
      if (patches[i].index == patches[i - 1].index) throw ValidationError("patchy feedback: duplicate patch index");
    for (const auto& p : patches)
      if (p.control.size() != dynamics_.control_dim) throw ValidationError("patchy feedback: control dimension mismatch");
    patches_ = std::make_shared<const std::vector<FeedbackPatch>>(std::move(patches));
  }

  const ControlDynamics& dynamics() const { return dynamics_; }
  const std::vector<FeedbackPatch>& patches() const { return *patches_; }
  Eigen::Index dim() const { return patches_->front().domain.dim(); }

  std::optional<int> try_alpha_star(const Vec& x) const {
    for (auto it = patches_->rbegin(); it != patches_->rend(); ++it)
      if (it->domain.contains(x)) return it->index;
    return std::nullopt;
  }

  int alpha_star(const Vec& x) const {
    if (auto a = try_alpha_star(x)) return *a;
    std::ostringstream os;
    os << "measured state (" << x.transpose() << ") lies outside every feedback patch";
    throw OutsideDomain(os.str());
  }

  const FeedbackPatch& patch(int index) const {
    for (const auto& p : *patches_)
      if (p.index == index) return p;
    throw ValidationError("patchy feedback: unknown patch index");
  }

  const Vec& control_of(int index) const { return patch(index).control; }

  /// U(x).
  Vec control_at(const Vec& x) const { return control_of(alpha_star(x)); }

  /// f(x, U(x)).
  Vec closed_loop_velocity(const Vec& x) const { return dynamics_.f(x, control_at(x)); }

 private:
  ControlDynamics dynamics_;
  std::shared_ptr<const std::vector<FeedbackPatch>> patches_;
};

/// Patchy field g_alpha(x) = f(x, k_alpha) on the feedback's domains.
inline PatchyField closed_loop(const PatchyFeedback& fb) {
  std::vector<Patch> patches;
  auto f = fb.dynamics().f;
  for (const auto& p : fb.patches()) {
    Vec k = p.control;
    patches.push_back(Patch{p.index, p.domain, [f, k](const Vec& x) { return f(x, k); }, p.margin});
  }
  return PatchyField(std::move(patches), fb.dim());
}

/// Boundary point number i (of `count`) of a domain, deterministic and
/// nested in `count` for n >= 3.
inline Vec boundary_sample(const SmoothDomain& dom, std::size_t i, std::size_t count) {
  Eigen::Index n = dom.dim();
  Vec dir;
  if (n == 1) {
    dir = Vec::Constant(1, (i % 2 == 0) ? 1.0 : -1.0);
  } else if (n == 2) {
    double th = 6.283185307179586476925286766559 * static_cast<double>(i) / static_cast<double>(count);
    dir = vec2(std::cos(th), std::sin(th));
  } else {
    dir = direction_from_unit_cube(halton(i, static_cast<std::size_t>(n)), n);
  }
  return dom.boundary_on_ray(dir);
}

struct PatchMargin {
  int index = 0;
  /// max <g + v, n> over sampled boundary (collar) points and |v| <= chi.
  double worst_inner = 0.0;
  Vec worst_point;
  std::size_t samples = 0;
  bool pass = false;
  double margin() const { return -worst_inner; }
};

struct ValidationReport {
  double chi = 0.0;
  double collar_width = 0.0;
  std::vector<PatchMargin> patches;
  std::vector<Vec> cover_gaps;
  std::size_t cover_samples = 0;
  bool pass = false;

  double min_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : patches) m = std::min(m, p.margin());
    return m;
  }

  std::vector<int> failing_patches() const {
    std::vector<int> out;
    for (const auto& p : patches)
      if (!p.pass) out.push_back(p.index);
    return out;
  }
};

struct ValidateOptions {
  /// Also sample the collar B(boundary, collar_width) (robust inward form).
  double collar_width = 0.0;
  /// Ambient region for cover-gap search (ball); skipped when radius <= 0.
  Vec cover_center;
  double cover_radius = 0.0;
  std::size_t cover_samples = 4096;
};

/// Sampled check of <g_alpha(x) + v, n(x)> < 0 for |v| <= chi; the worst
/// perturbation is v = chi * n.
inline ValidationReport validate(const PatchyField& field, std::size_t samples_per_boundary, double chi,
                                 const ValidateOptions& opt = {}) {
  if (samples_per_boundary < 1) throw ValidationError("validate: need at least one sample per boundary");
  ValidationReport rep;
  rep.chi = chi;
  rep.collar_width = opt.collar_width;
  rep.pass = true;
  for (const auto& p : field.patches()) {
    PatchMargin pm;
    pm.index = p.index;
    pm.worst_inner = -std::numeric_limits<double>::infinity();
    auto consider = [&](const Vec& x, const Vec& n) {
      double ip = p.field(x).dot(n) + chi;
      ++pm.samples;
      if (ip > pm.worst_inner) {
        pm.worst_inner = ip;
        pm.worst_point = x;
      }
    };
    for (std::size_t i = 0; i < samples_per_boundary; ++i) {
      Vec b = boundary_sample(p.domain, i, samples_per_boundary);
      Vec n = p.domain.normal_at_boundary(b);
      consider(b, n);
      if (opt.collar_width > 0.0) {
        double s = opt.collar_width * (2.0 * radical_inverse(i + 1, 3) - 1.0);
        Vec x = b + s * n;
        consider(x, p.domain.outer_normal(x));
      }
    }
    pm.pass = pm.worst_inner < 0.0;
    rep.pass = rep.pass && pm.pass;
    rep.patches.push_back(std::move(pm));
  }
  if (opt.cover_radius > 0.0) {
    Eigen::Index n = field.dim();
    Vec c = opt.cover_center.size() == n ? opt.cover_center : Vec::Zero(n);
    for (std::size_t i = 0; i < opt.cover_samples; ++i) {
      Vec u = halton(i, static_cast<std::size_t>(n), 4);
      Vec x = c + opt.cover_radius * (2.0 * u.array() - 1.0).matrix();
      if ((x - c).norm() >= opt.cover_radius) continue;
      ++rep.cover_samples;
      if (!field.covers(x)) rep.cover_gaps.push_back(x);
    }
  }
  return rep;
}

}  // namespace patchy

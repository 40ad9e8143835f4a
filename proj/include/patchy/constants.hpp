#pragma once

/**
 * @file constants.hpp
 * @brief Sampled estimates of the constants that budget the stability and
 * robustness results: inward speed on boundary collars (c'), cross-patch
 * normal speeds (c''), the backward recursion for C_i and l_i, the
 * total-variation gate delta and the excess constant C, plus the sampling
 * constants M, c_bar, k_bar and delta_bar.
 */

#include "patchy/integrate.hpp"

#include <optional>

namespace patchy {

/// Floors and caps that keep k_bar = 1/(2 c_bar) finite.
inline constexpr double kCBarFloor = 1e-9;
inline constexpr double kKBarCap = 1e6;

struct Prop22Budget {
  std::vector<double> C;    // C_1..C_N
  std::vector<double> ell;  // l_1..l_N
  double delta = 0.0;       // rho_bar / (2 C_1)
  double C_big = 0.0;       // (N+1) sum l_j
};

/// C_N = 1 + c3, l_N = 2 C_N / c1 and for i < N
///   C_i = c2 l_{i+1} + sum_{j>i} C_j,   l_i = (2 C_i + c2 sum_{j>i} l_j) / c1.
inline Prop22Budget prop22_recursion(double c1, double c2, double c3, std::size_t N, double rho_bar) {
  if (N == 0) throw ValidationError("constants: no patches");
  if (!(c1 > 0.0)) throw NonInwardCollar("constants: c' must be positive");
  Prop22Budget b;
  b.C.assign(N, 0.0);
  b.ell.assign(N, 0.0);
  b.C[N - 1] = 1.0 + c3;
  b.ell[N - 1] = 2.0 * b.C[N - 1] / c1;
  double sumC = b.C[N - 1];
  double sumL = b.ell[N - 1];
  for (std::size_t k = N - 1; k-- > 0;) {
    b.C[k] = c2 * b.ell[k + 1] + sumC;
    b.ell[k] = (2.0 * b.C[k] + c2 * sumL) / c1;
    sumC += b.C[k];
    sumL += b.ell[k];
  }
  b.delta = rho_bar / (2.0 * b.C[0]);
  b.C_big = static_cast<double>(N + 1) * sumL;
  return b;
}

struct RobustnessConstants {
  std::vector<int> indices;
  double rho_bar = 0.0;
  double c_prime = 0.0;
  double c_double_prime = 0.0;
  double c_triple_prime = 1.0;
  std::vector<double> C_i;
  std::vector<double> ell_i;
  double delta = 0.0;
  double C_big = 0.0;
  double M = 0.0;
  double c_bar = 0.0;
  double k_bar = 0.0;
  double delta_bar = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  std::vector<double> T_alpha;
  /// Admissible disturbance size for sampling runs: the smaller of the
  /// inward margin on B(boundary, rho2) and half the smallest speed on the
  /// exclusive regions away from the target ball.
  double chi_double_prime = 0.0;
  std::size_t samples_per_patch = 0;
};

struct ConstantsOptions {
  double rho1 = 0.2;
  double rho2 = 0.05;
  /// Points with |x| <= target_radius are ignored for the speed bound in chi''.
  double target_radius = 0.0;
  std::size_t transit_runs = 64;
  double transit_horizon = 10.0;
  double transit_dt = 1e-2;
};

namespace detail {

struct PatchSamples {
  double worst_collar = -std::numeric_limits<double>::infinity();  // max <g_i, n_i> on the inner collar
  double cross = 0.0;                                              // max |<g_j, n_i>|, j > i
  double sup_speed = 0.0;
  double lipschitz = 0.0;
  double collar_margin = std::numeric_limits<double>::infinity();  // min -<g_i, n_i> on B(boundary, rho2)
  double min_speed = std::numeric_limits<double>::infinity();      // min |g_i| on D_i off the target ball
};

inline double jacobian_norm(const VectorField& g, const Vec& x) {
  Eigen::Index n = x.size();
  Mat J(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double h = 1e-6 * (1.0 + std::abs(x[k]));
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    J.col(k) = (g(xp) - g(xm)) / (2.0 * h);
  }
  Eigen::JacobiSVD<Mat> svd(J);
  return svd.singularValues()(0);
}

/// Point `i` on a ray-parametrised shell around the boundary:
/// b + s n with s in [s_lo, s_hi].
inline std::pair<Vec, Vec> shell_point(const SmoothDomain& dom, std::uint64_t i, double s_lo, double s_hi,
                                       std::size_t first_dim) {
  Eigen::Index n = dom.dim();
  Vec u = halton(i, static_cast<std::size_t>(n) + 1, first_dim);
  Vec dir = direction_from_unit_cube(u.head(n), n);
  Vec b = dom.boundary_on_ray(dir);
  Vec nb = dom.normal_at_boundary(b);
  double s = s_lo + (s_hi - s_lo) * u[n];
  return {b + s * nb, b};
}

inline PatchSamples sample_patch(const PatchyField& field, std::size_t pos, double rho_bar, std::size_t budget,
                                 const ConstantsOptions& opt) {
  const Patch& P = field.at(pos);
  const SmoothDomain& dom = P.domain;
  const Eigen::Index n = dom.dim();
  struct Rec {
    double collar = -std::numeric_limits<double>::infinity();
    double cross = 0.0, speed = 0.0, lip = 0.0;
    double margin = std::numeric_limits<double>::infinity();
    double min_speed = std::numeric_limits<double>::infinity();
  };
  std::vector<Rec> recs(budget);
  parallel_for(budget, [&](std::size_t i) {
    Rec r;
    // Inner collar Omega_i minus its rho_bar inset: c'.
    auto [xc, bc] = shell_point(dom, i, -rho_bar, 0.0, 0);
    if (dom.contains(xc) && dom.signed_distance(xc) < rho_bar) {
      Vec nrm = dom.outer_normal(xc);
      r.collar = P.field(xc).dot(nrm);
      for (std::size_t j = pos + 1; j < field.size(); ++j)
        r.cross = std::max(r.cross, std::abs(field.at(j).field(xc).dot(nrm)));
    }
    // Interior of Omega_i: c'' and the speed bounds.
    Vec u = halton(i, static_cast<std::size_t>(n), 7);
    Vec xi = dom.anchor() + dom.bounding_radius() * (2.0 * u.array() - 1.0).matrix();
    if (dom.contains(xi)) {
      try {
        Vec nrm = dom.outer_normal(xi);
        for (std::size_t j = pos + 1; j < field.size(); ++j)
          r.cross = std::max(r.cross, std::abs(field.at(j).field(xi).dot(nrm)));
      } catch (const DegenerateBoundary&) {
        // projection is not unique at this point; the normal is undefined
      }
      Vec g = P.field(xi);
      r.speed = g.norm();
      r.lip = jacobian_norm(P.field, xi);
      if (field.in_exclusive_region(P.index, xi) && xi.norm() > opt.target_radius) r.min_speed = g.norm();
    }
    // Two-sided shell B(boundary, rho2): inward margin, and speeds just outside.
    auto [xs, bs] = shell_point(dom, i, -opt.rho2, opt.rho2, 3);
    Vec gs = P.field(xs);
    r.margin = -gs.dot(dom.normal_at_boundary(dom.project_boundary(xs)));
    r.speed = std::max(r.speed, gs.norm());
    r.lip = std::max(r.lip, jacobian_norm(P.field, xs));
    recs[i] = r;
  });
  PatchSamples out;
  for (const auto& r : recs) {
    out.worst_collar = std::max(out.worst_collar, r.collar);
    out.cross = std::max(out.cross, r.cross);
    out.sup_speed = std::max(out.sup_speed, r.speed);
    out.lipschitz = std::max(out.lipschitz, r.lip);
    out.collar_margin = std::min(out.collar_margin, r.margin);
    out.min_speed = std::min(out.min_speed, r.min_speed);
  }
  return out;
}

/// Longest time spent on each patch by Caratheodory runs from Halton starts.
inline std::vector<double> transit_budgets(const PatchyField& field, const ConstantsOptions& opt) {
  Eigen::Index n = field.dim();
  Vec lo = Vec::Constant(n, std::numeric_limits<double>::infinity());
  Vec hi = -lo;
  for (const auto& p : field.patches()) {
    Vec r = Vec::Constant(n, p.domain.bounding_radius());
    lo = lo.cwiseMin(p.domain.anchor() - r);
    hi = hi.cwiseMax(p.domain.anchor() + r);
  }
  std::vector<Vec> starts;
  for (std::uint64_t i = 0; starts.size() < opt.transit_runs && i < 64 * opt.transit_runs + 64; ++i) {
    Vec x = lo + (hi - lo).cwiseProduct(halton(i, static_cast<std::size_t>(n), 11));
    if (field.covers(x)) starts.push_back(x);
  }
  std::vector<std::vector<double>> spent(starts.size(), std::vector<double>(field.size(), 0.0));
  IntegratorConfig cfg;
  cfg.dt = opt.transit_dt;
  cfg.event_tol = std::min(1e-6, 0.1 * cfg.dt);
  parallel_for(starts.size(), [&](std::size_t r) {
    Trajectory tr;
    try {
      tr = solve_caratheodory(field, starts[r], 0.0, opt.transit_horizon, cfg);
    } catch (const OutsideDomain& e) {
      if (e.partial()) tr = *e.partial();
    }
    for (std::size_t k = 1; k < tr.size(); ++k) {
      if (tr.alpha[k] < 0) continue;
      spent[r][field.position_of(tr.alpha[k])] += tr.times[k] - tr.times[k - 1];
    }
  });
  std::vector<double> T(field.size(), 0.0);
  for (const auto& s : spent)
    for (std::size_t p = 0; p < s.size(); ++p) T[p] = std::max(T[p], s[p]);
  for (double& t : T) t = (t > 0.0) ? std::min(2.0 * t, opt.transit_horizon) : opt.transit_horizon;
  return T;
}

}  // namespace detail

/// Sampled constants for `field`. Samples come from nested Halton
/// sequences, so a larger budget only adds points.
inline RobustnessConstants estimate_constants(const PatchyField& field, double rho_bar, std::size_t sample_budget,
                                              const ConstantsOptions& opt = {}) {
  if (!(rho_bar > 0.0)) throw ValidationError("estimate_constants: rho_bar must be positive");
  if (sample_budget == 0) throw ValidationError("estimate_constants: sample_budget must be positive");
  if (!(opt.rho1 > 0.0) || !(opt.rho2 > 0.0)) throw ValidationError("estimate_constants: rho1, rho2 must be positive");
  RobustnessConstants k;
  k.indices = field.indices();
  k.rho_bar = rho_bar;
  k.rho1 = opt.rho1;
  k.rho2 = opt.rho2;
  k.samples_per_patch = sample_budget;
  double worst = -std::numeric_limits<double>::infinity();
  double cross = 0.0, sup_speed = 0.0, lip = 0.0;
  double margin = std::numeric_limits<double>::infinity(), min_speed = margin;
  for (std::size_t p = 0; p < field.size(); ++p) {
    auto s = detail::sample_patch(field, p, rho_bar, sample_budget, opt);
    worst = std::max(worst, s.worst_collar);
    cross = std::max(cross, s.cross);
    sup_speed = std::max(sup_speed, s.sup_speed);
    lip = std::max(lip, s.lipschitz);
    margin = std::min(margin, s.collar_margin);
    min_speed = std::min(min_speed, s.min_speed);
  }
  k.c_prime = -worst;
  if (!(k.c_prime > 0.0)) {
    std::ostringstream os;
    os << "estimate_constants: sampled collar inner product " << worst << " is not negative";
    throw NonInwardCollar(os.str());
  }
  k.c_double_prime = cross;
  k.c_triple_prime = 1.0;
  auto b = prop22_recursion(k.c_prime, k.c_double_prime, k.c_triple_prime, field.size(), rho_bar);
  k.C_i = b.C;
  k.ell_i = b.ell;
  k.delta = b.delta;
  k.C_big = b.C_big;
  k.M = sup_speed;
  k.c_bar = std::max(lip, kCBarFloor);
  k.k_bar = std::min(1.0 / (2.0 * k.c_bar), kKBarCap);
  k.delta_bar = std::min(k.c_bar * k.rho2, k.rho1 / k.M);
  k.chi_double_prime = std::isfinite(min_speed) ? std::min(margin, 0.5 * min_speed) : margin;
  k.T_alpha = detail::transit_budgets(field, opt);
  return k;
}

}  // namespace patchy

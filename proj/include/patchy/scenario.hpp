#pragma once

/**
 * @file scenario.hpp
 * @brief Scenario files (JSON with a `schema` field) and the JSON reports
 * emitted by the CLI. Parsing is strict: unknown keys are rejected and every
 * error names the offending field path.
 */

#include "patchy/analyze.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace patchy {

inline constexpr int kScenarioSchema = 1;
inline constexpr int kReportSchema = 1;

using json = nlohmann::json;

namespace detail {

/// A JSON value together with its path from the document root.
class Node {
 public:
  Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const json& raw() const { return *j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

  /// Requires an object whose keys all appear in `allowed`.
  void only(std::initializer_list<const char*> allowed) const {
    if (!j_->is_object()) fail("expected an object");
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }
  }

  bool has(const char* key) const { return j_->is_object() && j_->contains(key); }

  Node at(const char* key) const {
    if (!j_->is_object()) fail("expected an object");
    auto it = j_->find(key);
    if (it == j_->end()) throw ConfigError(path_ + "." + key + ": missing required key");
    return Node(*it, path_ + "." + key);
  }

  Node at(std::size_t i) const { return Node((*j_)[i], path_ + "[" + std::to_string(i) + "]"); }

  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    double v = j_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  /// Number, or null read back as NaN.
  double number_or_nan() const { return j_->is_null() ? std::numeric_limits<double>::quiet_NaN() : number(); }

  double positive() const {
    double v = number();
    if (!(v > 0.0)) fail("expected a positive number");
    return v;
  }

  double non_negative() const {
    double v = number();
    if (!(v >= 0.0)) fail("expected a non-negative number");
    return v;
  }

  long long integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<long long>();
  }

  std::uint64_t count() const {
    if (!j_->is_number_integer() || j_->get<long long>() < 0) fail("expected a non-negative integer");
    return j_->get<std::uint64_t>();
  }

  std::string str() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }

  Vec vec(Eigen::Index n = -1) const {
    std::size_t m = size();
    if (n >= 0 && m != static_cast<std::size_t>(n)) fail("expected " + std::to_string(n) + " components");
    Vec v(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) v[static_cast<Eigen::Index>(i)] = at(i).number();
    return v;
  }

  Mat mat(Eigen::Index rows, Eigen::Index cols) const {
    if (size() != static_cast<std::size_t>(rows)) fail("expected " + std::to_string(rows) + " rows");
    Mat A(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) A.row(r) = at(static_cast<std::size_t>(r)).vec(cols).transpose();
    return A;
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).number());
    return out;
  }

  double num(const char* key, double def) const { return has(key) ? at(key).number() : def; }
  std::uint64_t cnt(const char* key, std::uint64_t def) const { return has(key) ? at(key).count() : def; }

 private:
  const json* j_;
  std::string path_;
};

inline LevelFunction parse_level(const Node& n, Eigen::Index dim);

inline SmoothDomain parse_domain(const Node& n, Eigen::Index dim) {
  std::string kind = n.at("kind").str();
  if (kind == "ball") {
    n.only({"kind", "center", "radius"});
    return SmoothDomain::ball(n.at("center").vec(dim), n.at("radius").positive());
  }
  if (kind == "ellipsoid") {
    n.only({"kind", "center", "semi_axes"});
    return SmoothDomain::ellipsoid(n.at("center").vec(dim), n.at("semi_axes").vec(dim));
  }
  if (kind == "intersection") {
    n.only({"kind", "parts", "sharpness", "anchor", "bounding_radius"});
    Node parts = n.at("parts");
    if (parts.size() == 0) parts.fail("expected at least one part");
    std::vector<LevelFunction> levels;
    for (std::size_t i = 0; i < parts.size(); ++i) levels.push_back(parse_level(parts.at(i), dim));
    Vec anchor = n.at("anchor").vec(dim);
    double sharp = n.at("sharpness").positive();
    auto dom = SmoothDomain::smooth_intersection(std::move(levels), sharp, anchor, n.at("bounding_radius").positive());
    if (!dom.contains(anchor)) n.at("anchor").fail("anchor must lie inside the domain");
    return dom;
  }
  n.at("kind").fail("unknown domain kind '" + kind + "' (expected ball, ellipsoid or intersection)");
}

inline LevelFunction parse_level(const Node& n, Eigen::Index dim) {
  std::string kind = n.at("kind").str();
  if (kind == "halfspace") {
    n.only({"kind", "normal", "offset"});
    Vec nrm = n.at("normal").vec(dim);
    if (!(nrm.norm() > 0.0)) n.at("normal").fail("normal must be non-zero");
    return halfspace_level(nrm, n.at("offset").number());
  }
  if (kind == "ball" || kind == "ellipsoid") return parse_domain(n, dim).level_function();
  n.at("kind").fail("unknown part kind '" + kind + "' (expected halfspace, ball or ellipsoid)");
}

inline VectorField parse_field(const Node& n, Eigen::Index dim) {
  std::string kind = n.at("kind").str();
  if (kind == "affine") {
    n.only({"kind", "A", "b"});
    Mat A = n.at("A").mat(dim, dim);
    Vec b = n.has("b") ? n.at("b").vec(dim) : Vec::Zero(dim);
    return [A, b](const Vec& x) { return Vec(A * x + b); };
  }
  if (kind == "constant") {
    n.only({"kind", "value"});
    Vec v = n.at("value").vec(dim);
    return [v](const Vec&) { return v; };
  }
  n.at("kind").fail("unknown field kind '" + kind + "' (expected affine or constant)");
}

inline ControlDynamics parse_dynamics(const Node& n, Eigen::Index dim) {
  std::string kind = n.at("kind").str();
  if (kind != "affine") n.at("kind").fail("unknown dynamics kind '" + kind + "' (expected affine)");
  n.only({"kind", "A", "B", "c", "control_dim"});
  Eigen::Index m = static_cast<Eigen::Index>(n.at("control_dim").count());
  if (m < 1) n.at("control_dim").fail("expected a positive integer");
  Mat A = n.at("A").mat(dim, dim);
  Mat B = n.at("B").mat(dim, m);
  Vec c = n.has("c") ? n.at("c").vec(dim) : Vec::Zero(dim);
  ControlDynamics d;
  d.f = [A, B, c](const Vec& x, const Vec& u) { return Vec(A * x + B * u + c); };
  d.control_dim = m;
  d.control_set_description = "R^" + std::to_string(m);
  return d;
}

inline SignalPiece parse_piece(const Node& n, Eigen::Index dim) {
  std::string kind = n.at("kind").str();
  double t0 = n.at("t0").number(), t1 = n.at("t1").number();
  if (!(t1 > t0)) n.fail("need t1 > t0");
  if (kind == "constant") {
    n.only({"kind", "t0", "t1", "value"});
    return PiecewiseSignal::constant_piece(t0, t1, n.at("value").vec(dim));
  }
  if (kind == "linear") {
    n.only({"kind", "t0", "t1", "start", "slope"});
    return PiecewiseSignal::linear_piece(t0, t1, n.at("start").vec(dim), n.at("slope").vec(dim));
  }
  if (kind == "sinusoid") {
    n.only({"kind", "t0", "t1", "amplitude", "omega", "phase"});
    Vec phase = n.has("phase") ? n.at("phase").vec(dim) : Vec::Zero(dim);
    return PiecewiseSignal::sinusoid_piece(t0, t1, n.at("amplitude").vec(dim), n.at("omega").vec(dim), phase);
  }
  n.at("kind").fail("unknown piece kind '" + kind + "' (expected constant, linear or sinusoid)");
}

inline PiecewiseSignal parse_pieces(const Node& n, Eigen::Index dim) {
  PiecewiseSignal s(dim);
  for (std::size_t i = 0; i < n.size(); ++i) {
    try {
      s.add(parse_piece(n.at(i), dim));
    } catch (const ValidationError& e) {
      n.at(i).fail(e.what());
    }
  }
  return s;
}

/// {origin?, jumps: [{t, dw}], ac: [piece]} on [t0, T].
inline BVSignal parse_bv(const Node& n, Eigen::Index dim, double t0, double T) {
  n.only({"origin", "jumps", "ac"});
  Vec origin = n.has("origin") ? n.at("origin").vec(dim) : Vec::Zero(dim);
  std::vector<Jump> jumps;
  if (n.has("jumps")) {
    Node js = n.at("jumps");
    for (std::size_t i = 0; i < js.size(); ++i) {
      Node j = js.at(i);
      j.only({"t", "dw"});
      double t = j.at("t").number();
      if (!(t > t0 && t <= T)) j.at("t").fail("jump time must lie in (t0, T]");
      if (!jumps.empty() && !(t > jumps.back().time)) j.at("t").fail("jump times must increase");
      jumps.push_back({t, j.at("dw").vec(dim)});
    }
  }
  PiecewiseSignal dens = n.has("ac") ? parse_pieces(n.at("ac"), dim) : PiecewiseSignal(dim);
  return BVSignal(t0, T, origin, std::move(jumps), std::move(dens));
}

inline PiecewiseSignal parse_disturbance(const Node& n, Eigen::Index dim) {
  n.only({"ac"});
  return parse_pieces(n.at("ac"), dim);
}

inline std::vector<int> error_families_from(const Node& n) {
  std::vector<int> out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    try {
      out.push_back(static_cast<int>(parse_family(n.at(i).str())));
    } catch (const ConfigError& e) {
      n.at(i).fail(e.what());
    }
  }
  if (out.empty()) n.fail("expected at least one error family");
  return out;
}

}  // namespace detail

/// Initial states for a study: explicit points, rings of evenly spaced
/// points, or seeded uniform samples of the annulus r_lo <= |x| <= r_hi.
struct GridSpec {
  std::string kind = "points";
  std::vector<Vec> points;
  std::vector<double> radii;
  std::size_t count = 0;
  double r_lo = 0.0, r_hi = 0.0;

  std::vector<Vec> resolve(Eigen::Index dim, std::uint64_t seed) const {
    if (kind == "points") return points;
    std::vector<Vec> out;
    if (kind == "rings") {
      for (std::size_t k = 0; k < radii.size(); ++k)
        for (std::size_t i = 0; i < count; ++i) {
          Vec u(dim);
          u[0] = (static_cast<double>(i) + 0.5 * static_cast<double>(k % 2)) / static_cast<double>(count);
          for (Eigen::Index d = 1; d < dim; ++d) u[d] = radical_inverse(i + 1, nth_prime(static_cast<std::size_t>(d)));
          out.push_back(radii[k] * direction_from_unit_cube(u, dim));
        }
      return out;
    }
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    for (std::size_t i = 0; i < count; ++i) {
      Vec u(dim);
      for (Eigen::Index d = 0; d < dim; ++d) u[d] = detail::unit_uniform(rng);
      double q = detail::unit_uniform(rng);
      double rad = std::pow(std::pow(r_lo, static_cast<double>(dim)) +
                                q * (std::pow(r_hi, static_cast<double>(dim)) - std::pow(r_lo, static_cast<double>(dim))),
                            1.0 / static_cast<double>(dim));
      out.push_back(rad * direction_from_unit_cube(u, dim));
    }
    return out;
  }
};

struct PlanSpec {
  double delta = 0.0;
  std::vector<double> taus;  // empty: seeded partition of [t0, T]
  std::vector<Vec> errors;   // empty: generated from family and bound
  ErrorFamily family = ErrorFamily::zero;
  double bound = 0.0;
};

struct ValidateSpec {
  std::size_t samples = 720;
  double chi = 0.0;
  ValidateOptions options;
};

struct ConvergenceSpec {
  std::vector<double> tv_sequence;
  std::optional<BVSignal> profile;  // defaults to signals.w
  std::size_t branch_cap = 16;
  double slack = 0.1;
};

struct Prop22Spec {
  double rho_bar = 0.1;
  std::size_t sample_budget = 256;
  ConstantsOptions options;
};

struct RobustSpec {
  double r = 0.0, s = 0.0, chi = 0.0;
  GridSpec grid;
  std::size_t zeta_jumps = 3;
  std::size_t d_pieces = 8;
  std::optional<double> horizon;
};

struct SamplingSpec {
  double r = 0.0, s = 0.0;
  std::optional<double> chi, delta, k_bar;  // unset: taken from estimate_constants
  GridSpec grid;
  std::vector<int> families{0, 1, 2};
  std::size_t d_pieces = 8;
  double rho_bar = 0.1;
  std::size_t sample_budget = 256;
  ConstantsOptions options;
  std::optional<double> horizon;
};

struct InvarianceSpec {
  int patch = 0;
  double rho = 0.0, chi = 0.0;
  std::size_t samples = 100;
  double horizon = 5.0;
};

struct Scenario {
  std::string name;
  Eigen::Index dim = 0;
  std::optional<PatchyField> field;
  std::optional<PatchyFeedback> feedback;
  Vec x0;
  double t0 = 0.0;
  double T = 1.0;
  std::optional<BVSignal> w, zeta;
  std::optional<PiecewiseSignal> d;
  std::optional<PlanSpec> plan;
  IntegratorConfig integrator;
  ValidateSpec validate;
  std::optional<ConvergenceSpec> convergence;
  std::optional<Prop22Spec> prop22;
  std::optional<RobustSpec> robust;
  std::optional<SamplingSpec> sampling;
  std::optional<InvarianceSpec> invariance;

  /// The patchy field, or the closed loop of the feedback.
  PatchyField closed_field() const { return field ? *field : closed_loop(*feedback); }

  const PatchyFeedback& require_feedback(const char* what) const {
    if (!feedback) throw ConfigError(std::string(what) + " needs a scenario with dynamics and feedback");
    return *feedback;
  }

  BVSignal signal_or_zero(const std::optional<BVSignal>& s) const { return s ? *s : BVSignal::zero(dim, t0, T); }
  PiecewiseSignal disturbance_or_zero() const { return d ? *d : PiecewiseSignal(dim); }

  /// Sampling plan on [t0, T], seeded when the partition or errors are generated.
  SamplingPlan sampling_plan(std::uint64_t seed) const {
    if (!plan) throw ConfigError("plan: sampling mode needs a 'plan' section");
    std::vector<double> taus = plan->taus;
    if (taus.empty()) {
      taus = SamplingPlan::seeded_partition(T - t0, plan->delta, seed);
      for (double& t : taus) t += t0;
    }
    std::vector<Vec> errs = plan->errors;
    if (errs.empty()) errs = make_errors(plan->family, taus.size() - 1, plan->bound, dim, seed ^ 0x9e3779b97f4a7c15ULL);
    if (errs.size() + 1 != taus.size()) throw ConfigError("plan.errors: expected one error per sampling interval");
    try {
      return SamplingPlan(std::move(taus), std::move(errs), plan->delta);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("plan: ") + e.what());
    }
  }
};

namespace detail {

inline GridSpec parse_grid(const Node& n, Eigen::Index dim) {
  GridSpec g;
  g.kind = n.at("kind").str();
  if (g.kind == "points") {
    n.only({"kind", "points"});
    Node ps = n.at("points");
    for (std::size_t i = 0; i < ps.size(); ++i) g.points.push_back(ps.at(i).vec(dim));
    if (g.points.empty()) ps.fail("expected at least one point");
  } else if (g.kind == "rings") {
    n.only({"kind", "radii", "count"});
    g.radii = n.at("radii").numbers();
    g.count = n.at("count").count();
    if (g.radii.empty() || g.count == 0) n.fail("rings need radii and a positive count");
  } else if (g.kind == "annulus") {
    n.only({"kind", "r_lo", "r_hi", "count"});
    g.r_lo = n.at("r_lo").non_negative();
    g.r_hi = n.at("r_hi").positive();
    g.count = n.at("count").count();
    if (!(g.r_hi > g.r_lo) || g.count == 0) n.fail("annulus needs r_lo < r_hi and a positive count");
  } else {
    n.at("kind").fail("unknown grid kind '" + g.kind + "' (expected points, rings or annulus)");
  }
  return g;
}

inline ConstantsOptions parse_constants_options(const Node& n, ConstantsOptions o) {
  o.rho1 = n.has("rho1") ? n.at("rho1").positive() : o.rho1;
  o.rho2 = n.has("rho2") ? n.at("rho2").positive() : o.rho2;
  return o;
}

inline std::optional<double> auto_or_number(const Node& n, const char* key) {
  if (!n.has(key)) return std::nullopt;
  Node v = n.at(key);
  if (v.raw().is_string()) {
    if (v.str() != "auto") v.fail("expected a number or \"auto\"");
    return std::nullopt;
  }
  return v.positive();
}

inline void parse_studies(const Node& n, Scenario& sc) {
  n.only({"convergence", "prop22", "robust", "sampling", "invariance"});
  const Eigen::Index dim = sc.dim;
  if (n.has("convergence")) {
    Node c = n.at("convergence");
    c.only({"tv_sequence", "profile", "branch_cap", "slack"});
    ConvergenceSpec s;
    s.tv_sequence = c.at("tv_sequence").numbers();
    if (s.tv_sequence.empty()) c.at("tv_sequence").fail("expected at least one value");
    for (std::size_t i = 0; i < s.tv_sequence.size(); ++i) {
      if (!(s.tv_sequence[i] >= 0.0)) c.at("tv_sequence").at(i).fail("expected a non-negative number");
      if (i > 0 && s.tv_sequence[i] > s.tv_sequence[i - 1]) c.at("tv_sequence").at(i).fail("sequence must decrease");
    }
    if (c.has("profile")) s.profile = parse_bv(c.at("profile"), dim, sc.t0, sc.T);
    s.branch_cap = c.cnt("branch_cap", s.branch_cap);
    s.slack = c.has("slack") ? c.at("slack").non_negative() : s.slack;
    sc.convergence = std::move(s);
  }
  if (n.has("prop22")) {
    Node c = n.at("prop22");
    c.only({"rho_bar", "sample_budget", "rho1", "rho2"});
    Prop22Spec s;
    s.rho_bar = c.has("rho_bar") ? c.at("rho_bar").positive() : s.rho_bar;
    s.sample_budget = c.cnt("sample_budget", s.sample_budget);
    if (s.sample_budget == 0) c.at("sample_budget").fail("expected a positive integer");
    s.options = parse_constants_options(c, s.options);
    sc.prop22 = s;
  }
  if (n.has("robust")) {
    Node c = n.at("robust");
    c.only({"r", "s", "chi", "grid", "zeta_jumps", "d_pieces", "horizon"});
    RobustSpec s;
    s.r = c.at("r").positive();
    s.s = c.at("s").positive();
    if (!(s.r < s.s)) c.fail("need r < s");
    s.chi = c.at("chi").non_negative();
    s.grid = parse_grid(c.at("grid"), dim);
    s.zeta_jumps = c.cnt("zeta_jumps", s.zeta_jumps);
    s.d_pieces = c.cnt("d_pieces", s.d_pieces);
    if (c.has("horizon")) s.horizon = c.at("horizon").positive();
    sc.robust = std::move(s);
  }
  if (n.has("sampling")) {
    Node c = n.at("sampling");
    c.only({"r", "s", "chi", "delta", "k_bar", "grid", "families", "d_pieces", "rho_bar", "sample_budget", "rho1", "rho2",
            "horizon"});
    SamplingSpec s;
    s.r = c.at("r").positive();
    s.s = c.at("s").positive();
    if (!(s.r < s.s)) c.fail("need r < s");
    s.chi = auto_or_number(c, "chi");
    s.delta = auto_or_number(c, "delta");
    s.k_bar = auto_or_number(c, "k_bar");
    s.grid = parse_grid(c.at("grid"), dim);
    if (c.has("families")) s.families = error_families_from(c.at("families"));
    s.d_pieces = c.cnt("d_pieces", s.d_pieces);
    s.rho_bar = c.has("rho_bar") ? c.at("rho_bar").positive() : s.rho_bar;
    s.sample_budget = c.cnt("sample_budget", s.sample_budget);
    if (s.sample_budget == 0) c.at("sample_budget").fail("expected a positive integer");
    s.options = parse_constants_options(c, s.options);
    s.options.target_radius = s.r;
    if (c.has("horizon")) s.horizon = c.at("horizon").positive();
    sc.sampling = std::move(s);
  }
  if (n.has("invariance")) {
    Node c = n.at("invariance");
    c.only({"patch", "rho", "chi", "samples", "horizon"});
    InvarianceSpec s;
    s.patch = static_cast<int>(c.at("patch").integer());
    s.rho = c.at("rho").positive();
    s.chi = c.at("chi").non_negative();
    s.samples = c.cnt("samples", s.samples);
    s.horizon = c.has("horizon") ? c.at("horizon").positive() : s.horizon;
    sc.invariance = s;
  }
}

inline void parse_plan(const Node& n, Scenario& sc) {
  n.only({"delta", "taus", "errors"});
  PlanSpec p;
  p.delta = n.at("delta").positive();
  if (n.has("taus")) {
    p.taus = n.at("taus").numbers();
    if (p.taus.size() < 2) n.at("taus").fail("expected at least two sampling times");
  }
  if (n.has("errors")) {
    Node e = n.at("errors");
    if (e.raw().is_array()) {
      for (std::size_t i = 0; i < e.size(); ++i) p.errors.push_back(e.at(i).vec(sc.dim));
    } else {
      e.only({"family", "bound"});
      try {
        p.family = parse_family(e.at("family").str());
      } catch (const ConfigError& err) {
        e.at("family").fail(err.what());
      }
      p.bound = e.at("bound").non_negative();
    }
  }
  sc.plan = std::move(p);
}

inline void parse_integrator(const Node& n, IntegratorConfig& cfg) {
  n.only({"dt", "event_tol", "max_events", "seed", "graze_tol"});
  cfg.dt = n.has("dt") ? n.at("dt").positive() : cfg.dt;
  cfg.event_tol = n.has("event_tol") ? n.at("event_tol").positive() : cfg.event_tol;
  cfg.max_events = n.cnt("max_events", cfg.max_events);
  cfg.rng_seed = n.cnt("seed", cfg.rng_seed);
  cfg.graze_tol = n.has("graze_tol") ? n.at("graze_tol").positive() : cfg.graze_tol;
  try {
    cfg.check();
  } catch (const ConfigError& e) {
    n.fail(e.what());
  }
}

inline void parse_validate(const Node& n, ValidateSpec& v, Eigen::Index dim) {
  n.only({"samples", "chi", "collar_width", "cover"});
  v.samples = n.cnt("samples", v.samples);
  if (v.samples == 0) n.at("samples").fail("expected a positive integer");
  v.chi = n.has("chi") ? n.at("chi").non_negative() : v.chi;
  v.options.collar_width = n.has("collar_width") ? n.at("collar_width").non_negative() : 0.0;
  if (n.has("cover")) {
    Node c = n.at("cover");
    c.only({"center", "radius", "samples"});
    v.options.cover_center = c.at("center").vec(dim);
    v.options.cover_radius = c.at("radius").positive();
    v.options.cover_samples = c.cnt("samples", v.options.cover_samples);
  }
}

}  // namespace detail

/// Builds a scenario from a parsed document; `origin` prefixes error paths.
inline Scenario scenario_from_json(const json& doc, const std::string& origin = "scenario") {
  using detail::Node;
  Node root(doc, origin);
  root.only({"schema", "name", "dimension", "patches", "dynamics", "feedback", "initial_state", "t0", "horizon",
             "signals", "plan", "integrator", "validate", "study"});
  if (root.at("schema").integer() != kScenarioSchema)
    root.at("schema").fail("unsupported schema version (expected " + std::to_string(kScenarioSchema) + ")");
  Scenario sc;
  sc.name = root.has("name") ? root.at("name").str() : std::string("unnamed");
  long long dim = root.at("dimension").integer();
  if (dim < 1) root.at("dimension").fail("expected a positive integer");
  sc.dim = static_cast<Eigen::Index>(dim);

  try {
    if (root.has("patches")) {
      if (root.has("dynamics") || root.has("feedback")) root.fail("give either 'patches' or 'dynamics' + 'feedback'");
      Node ps = root.at("patches");
      std::vector<Patch> patches;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        Node p = ps.at(i);
        p.only({"index", "domain", "field", "margin"});
        patches.push_back(Patch{static_cast<int>(p.at("index").integer()), detail::parse_domain(p.at("domain"), sc.dim),
                                detail::parse_field(p.at("field"), sc.dim),
                                p.has("margin") ? p.at("margin").positive() : 0.1});
      }
      sc.field = PatchyField(std::move(patches), sc.dim);
    } else if (root.has("dynamics") && root.has("feedback")) {
      ControlDynamics dyn = detail::parse_dynamics(root.at("dynamics"), sc.dim);
      Node ps = root.at("feedback");
      std::vector<FeedbackPatch> patches;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        Node p = ps.at(i);
        p.only({"index", "domain", "control", "margin"});
        patches.push_back(FeedbackPatch{static_cast<int>(p.at("index").integer()),
                                        detail::parse_domain(p.at("domain"), sc.dim),
                                        p.at("control").vec(dyn.control_dim),
                                        p.has("margin") ? p.at("margin").positive() : 0.1});
      }
      sc.feedback = PatchyFeedback(std::move(dyn), std::move(patches));
    } else {
      root.fail("expected 'patches', or 'dynamics' together with 'feedback'");
    }
  } catch (const ValidationError& e) {
    throw ConfigError(origin + ": " + e.what());
  }

  sc.x0 = root.has("initial_state") ? root.at("initial_state").vec(sc.dim) : Vec::Zero(sc.dim);
  sc.t0 = root.num("t0", 0.0);
  sc.T = root.has("horizon") ? root.at("horizon").number() : sc.t0 + 1.0;
  if (!(sc.T > sc.t0)) root.at("horizon").fail("horizon must exceed t0");

  try {
    if (root.has("signals")) {
      Node s = root.at("signals");
      s.only({"w", "zeta", "d"});
      if (s.has("w")) sc.w = detail::parse_bv(s.at("w"), sc.dim, sc.t0, sc.T);
      if (s.has("zeta")) sc.zeta = detail::parse_bv(s.at("zeta"), sc.dim, sc.t0, sc.T);
      if (s.has("d")) sc.d = detail::parse_disturbance(s.at("d"), sc.dim);
    }
  } catch (const ValidationError& e) {
    throw ConfigError(origin + ".signals: " + e.what());
  }
  if (root.has("plan")) detail::parse_plan(root.at("plan"), sc);
  if (root.has("integrator")) detail::parse_integrator(root.at("integrator"), sc.integrator);
  if (root.has("validate")) detail::parse_validate(root.at("validate"), sc.validate, sc.dim);
  if (root.has("study")) detail::parse_studies(root.at("study"), sc);
  return sc;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path), path); }

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline json header(const char* kind, const std::string& scenario) {
  return {{"schema", kReportSchema}, {"report", kind}, {"scenario", scenario}};
}

inline json nan_or(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::vector<Vec> vecs(const Node& n) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(n.at(i).vec());
  return out;
}

inline json vecs_to_json(const std::vector<Vec>& vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back(vec_to_json(v));
  return a;
}

template <class T>
std::vector<T> ints(const Node& n) {
  std::vector<T> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(static_cast<T>(n.at(i).integer()));
  return out;
}

}  // namespace detail

inline json to_json(const ValidationReport& r) {
  json patches = json::array();
  for (const auto& p : r.patches)
    patches.push_back({{"index", p.index},
                       {"margin", p.margin()},
                       {"worst_point", vec_to_json(p.worst_point)},
                       {"samples", p.samples},
                       {"pass", p.pass}});
  return {{"chi", r.chi},
          {"collar_width", r.collar_width},
          {"patches", patches},
          {"failing_patches", r.failing_patches()},
          {"cover_samples", r.cover_samples},
          {"cover_gaps", detail::vecs_to_json(r.cover_gaps)},
          {"pass", r.pass}};
}

inline ValidationReport validation_from_json(const detail::Node& n) {
  n.only({"chi", "collar_width", "patches", "failing_patches", "cover_samples", "cover_gaps", "pass"});
  ValidationReport r;
  r.chi = n.at("chi").number();
  r.collar_width = n.at("collar_width").number();
  detail::Node ps = n.at("patches");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    detail::Node p = ps.at(i);
    p.only({"index", "margin", "worst_point", "samples", "pass"});
    PatchMargin m;
    m.index = static_cast<int>(p.at("index").integer());
    m.worst_inner = -p.at("margin").number();
    m.worst_point = p.at("worst_point").vec();
    m.samples = p.at("samples").count();
    m.pass = p.at("pass").boolean();
    r.patches.push_back(std::move(m));
  }
  if (detail::ints<int>(n.at("failing_patches")) != r.failing_patches())
    n.at("failing_patches").fail("does not match the per-patch verdicts");
  r.cover_samples = n.at("cover_samples").count();
  r.cover_gaps = detail::vecs(n.at("cover_gaps"));
  r.pass = n.at("pass").boolean();
  return r;
}

inline json to_json(const RobustnessConstants& k) {
  return {{"indices", k.indices},
          {"rho_bar", k.rho_bar},
          {"c_prime", k.c_prime},
          {"c_double_prime", k.c_double_prime},
          {"c_triple_prime", k.c_triple_prime},
          {"C_i", k.C_i},
          {"ell_i", k.ell_i},
          {"delta", k.delta},
          {"C", k.C_big},
          {"M", k.M},
          {"c_bar", k.c_bar},
          {"k_bar", k.k_bar},
          {"delta_bar", k.delta_bar},
          {"rho1", k.rho1},
          {"rho2", k.rho2},
          {"T_alpha", k.T_alpha},
          {"chi_double_prime", k.chi_double_prime},
          {"samples_per_patch", k.samples_per_patch}};
}

inline RobustnessConstants constants_from_json(const detail::Node& n) {
  n.only({"indices", "rho_bar", "c_prime", "c_double_prime", "c_triple_prime", "C_i", "ell_i", "delta", "C", "M",
          "c_bar", "k_bar", "delta_bar", "rho1", "rho2", "T_alpha", "chi_double_prime", "samples_per_patch"});
  RobustnessConstants k;
  k.indices = detail::ints<int>(n.at("indices"));
  k.rho_bar = n.at("rho_bar").number();
  k.c_prime = n.at("c_prime").number();
  k.c_double_prime = n.at("c_double_prime").number();
  k.c_triple_prime = n.at("c_triple_prime").number();
  k.C_i = n.at("C_i").numbers();
  k.ell_i = n.at("ell_i").numbers();
  k.delta = n.at("delta").number();
  k.C_big = n.at("C").number();
  k.M = n.at("M").number();
  k.c_bar = n.at("c_bar").number();
  k.k_bar = n.at("k_bar").number();
  k.delta_bar = n.at("delta_bar").number();
  k.rho1 = n.at("rho1").number();
  k.rho2 = n.at("rho2").number();
  k.T_alpha = n.at("T_alpha").numbers();
  k.chi_double_prime = n.at("chi_double_prime").number();
  k.samples_per_patch = n.at("samples_per_patch").count();
  if (k.C_i.size() != k.indices.size() || k.ell_i.size() != k.indices.size() || k.T_alpha.size() != k.indices.size())
    n.fail("per-patch arrays must match 'indices' in length");
  return k;
}

inline json to_json(const MonotonePartition& p) {
  return {{"taus", p.taus}, {"indices", p.indices}, {"levels", p.levels}, {"excess_measure", p.excess_measure}};
}

inline MonotonePartition partition_from_json(const detail::Node& n) {
  n.only({"taus", "indices", "levels", "excess_measure"});
  MonotonePartition p;
  p.taus = n.at("taus").numbers();
  p.indices = detail::ints<int>(n.at("indices"));
  p.levels = detail::ints<int>(n.at("levels"));
  p.excess_measure = n.at("excess_measure").non_negative();
  if (p.indices.size() + 1 != p.taus.size() && !(p.taus.empty() && p.indices.empty()))
    n.fail("expected one index per partition interval");
  return p;
}

inline json to_json(const RobustnessReport& r) {
  json cells = json::array();
  for (const auto& c : r.outcomes)
    cells.push_back({{"x0", vec_to_json(c.x0)},
                     {"reached", c.reached},
                     {"t_hit", detail::nan_or(c.t_hit)},
                     {"stayed_in_domain", c.stayed_in_domain},
                     {"index_monotone", c.index_monotone},
                     {"note", c.note}});
  json failing = json::array();
  for (auto i : r.failing_cells()) failing.push_back(i);
  return {{"kind", r.kind},   {"r", r.r},         {"s", r.s},
          {"chi", r.chi},     {"delta", r.delta}, {"k_bar", r.k_bar},
          {"check_monotone", r.check_monotone},   {"cells", cells},
          {"failing_cells", failing},             {"pass", r.pass}};
}

inline RobustnessReport robustness_from_json(const detail::Node& n) {
  n.only({"kind", "r", "s", "chi", "delta", "k_bar", "check_monotone", "cells", "failing_cells", "pass"});
  RobustnessReport r;
  r.kind = n.at("kind").str();
  r.r = n.at("r").number();
  r.s = n.at("s").number();
  r.chi = n.at("chi").number();
  r.delta = n.at("delta").number();
  r.k_bar = n.at("k_bar").number();
  r.check_monotone = n.at("check_monotone").boolean();
  detail::Node cs = n.at("cells");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    detail::Node c = cs.at(i);
    c.only({"x0", "reached", "t_hit", "stayed_in_domain", "index_monotone", "note"});
    CellOutcome o;
    o.x0 = c.at("x0").vec();
    o.reached = c.at("reached").boolean();
    o.t_hit = c.at("t_hit").number_or_nan();
    o.stayed_in_domain = c.at("stayed_in_domain").boolean();
    o.index_monotone = c.at("index_monotone").boolean();
    o.note = c.at("note").str();
    r.outcomes.push_back(std::move(o));
  }
  if (detail::ints<std::size_t>(n.at("failing_cells")) != r.failing_cells())
    n.at("failing_cells").fail("does not match the per-cell outcomes");
  r.pass = n.at("pass").boolean();
  return r;
}

inline json to_json(const InvarianceReport& r) {
  return {{"patch", r.patch},
          {"rho", r.rho},
          {"chi", r.chi},
          {"p2_runs", r.p2_runs},
          {"p2_violations", r.p2_violations},
          {"p2_first_violation", detail::nan_or(r.p2_first_violation)},
          {"p3_runs", r.p3_runs},
          {"p3_missed", r.p3_missed},
          {"c_transit", r.c_transit},
          {"c_transit_reseeded", r.c_transit_reseeded},
          {"p3_stable", r.p3_stable},
          {"pass", r.pass}};
}

inline InvarianceReport invariance_from_json(const detail::Node& n) {
  n.only({"patch", "rho", "chi", "p2_runs", "p2_violations", "p2_first_violation", "p3_runs", "p3_missed", "c_transit",
          "c_transit_reseeded", "p3_stable", "pass"});
  InvarianceReport r;
  r.patch = static_cast<int>(n.at("patch").integer());
  r.rho = n.at("rho").number();
  r.chi = n.at("chi").number();
  r.p2_runs = n.at("p2_runs").count();
  r.p2_violations = n.at("p2_violations").count();
  r.p2_first_violation = n.at("p2_first_violation").number_or_nan();
  r.p3_runs = n.at("p3_runs").count();
  r.p3_missed = n.at("p3_missed").count();
  r.c_transit = n.at("c_transit").number();
  r.c_transit_reseeded = n.at("c_transit_reseeded").number();
  r.p3_stable = n.at("p3_stable").boolean();
  r.pass = n.at("pass").boolean();
  return r;
}

inline json to_json(const std::vector<ConvergenceRow>& rows) {
  json a = json::array();
  for (const auto& r : rows) a.push_back({{"tv", r.tv}, {"distance", r.distance}});
  return a;
}

inline std::vector<ConvergenceRow> convergence_from_json(const detail::Node& n) {
  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i < n.size(); ++i) {
    detail::Node r = n.at(i);
    r.only({"tv", "distance"});
    rows.push_back({r.at("tv").non_negative(), r.at("distance").non_negative()});
  }
  return rows;
}

/// Outcome of the monotone-envelope budget check on one impulsive run.
struct Prop22Report {
  std::string status;  // pass, fail or inconclusive
  double tv = 0.0;
  double bound = 0.0;  // C * TV{w}
  MonotonePartition partition;
  RobustnessConstants constants;
  bool modification_monotone = false;
  double modification_distance = 0.0;
  double modification_bound = 0.0;  // M * excess + TV{w} + 10 dt
};

inline json to_json(const Prop22Report& r) {
  return {{"status", r.status},
          {"tv", r.tv},
          {"bound", r.bound},
          {"partition", to_json(r.partition)},
          {"constants", to_json(r.constants)},
          {"modification", {{"monotone", r.modification_monotone},
                            {"sup_distance", r.modification_distance},
                            {"bound", r.modification_bound}}}};
}

inline Prop22Report prop22_from_json(const detail::Node& n) {
  n.only({"status", "tv", "bound", "partition", "constants", "modification"});
  Prop22Report r;
  r.status = n.at("status").str();
  if (r.status != "pass" && r.status != "fail" && r.status != "inconclusive")
    n.at("status").fail("expected pass, fail or inconclusive");
  r.tv = n.at("tv").non_negative();
  r.bound = n.at("bound").non_negative();
  r.partition = partition_from_json(n.at("partition"));
  r.constants = constants_from_json(n.at("constants"));
  detail::Node m = n.at("modification");
  m.only({"monotone", "sup_distance", "bound"});
  r.modification_monotone = m.at("monotone").boolean();
  r.modification_distance = m.at("sup_distance").non_negative();
  r.modification_bound = m.at("bound").non_negative();
  return r;
}

/// Wraps a report body with the schema header.
inline json make_report(const char* kind, const std::string& scenario, json body) {
  json out = detail::header(kind, scenario);
  out["body"] = std::move(body);
  return out;
}

/// Re-parses an emitted report under its schema; returns the body re-encoded
/// so callers can compare it with the original.
inline json reparse_report(const json& doc) {
  detail::Node root(doc, "report");
  root.only({"schema", "report", "scenario", "body", "constants", "pass"});
  if (root.at("schema").integer() != kReportSchema) root.at("schema").fail("unsupported report schema");
  root.at("scenario").str();
  std::string kind = root.at("report").str();
  detail::Node body = root.at("body");
  if (root.has("constants")) constants_from_json(root.at("constants"));
  if (root.has("pass")) root.at("pass").boolean();
  if (kind == "validation") return to_json(validation_from_json(body));
  if (kind == "constants") return to_json(constants_from_json(body));
  if (kind == "prop22") return to_json(prop22_from_json(body));
  if (kind == "robustness" || kind == "sampling") return to_json(robustness_from_json(body));
  if (kind == "invariance") return to_json(invariance_from_json(body));
  if (kind == "convergence") return to_json(convergence_from_json(body));
  if (kind == "trajectory") {
    body.only({"rows", "events", "measured"});
    body.at("rows").size();
    body.at("events").size();
    return body.raw();
  }
  root.at("report").fail("unknown report kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// CSV tables

inline void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
  os << "tv,distance\n";
  for (const auto& r : rows) os << format_double(r.tv) << ',' << format_double(r.distance) << '\n';
}

inline void write_robustness_csv(std::ostream& os, const RobustnessReport& rep, Eigen::Index dim) {
  for (Eigen::Index i = 1; i <= dim; ++i) os << "x0_" << i << ',';
  os << "reached,t_hit,monotone\n";
  for (const auto& c : rep.outcomes) {
    for (Eigen::Index i = 0; i < dim; ++i) os << format_double(c.x0[i]) << ',';
    os << (c.reached ? 1 : 0) << ',' << (std::isfinite(c.t_hit) ? format_double(c.t_hit) : std::string("nan")) << ','
       << (c.index_monotone ? 1 : 0) << '\n';
  }
}

}  // namespace patchy

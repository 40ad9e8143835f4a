// patchy: validate scenario files, run the solvers and execute studies.
//
// Exit codes: 0 pass, 1 predicate failure, 2 configuration error,
// 3 trajectory left the patch domains.

#include "patchy/studies.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <unistd.h>

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDomain = 3;

/// Writes `text` to `path` through a temporary file and rename; "" or "-"
/// means standard output.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw patchy::ConfigError(path + ": cannot open for writing");
    out << text;
    out.close();
    if (!out) throw patchy::ConfigError(path + ": write failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw patchy::ConfigError(path + ": rename failed: " + ec.message());
  }
}

std::string trajectory_csv(const patchy::Trajectory& tr) {
  std::ostringstream os;
  patchy::write_csv(os, tr);
  return os.str();
}

struct Common {
  std::string scenario;
  std::string out;
  std::string report;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("scenario", c.scenario, "Scenario file (JSON)")->required();
  cmd->add_option("--out,-o", c.out, "Primary output file (default: standard output)");
  cmd->add_option("--seed", c.seed, "Override the integrator seed");
  cmd->add_option("--dt", c.dt, "Override the integrator step");
}

patchy::IntegratorConfig config_for(const patchy::Scenario& sc, const Common& c) {
  patchy::IntegratorConfig cfg = sc.integrator;
  if (c.seed) cfg.rng_seed = *c.seed;
  if (c.dt) {
    cfg.dt = *c.dt;
    cfg.event_tol = std::min(cfg.event_tol, 0.5 * cfg.dt);
  }
  cfg.check();
  return cfg;
}

int cmd_validate(const Common& c) {
  auto sc = patchy::load_scenario(c.scenario);
  auto rep = patchy::validate(sc.closed_field(), sc.validate.samples, sc.validate.chi, sc.validate.options);
  emit(c.out, patchy::make_report("validation", sc.name, patchy::to_json(rep)).dump(2) + "\n");
  for (int idx : rep.failing_patches())
    std::cerr << "validate: patch " << idx << " fails the inward condition (margin "
              << patchy::format_double(rep.patches[sc.closed_field().position_of(idx)].margin()) << ")\n";
  if (!rep.cover_gaps.empty()) std::cerr << "validate: " << rep.cover_gaps.size() << " uncovered sample points\n";
  return rep.pass ? kExitPass : kExitFail;
}

int cmd_run(const Common& c, const std::string& mode_name, const std::string& json_out) {
  auto sc = patchy::load_scenario(c.scenario);
  auto mode = patchy::parse_run_mode(mode_name);
  auto cfg = config_for(sc, c);
  try {
    auto tr = patchy::run_scenario(sc, mode, cfg);
    emit(c.out, trajectory_csv(tr));
    if (!json_out.empty()) emit(json_out, patchy::make_report("trajectory", sc.name, patchy::to_json(tr)).dump(2) + "\n");
    return kExitPass;
  } catch (const patchy::OutsideDomain& e) {
    if (e.partial()) {
      emit(c.out, trajectory_csv(*e.partial()));
      if (!json_out.empty())
        emit(json_out, patchy::make_report("trajectory", sc.name, patchy::to_json(*e.partial())).dump(2) + "\n");
    }
    std::cerr << "run: " << e.what() << "\n";
    return kExitDomain;
  }
}

int cmd_study(const Common& c, const std::string& study_name) {
  auto sc = patchy::load_scenario(c.scenario);
  auto kind = patchy::parse_study_kind(study_name);
  auto cfg = config_for(sc, c);
  auto res = patchy::run_study(sc, kind, cfg);
  std::string report = res.report.dump(2) + "\n";
  if (res.csv) {
    emit(c.out, *res.csv);
    if (!c.report.empty()) emit(c.report, report);
  } else {
    emit(c.out.empty() ? c.report : c.out, report);
    if (!c.out.empty() && !c.report.empty()) emit(c.report, report);
  }
  std::cerr << "study " << study_name << ": " << res.status << "\n";
  if (res.report.contains("body") && res.report["body"].contains("failing_cells")) {
    const auto& f = res.report["body"]["failing_cells"];
    if (!f.empty()) std::cerr << "failing cells: " << f.dump() << "\n";
  }
  return res.pass ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patchy vector fields: validation, solvers and studies"};
  app.require_subcommand(1);

  Common vc, rc, sc;
  std::string mode, json_out, study;

  auto* validate = app.add_subcommand("validate", "Check the inward-pointing condition on every patch boundary");
  add_common(validate, vc);

  auto* run = app.add_subcommand("run", "Integrate the scenario and write the trajectory CSV");
  add_common(run, rc);
  run->add_option("--mode", mode, "carath | impulsive | feedback | sampling")
      ->required()
      ->check(CLI::IsMember({"carath", "impulsive", "feedback", "sampling"}));
  run->add_option("--json", json_out, "Also write the trajectory as JSON");

  auto* st = app.add_subcommand("study", "Run a study and write its table and report");
  add_common(st, sc);
  st->add_option("--study", study, "convergence | prop22 | robust | sampling | invariance")
      ->required()
      ->check(CLI::IsMember({"convergence", "prop22", "robust", "sampling", "invariance"}));
  st->add_option("--report", sc.report, "JSON report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitPass : kExitConfig;
  }

  try {
    if (*validate) return cmd_validate(vc);
    if (*run) return cmd_run(rc, mode, json_out);
    return cmd_study(sc, study);
  } catch (const patchy::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const patchy::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const patchy::OutsideDomain& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const patchy::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
}

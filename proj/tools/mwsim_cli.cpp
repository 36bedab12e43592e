// mwsim: command-line front end for the MaxWeight switch simulator.
//
//   mwsim validate --config F
//   mwsim simulate --config F --epsilon E [--replication R] [--horizon H]
//   mwsim ystar    --config F [--horizon H]
//   mwsim sweep    --config F [--threads N] [--resume DIR]
//   mwsim compare  --config F --epsilon E
//
// Common flags: --seed U64, --out DIR, --thin K, --keep-trajectories.
// Exit codes: 0 success, 2 validation failure, 3 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mwsim/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct ValidationFailure {
  std::string message;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::uint64_t> thin;
  bool keep_trajectories = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "config JSON")->required();
  app->add_option("--seed", c.seed, "base seed (overrides config)");
  app->add_option("--out", c.out, "output root directory");
  app->add_option("--thin", c.thin, "sampling stride for stationary samples and trajectories")->check(CLI::PositiveNumber);
  app->add_flag("--keep-trajectories", c.keep_trajectories, "write thinned trajectories");
}

/// Loads and validates; failures surface as exit code 2.
std::pair<mwsim::SweepConfig, mwsim::ValidationReport> load(const Common& c) {
  mwsim::SweepConfig cfg;
  try {
    cfg = mwsim::load_config(c.config);
  } catch (const std::exception& e) {
    throw ValidationFailure{e.what()};
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.thin) cfg.estimators.thin = *c.thin;
  if (c.out) cfg.output_dir = *c.out;
  auto report = mwsim::validate_config(cfg);
  if (!report.ok()) throw ValidationFailure{report.message()};
  return {std::move(cfg), std::move(report)};
}

fs::path run_dir(const mwsim::SweepConfig& cfg, const std::string& kind) {
  fs::path d = fs::path(cfg.output_dir) / cfg.fixture / (mwsim::detail::timestamp() + "-" + kind);
  fs::create_directories(d);
  return d;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2) << '\n'; }

std::size_t epsilon_index(const mwsim::SweepConfig& cfg, double eps) {
  for (std::size_t e = 0; e < cfg.epsilons.size(); ++e)
    if (cfg.epsilons[e] == eps) return e;
  throw ValidationFailure{"epsilon " + mwsim::fmt_double(eps) + " is not in the schedule"};
}

json limit_json(const mwsim::LimitResult& l) {
  json gaps = json::object();
  for (std::size_t w = 0; w < l.windows.size(); ++w) gaps["T" + std::to_string(l.windows[w])] = l.gaps[w];
  return {{"seed", l.seed},
          {"horizon", l.horizon},
          {"burn_in", l.burn_in},
          {"thin", l.thin},
          {"n_samples", l.y.n_samples},
          {"mean_norm_y", l.y.mean_norm.mean},
          {"mean_norm_y_se", l.y.mean_norm.se},
          {"smoothness_gap", gaps},
          {"mean_increment", l.mean_increment.mean},
          {"mean_increment_se", l.mean_increment.se},
          {"mean_chosen", l.mean_chosen},
          {"return_time", l.return_time.mean},
          {"return_time_se", l.return_time.se},
          {"returns", l.returns},
          {"window_ratio", l.window_ratio},
          {"ties", l.tie_slots},
          {"runtime_s", l.runtime_seconds}};
}

json row_json(const mwsim::SweepRow& row) {
  json j = {{"fixture", row.fixture}};
  for (const auto& [k, v] : row.fields) j[k] = std::isfinite(v) ? json(v) : json(nullptr);
  return j;
}

int cmd_validate(const Common& c) {
  auto [cfg, report] = load(c);
  json out = {{"geometry", mwsim::geometry_json(*report.geometry)}, {"loads", report.loads}};
  if (c.out) write_json(run_dir(cfg, "validate") / "geometry.json", out["geometry"]);
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_simulate(const Common& c, double eps, std::size_t rep, std::optional<std::uint64_t> horizon) {
  auto [cfg, report] = load(c);
  const auto& geom = *report.geometry;
  const std::size_t e = epsilon_index(cfg, eps);
  std::optional<fs::path> dir;
  if (c.out || c.keep_trajectories) dir = run_dir(cfg, "simulate");
  std::ofstream traj;
  mwsim::RunOptions ro;
  ro.horizon = horizon;
  if (c.keep_trajectories) {
    traj.open(*dir / "trajectory.csv");
    ro.trajectory = &traj;
    ro.trajectory_thin = cfg.estimators.thin;
  }
  const mwsim::PointResult p = mwsim::run_point(cfg, geom, e, rep, ro);
  const json j = row_json(mwsim::make_row(cfg, p));
  if (dir) {
    write_json(*dir / "geometry.json", mwsim::geometry_json(geom));
    write_json(*dir / "point.json", j);
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_ystar(const Common& c, std::optional<std::uint64_t> horizon) {
  auto [cfg, report] = load(c);
  const auto& geom = *report.geometry;
  std::optional<fs::path> dir;
  if (c.out || c.keep_trajectories) dir = run_dir(cfg, "ystar");
  std::ofstream traj;
  mwsim::RunOptions ro;
  ro.horizon = horizon;
  if (c.keep_trajectories) {
    traj.open(*dir / "trajectory.csv");
    ro.trajectory = &traj;
    ro.trajectory_thin = cfg.estimators.thin;
  }
  const json j = limit_json(mwsim::run_limit(cfg, geom, ro));
  if (dir) {
    write_json(*dir / "geometry.json", mwsim::geometry_json(geom));
    write_json(*dir / "ystar.json", j);
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_sweep(const Common& c, std::size_t threads, std::optional<std::string> resume) {
  auto [cfg, report] = load(c);
  mwsim::SweepOptions so;
  so.threads = threads;
  so.out_root = fs::path(cfg.output_dir);
  if (resume) so.resume_dir = fs::path(*resume);
  so.keep_trajectories = c.keep_trajectories;
  so.trajectory_thin = cfg.estimators.thin;
  const mwsim::SweepReport r = mwsim::run_sweep(cfg, so);
  std::cerr << "slots simulated " << r.simulated_slots << ", expected " << r.expected_slots << '\n';
  std::cout << r.directory->string() << '\n';
  for (const auto& e : r.errors)
    std::cerr << "row eps_index=" << e.epsilon_index << " rep=" << e.replication << " failed: " << e.message << '\n';
  if (!r.errors.empty()) return kExitRuntime;
  if (r.simulated_slots != r.expected_slots) {
    std::cerr << "slot accounting mismatch\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_compare(const Common& c, double eps) {
  auto [cfg, report] = load(c);
  epsilon_index(cfg, eps);
  const json j = mwsim::comparison_json(mwsim::compare_to_limit(cfg, eps));
  if (c.out) write_json(run_dir(cfg, "compare") / "comparison.json", j);
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MaxWeight generalized-switch simulator"};
  app.require_subcommand(1);

  Common c_validate, c_simulate, c_ystar, c_sweep, c_compare;
  double sim_eps = 0.0, cmp_eps = 0.0;
  std::size_t sim_rep = 0;
  std::size_t threads = 1;
  std::optional<std::uint64_t> sim_horizon, ystar_horizon;
  std::optional<std::string> resume;

  auto* validate = app.add_subcommand("validate", "check a config and print the geometry");
  add_common(validate, c_validate);

  auto* simulate = app.add_subcommand("simulate", "simulate one load point");
  add_common(simulate, c_simulate);
  simulate->add_option("--epsilon", sim_eps, "epsilon from the schedule")->required();
  simulate->add_option("--replication", sim_rep, "replication index");
  simulate->add_option("--horizon", sim_horizon, "override the horizon");

  auto* ystar = app.add_subcommand("ystar", "simulate the limit chain");
  add_common(ystar, c_ystar);
  ystar->add_option("--horizon", ystar_horizon, "override the horizon");

  auto* sweep = app.add_subcommand("sweep", "run every epsilon and replication");
  add_common(sweep, c_sweep);
  sweep->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--resume", resume, "existing run directory to resume");

  auto* compare = app.add_subcommand("compare", "compare Y at epsilon with the limit chain");
  add_common(compare, c_compare);
  compare->add_option("--epsilon", cmp_eps, "epsilon from the schedule")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*validate) return cmd_validate(c_validate);
    if (*simulate) return cmd_simulate(c_simulate, sim_eps, sim_rep, sim_horizon);
    if (*ystar) return cmd_ystar(c_ystar, ystar_horizon);
    if (*sweep) return cmd_sweep(c_sweep, threads, resume);
    if (*compare) return cmd_compare(c_compare, cmp_eps);
  } catch (const ValidationFailure& v) {
    std::cerr << "validation failed:\n" << v.message << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

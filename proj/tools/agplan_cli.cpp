// agplan command line: scenario generation, single plans, benchmark suites.
#include "agplan/io.hpp"
#include "agplan/planner.hpp"
#include "agplan/simbench.hpp"
#include "agplan/voxel_map.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace agplan;

namespace {

struct Overrides {
  std::string config;
  std::optional<double> lambda_smooth, lambda_collision, lambda_feasibility, lambda_curvature;
  std::optional<double> safe_clearance, c_max;
  std::optional<double> v_max, a_max, j_max;
  std::optional<double> w_energy, e_drive, e_fly;
  std::optional<double> replan_period, tick, resolution, inflation;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON overrides file");
    app->add_option("--lambda-smooth", lambda_smooth);
    app->add_option("--lambda-collision", lambda_collision);
    app->add_option("--lambda-feasibility", lambda_feasibility);
    app->add_option("--lambda-curvature", lambda_curvature);
    app->add_option("--safe-clearance", safe_clearance);
    app->add_option("--c-max", c_max, "curvature threshold (1/m)");
    app->add_option("--v-max", v_max, "velocity limit for search and optimisation");
    app->add_option("--a-max", a_max, "acceleration limit for search and optimisation");
    app->add_option("--j-max", j_max);
    app->add_option("--w-energy", w_energy, "energy weight in the search");
    app->add_option("--e-drive", e_drive, "driving power (J/s)");
    app->add_option("--e-fly", e_fly, "flying power (J/s)");
    app->add_option("--replan-period", replan_period);
    app->add_option("--tick", tick);
    app->add_option("--resolution", resolution);
    app->add_option("--inflation", inflation);
  }

  SimConfig build() const {
    SimConfig cfg = config.empty() ? SimConfig{} : load_config(config);
    auto& w = cfg.planner.weights;
    auto& s = cfg.planner.search;
    if (lambda_smooth) w.lambda_smooth = *lambda_smooth;
    if (lambda_collision) w.lambda_collision = *lambda_collision;
    if (lambda_feasibility) w.lambda_feasibility = *lambda_feasibility;
    if (lambda_curvature) w.lambda_curvature = *lambda_curvature;
    if (safe_clearance) w.safe_clearance = *safe_clearance;
    if (c_max) w.c_max = *c_max;
    if (v_max) w.limits.v_max = s.v_max = *v_max;
    if (a_max) w.limits.a_max = s.a_max = *a_max;
    if (j_max) w.limits.j_max = *j_max;
    if (w_energy) s.w_energy = *w_energy;
    if (e_drive) cfg.energy.e_drive = s.e_drive = *e_drive;
    if (e_fly) cfg.energy.e_fly = s.e_fly = *e_fly;
    if (replan_period) cfg.replan_period = *replan_period;
    if (tick) cfg.tick = *tick;
    if (resolution) cfg.resolution = *resolution;
    if (inflation) cfg.inflation_radius = *inflation;
    cfg.validate();
    return cfg;
  }
};

ScenarioParams preset_params(const std::string& preset) {
  if (preset == "square-room") return ScenarioParams::square_room();
  if (preset == "corridor") return ScenarioParams::corridor();
  throw Error(ErrorCode::InvalidArgument, "unknown preset '" + preset + "'");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
}

// Trials csv without timing columns, so identical seeds give identical bytes.
void write_suite(const SuiteResult& res, const std::filesystem::path& dir, bool trace) {
  ensure_dir(dir);
  export_reports(res.reports, ReportFormat::Csv, (dir / "trials.csv").string(), ExportOptions{false});
  export_reports(res.reports, ReportFormat::StructuredText, (dir / "summary.txt").string(), ExportOptions{true});
  std::string timing = "scenario_id,arm,plan_time_mean,plan_time_median\n";
  for (const auto& r : res.reports)
    timing += r.scenario_id + "," + r.arm + "," + format_double(r.plan_time_mean) + "," +
              format_double(r.plan_time_median) + "\n";
  write_text(dir / "timing.csv", timing);
  if (trace) write_text(dir / "trace.csv", render_trace(res.reports));
}

void print_summary(const SuiteSummary& s) {
  for (const auto& a : s.arms)
    std::printf("%-14s accuracy %.2f  success %d/%d (%.3f)  moving %.2f s  energy %.1f J  plan median %.2f ms\n",
                a.name.c_str(), a.accuracy, a.successes, a.trials, a.success_rate, a.mean_moving_time,
                a.mean_energy, 1e3 * a.median_planning_time);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aerial-ground trajectory planner tools"};
  app.require_subcommand(1);

  std::string preset = "square-room";
  std::uint64_t seed = 1;
  std::string out;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a scenario file");
  gen->add_option("--preset", preset)->check(CLI::IsMember({"square-room", "corridor"}));
  gen->add_option("--seed", seed);
  gen->add_option("-o,--out", out, "scenario JSON path")->required();
  std::string grid_dump;
  double gen_res = 0.1;
  gen->add_option("--grid-dump", grid_dump, "write occupied voxels as 'x y z layer'");
  gen->add_option("--resolution", gen_res);

  // plan
  auto* planc = app.add_subcommand("plan", "Plan once and export the trajectory");
  std::string scenario_file;
  double accuracy = 1.0;
  bool full_map = false;
  double rate = 20.0;
  std::string ctrl_out;
  Overrides plan_ov;
  planc->add_option("--preset", preset)->check(CLI::IsMember({"square-room", "corridor"}));
  planc->add_option("--scenario", scenario_file, "scenario JSON (overrides preset)");
  planc->add_option("--seed", seed);
  planc->add_option("--accuracy", accuracy, "completion accuracy after one sensing sweep")->check(CLI::Range(0.0, 1.0));
  planc->add_flag("--full-map", full_map, "plan against the complete ground truth");
  planc->add_option("-o,--out", out, "trajectory samples 't x y z mode'");
  planc->add_option("--rate", rate, "sample rate (Hz)");
  planc->add_option("--control-points", ctrl_out, "control point dump");
  plan_ov.add(planc);

  // bench
  auto* bench = app.add_subcommand("bench", "Paired planner-only / completion suite");
  int trials = 50;
  std::string out_dir = "bench_out";
  bool trace = false;
  Overrides bench_ov;
  bench->add_option("--preset", preset)->check(CLI::IsMember({"square-room", "corridor"}));
  bench->add_option("--seed", seed, "master seed");
  bench->add_option("--trials", trials)->check(CLI::PositiveNumber);
  bench->add_option("--accuracy", accuracy, "completion arm accuracy")->check(CLI::Range(0.0, 1.0));
  bench->add_option("--out-dir", out_dir);
  bench->add_flag("--trace", trace, "also write per-replan trace.csv");
  bench_ov.add(bench);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Suite over a matrix of completion accuracies");
  std::vector<double> accuracies{0.0, 0.25, 0.5, 0.75, 1.0};
  Overrides ablate_ov;
  ablate->add_option("--preset", preset)->check(CLI::IsMember({"square-room", "corridor"}));
  ablate->add_option("--seed", seed, "master seed");
  ablate->add_option("--trials", trials)->check(CLI::PositiveNumber);
  ablate->add_option("--accuracies", accuracies)->check(CLI::Range(0.0, 1.0));
  ablate->add_option("--out-dir", out_dir);
  ablate->add_flag("--trace", trace);
  ablate_ov.add(ablate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const Scenario sc = generate_scenario(preset_params(preset), seed);
      write_scenario(sc, out);
      if (!grid_dump.empty()) {
        const VoxelGrid g = rasterize(sc, gen_res);
        std::ofstream f(grid_dump);
        if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + grid_dump);
        dump_grid(g, f);
      }
      std::printf("wrote %s (%zu walls, %zu rings)\n", out.c_str(), sc.walls.size(), sc.rings.size());
      return 0;
    }

    if (*planc) {
      const SimConfig cfg = plan_ov.build();
      const Scenario sc = scenario_file.empty() ? generate_scenario(preset_params(preset), seed)
                                                : read_scenario(scenario_file);
      VoxelGrid grid = rasterize(sc, cfg.resolution, cfg.inflation_radius);
      if (full_map) {
        for (std::size_t i = 0; i < grid.voxel_count(); ++i)
          if (grid.raw_occupied(i, Layer::GroundTruth)) grid.mark_completed(i);
      } else {
        SensorModel sensor = cfg.sensor;
        sensor.position = sc.start;
        const Vec3 d = sc.goal - sc.start;
        sensor.yaw = std::atan2(d.y(), d.x());
        sense(grid, sensor);
        oracle_complete(grid, accuracy, mix64(seed, 0xC0113C7));
      }
      PlanRequest req = cfg.planner;
      req.start = RobotState{sc.start, Vec3::Zero(), Mode::Ground};
      req.goal = sc.goal;
      req.grid = &grid;
      req.seed = seed;
      const PlanResult res = plan(req);
      std::printf("status %s  duration %.3f s  planning %.2f ms  rounds %d  fallback %d  events %zu\n",
                  std::string(to_string(res.status)).c_str(),
                  res.trajectory.size() ? res.trajectory.duration() : 0.0, 1e3 * res.planning_time,
                  res.optimize_rounds, static_cast<int>(res.used_fallback), res.events.size());
      for (const auto& e : res.events)
        std::printf("  %s at t=%.3f\n", std::string(to_string(e.kind)).c_str(), e.time);
      if (!out.empty() && res.trajectory.size()) {
        std::ofstream f(out);
        if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + out);
        export_trajectory(res.trajectory, rate, req.search.ground_threshold, f);
      }
      if (!ctrl_out.empty() && res.trajectory.size()) {
        std::ofstream f(ctrl_out);
        if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + ctrl_out);
        dump_control_points(res.trajectory, f);
      }
      return res.status == PlanStatus::Success ? 0 : 3;
    }

    if (*bench) {
      SimConfig cfg = bench_ov.build();
      cfg.record_trace = trace;
      const SuiteResult res = run_suite(preset_params(preset), trials,
                                        {AblationArm::planner_only(), AblationArm::completion(accuracy)}, seed, cfg,
                                        preset);
      write_suite(res, out_dir, trace);
      print_summary(res.summary);
      return 0;
    }

    if (*ablate) {
      SimConfig cfg = ablate_ov.build();
      cfg.record_trace = trace;
      std::vector<AblationArm> arms;
      for (double a : accuracies) {
        AblationArm arm = a == 0.0 ? AblationArm::planner_only() : AblationArm::completion(a);
        if (a != 0.0) arm.name = "completion_" + format_double(a);
        arms.push_back(arm);
      }
      const SuiteResult res = run_suite(preset_params(preset), trials, arms, seed, cfg, preset);
      write_suite(res, out_dir, trace);
      print_summary(res.summary);
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::IoFailure ? 4 : 2;
  }
  return 0;
}

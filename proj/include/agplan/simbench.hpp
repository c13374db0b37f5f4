#pragma once

#include "agplan/common.hpp"
#include "agplan/planner.hpp"
#include "agplan/voxel_map.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace agplan {

/// Power draw of the two locomotion modes (J/s).
struct EnergyModel {
  double e_drive = 251.45;
  double e_fly = 988.33;

  void validate() const {
    if (!(e_drive > 0.0 && e_fly > 0.0)) throw Error(ErrorCode::InvalidArgument, "energy rates must be positive");
    if (!(e_fly > e_drive)) throw Error(ErrorCode::InvalidArgument, "flying must cost more than driving");
  }
};

inline double compute_energy(double flying_time, double driving_time, const EnergyModel& model = {}) {
  if (flying_time < 0.0 || driving_time < 0.0) throw Error(ErrorCode::InvalidArgument, "times must be >= 0");
  return flying_time * model.e_fly + driving_time * model.e_drive;
}

/// One experimental arm; accuracy 0 is the planner working on sensed data only.
struct AblationArm {
  std::string name = "completion";
  double accuracy = 1.0;

  static AblationArm planner_only() { return {"planner_only", 0.0}; }
  static AblationArm completion(double accuracy = 1.0) { return {"completion", accuracy}; }
};

struct SimConfig {
  double tick = 0.05;
  double replan_period = 0.5;
  double resolution = 0.1;
  double inflation_radius = 0.3;
  /// Time cap as a multiple of the straight-line time at v_max.
  double time_cap_factor = 5.0;
  double arrival_tolerance = 0.3;
  SensorModel sensor;
  EnergyModel energy;
  /// Template for every replan; start, goal, grid and seed are filled per call.
  PlanRequest planner;
  bool record_path = false;
  bool record_trace = false;
  /// Called after every replan with the result and the grid it was planned against.
  std::function<void(const PlanResult&, const VoxelGrid&)> plan_observer;

  void validate() const {
    if (!(tick > 0.0 && replan_period > 0.0 && resolution > 0.0 && time_cap_factor > 0.0 &&
          arrival_tolerance > 0.0 && inflation_radius >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "invalid simulation config");
    sensor.validate();
    energy.validate();
    planner.search.validate();
    planner.weights.validate();
  }
};

struct TrialReport {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::string arm;
  double accuracy = 0.0;
  bool success = false;
  /// Empty on success; otherwise "collision", "timeout" or "error".
  std::string failure;
  double moving_time = 0.0;
  double flying_time = 0.0;
  double driving_time = 0.0;
  double energy = 0.0;
  std::optional<Vec3> collision_point;
  int replans = 0;
  int failed_replans = 0;
  int mode_switches = 0;
  double path_length = 0.0;
  /// Wall-clock planning statistics (seconds); not reproducible run to run.
  double plan_time_mean = 0.0;
  double plan_time_median = 0.0;
  std::vector<double> plan_times;
  std::vector<PlanTraceRow> trace;
  std::vector<Vec3> path;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Closed-loop run: sense, complete and replan every replan period, follow the
/// current curve exactly in between. Per-tick mode comes from the executed
/// altitude. Failures are recorded in the report, never thrown.
inline TrialReport simulate_trial(const Scenario& scenario, const SimConfig& cfg, const AblationArm& arm,
                                  std::uint64_t seed, const std::string& scenario_id = "scenario") {
  cfg.validate();
  TrialReport rep;
  rep.scenario_id = scenario_id;
  rep.seed = seed;
  rep.arm = arm.name;
  rep.accuracy = arm.accuracy;

  VoxelGrid grid = rasterize(scenario, cfg.resolution, cfg.inflation_radius);
  PlanRequest base = cfg.planner;
  base.goal = scenario.goal;
  base.grid = &grid;
  base.replan_period = cfg.replan_period;
  base.seed = seed;
  Replanner replanner(base);

  const double z_g = base.search.ground_threshold;
  const double cap = cfg.time_cap_factor * (scenario.goal - scenario.start).norm() / base.search.v_max;
  const double sub = 0.5 * cfg.resolution;

  RobotState state{scenario.start, Vec3::Zero(), Mode::Ground};
  std::optional<BSplineTrajectory> traj;
  double traj_t0 = 0.0;
  double next_replan = 0.0;
  const auto ticks = static_cast<long>(std::ceil(cap / cfg.tick - 1e-9));
  bool prev_aerial = scenario.start.z() > z_g;
  if (cfg.record_path) rep.path.push_back(state.position);

  for (long k = 0; k < ticks; ++k) {
    const double t = static_cast<double>(k) * cfg.tick;
    if (t + 1e-9 >= next_replan) {
      SensorModel sensor = cfg.sensor;
      sensor.position = state.position;
      const Vec3 heading = state.velocity.head<2>().norm() > 0.05 ? state.velocity : scenario.goal - state.position;
      sensor.yaw = std::atan2(heading.y(), heading.x());
      sensor.pitch = 0.0;
      sense(grid, sensor);
      oracle_complete(grid, arm.accuracy, mix64(seed, 0xC0113C7ULL));

      PlanResult res;
      bool ok = false;
      try {
        res = replanner.replan_step(state, t, grid);
        ok = res.status == PlanStatus::Success;
      } catch (const Error&) {
        ok = false;
      }
      if (cfg.plan_observer) cfg.plan_observer(res, grid);
      ++rep.replans;
      rep.plan_times.push_back(res.planning_time);
      if (cfg.record_trace)
        rep.trace.push_back({rep.replans - 1, t, res.status, res.planning_time, res.reused_previous,
                             res.used_fallback, res.breakdown, res.events});
      if (ok) {
        traj = std::move(res.trajectory);
        traj_t0 = t;
      } else {
        ++rep.failed_replans;
      }
      next_replan += cfg.replan_period;
    }

    // Advance one tick along the current curve.
    const Vec3 before = state.position;
    if (traj) {
      const double tau = t + cfg.tick - traj_t0;
      if (tau >= traj->duration()) {
        state.position = traj->evaluate(traj->duration());
        state.velocity.setZero();
      } else {
        state.position = traj->evaluate(tau);
        state.velocity = traj->degree() > 0 ? traj->derivative().evaluate(tau) : Vec3::Zero();
      }
    }
    const Vec3 step = state.position - before;
    const auto n = static_cast<int>(std::max(1.0, std::ceil(step.norm() / sub)));
    for (int s = 1; s <= n; ++s) {
      const Vec3 p = before + step * (static_cast<double>(s) / n);
      if (grid.is_occupied(p, Layer::GroundTruth)) {
        rep.collision_point = p;
        break;
      }
    }
    rep.path_length += step.norm();
    if (cfg.record_path) rep.path.push_back(state.position);
    const bool aerial = state.position.z() > z_g;
    (aerial ? rep.flying_time : rep.driving_time) += cfg.tick;
    if (aerial != prev_aerial) ++rep.mode_switches;
    prev_aerial = aerial;
    if (rep.collision_point) {
      rep.failure = "collision";
      break;
    }
    if ((state.position - scenario.goal).norm() <= cfg.arrival_tolerance) {
      rep.success = true;
      break;
    }
  }
  if (!rep.success && rep.failure.empty()) rep.failure = "timeout";
  rep.moving_time = rep.flying_time + rep.driving_time;
  rep.energy = compute_energy(rep.flying_time, rep.driving_time, cfg.energy);
  rep.plan_time_mean = detail::mean(rep.plan_times);
  rep.plan_time_median = detail::median(rep.plan_times);
  return rep;
}

struct ArmSummary {
  std::string name;
  double accuracy = 0.0;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  /// Means over successful trials.
  double mean_moving_time = 0.0;
  double mean_flying_time = 0.0;
  double mean_driving_time = 0.0;
  double mean_energy = 0.0;
  /// Over every replan of every trial of the arm (wall clock).
  double mean_planning_time = 0.0;
  double median_planning_time = 0.0;
};

struct SuiteSummary {
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_moving_time = 0.0;
  double mean_planning_time = 0.0;
  double median_planning_time = 0.0;
  double mean_energy = 0.0;
  std::vector<ArmSummary> arms;
};

namespace detail {

inline void fold(const std::vector<const TrialReport*>& reps, int& trials, int& successes, double& rate,
                 double& moving, double& flying, double& driving, double& energy, double& plan_mean,
                 double& plan_median) {
  std::vector<double> plans;
  trials = static_cast<int>(reps.size());
  successes = 0;
  moving = flying = driving = energy = 0.0;
  for (const auto* r : reps) {
    plans.insert(plans.end(), r->plan_times.begin(), r->plan_times.end());
    if (!r->success) continue;
    ++successes;
    moving += r->moving_time;
    flying += r->flying_time;
    driving += r->driving_time;
    energy += r->energy;
  }
  rate = trials > 0 ? static_cast<double>(successes) / trials : 0.0;
  if (successes > 0) {
    moving /= successes;
    flying /= successes;
    driving /= successes;
    energy /= successes;
  }
  plan_mean = mean(plans);
  plan_median = median(plans);
}

}  // namespace detail

/// Aggregates reports in order; arms appear in first-seen order.
inline SuiteSummary summarize(const std::vector<TrialReport>& reports) {
  SuiteSummary s;
  std::vector<const TrialReport*> all;
  for (const auto& r : reports) all.push_back(&r);
  double flying = 0.0;
  double driving = 0.0;
  detail::fold(all, s.trials, s.successes, s.success_rate, s.mean_moving_time, flying, driving, s.mean_energy,
               s.mean_planning_time, s.median_planning_time);
  for (const auto& r : reports) {
    if (std::none_of(s.arms.begin(), s.arms.end(), [&](const ArmSummary& a) { return a.name == r.arm; }))
      s.arms.push_back({r.arm, r.accuracy});
  }
  for (auto& a : s.arms) {
    std::vector<const TrialReport*> sel;
    for (const auto& r : reports)
      if (r.arm == a.name) sel.push_back(&r);
    detail::fold(sel, a.trials, a.successes, a.success_rate, a.mean_moving_time, a.mean_flying_time,
                 a.mean_driving_time, a.mean_energy, a.mean_planning_time, a.median_planning_time);
  }
  return s;
}

struct SuiteResult {
  SuiteSummary summary;
  std::vector<TrialReport> reports;
};

/// Paired suite: every arm runs on the same N scenario variants, derived from
/// the master seed by trial index. Scenario generation that exhausts its
/// placement budget is retried with a derived seed.
inline SuiteResult run_suite(const ScenarioParams& params, int trials, const std::vector<AblationArm>& arms,
                             std::uint64_t master_seed, const SimConfig& cfg, const std::string& name = "suite") {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "need at least one trial");
  if (arms.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one arm");
  SuiteResult out;
  for (int i = 0; i < trials; ++i) {
    std::uint64_t seed = mix64(master_seed, static_cast<std::uint64_t>(i));
    Scenario sc;
    for (int attempt = 0;; ++attempt) {
      try {
        sc = generate_scenario(params, seed);
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::PlacementExhausted || attempt >= 16) throw;
        seed = mix64(seed, static_cast<std::uint64_t>(attempt) + 1);
      }
    }
    const std::string id = name + "-" + std::to_string(i);
    for (const auto& arm : arms) out.reports.push_back(simulate_trial(sc, cfg, arm, seed, id));
  }
  out.summary = summarize(out.reports);
  return out;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

enum class ReportFormat { Csv, StructuredText };

struct ExportOptions {
  /// Include wall-clock planning columns (these differ between runs).
  bool timing = true;
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::vector<std::string> report_columns(const ExportOptions& opt = {}) {
  std::vector<std::string> cols{"scenario_id",  "seed",         "arm",          "accuracy",     "success",
                                "failure",      "moving_time",  "flying_time",  "driving_time", "energy",
                                "collision_x",  "collision_y",  "collision_z",  "replans",      "failed_replans",
                                "mode_switches", "path_length"};
  if (opt.timing) {
    cols.emplace_back("plan_time_mean");
    cols.emplace_back("plan_time_median");
  }
  return cols;
}

inline std::vector<std::string> report_fields(const TrialReport& r, const ExportOptions& opt = {}) {
  auto c = [&](int k) { return r.collision_point ? format_double((*r.collision_point)[k]) : std::string(); };
  std::vector<std::string> f{r.scenario_id,
                             std::to_string(r.seed),
                             r.arm,
                             format_double(r.accuracy),
                             r.success ? "1" : "0",
                             r.failure,
                             format_double(r.moving_time),
                             format_double(r.flying_time),
                             format_double(r.driving_time),
                             format_double(r.energy),
                             c(0),
                             c(1),
                             c(2),
                             std::to_string(r.replans),
                             std::to_string(r.failed_replans),
                             std::to_string(r.mode_switches),
                             format_double(r.path_length)};
  if (opt.timing) {
    f.push_back(format_double(r.plan_time_mean));
    f.push_back(format_double(r.plan_time_median));
  }
  return f;
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> summary_fields(const ArmSummary& a, bool timing) {
  std::vector<std::pair<std::string, std::string>> f{
      {"arm", a.name},
      {"accuracy", format_double(a.accuracy)},
      {"trials", std::to_string(a.trials)},
      {"successes", std::to_string(a.successes)},
      {"success_rate", format_double(a.success_rate)},
      {"mean_moving_time", format_double(a.mean_moving_time)},
      {"mean_flying_time", format_double(a.mean_flying_time)},
      {"mean_driving_time", format_double(a.mean_driving_time)},
      {"mean_energy", format_double(a.mean_energy)}};
  if (timing) {
    f.emplace_back("mean_planning_time", format_double(a.mean_planning_time));
    f.emplace_back("median_planning_time", format_double(a.median_planning_time));
  }
  return f;
}

inline std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace detail

/// Renders reports as csv (one row per trial, then a blank line and summary
/// rows tagged "summary") or as a key = value text document.
inline std::string render_reports(const std::vector<TrialReport>& reports, ReportFormat format,
                                  const ExportOptions& opt = {}) {
  std::ostringstream os;
  const auto cols = report_columns(opt);
  const SuiteSummary s = summarize(reports);
  if (format == ReportFormat::Csv) {
    os << detail::join(cols, ',') << '\n';
    for (const auto& r : reports) os << detail::join(report_fields(r, opt), ',') << '\n';
    if (!reports.empty()) {
      os << '\n';
      std::vector<std::string> head{"summary"};
      for (const auto& [k, v] : detail::summary_fields(s.arms.front(), opt.timing)) head.push_back(k);
      os << detail::join(head, ',') << '\n';
      for (const auto& a : s.arms) {
        std::vector<std::string> row{"summary"};
        for (const auto& [k, v] : detail::summary_fields(a, opt.timing)) row.push_back(v);
        os << detail::join(row, ',') << '\n';
      }
    }
    return os.str();
  }
  os << "format = trial-report\n";
  os << "trials = " << reports.size() << "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    os << "\n[trial." << i << "]\n";
    const auto f = report_fields(reports[i], opt);
    for (std::size_t k = 0; k < cols.size(); ++k) os << cols[k] << " = " << f[k] << '\n';
  }
  if (!reports.empty()) {
    os << "\n[summary]\n";
    os << "trials = " << s.trials << '\n';
    os << "successes = " << s.successes << '\n';
    os << "success_rate = " << format_double(s.success_rate) << '\n';
    os << "mean_moving_time = " << format_double(s.mean_moving_time) << '\n';
    os << "mean_energy = " << format_double(s.mean_energy) << '\n';
    if (opt.timing) {
      os << "mean_planning_time = " << format_double(s.mean_planning_time) << '\n';
      os << "median_planning_time = " << format_double(s.median_planning_time) << '\n';
    }
    for (std::size_t i = 0; i < s.arms.size(); ++i) {
      os << "\n[summary.arm." << i << "]\n";
      for (const auto& [k, v] : detail::summary_fields(s.arms[i], opt.timing)) os << k << " = " << v << '\n';
    }
  }
  return os.str();
}

inline void export_reports(const std::vector<TrialReport>& reports, ReportFormat format, const std::string& path,
                           const ExportOptions& opt = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out << render_reports(reports, format, opt);
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write to " + path + " failed");
}

/// Per-replan trace rows as csv.
inline std::string render_trace(const std::vector<TrialReport>& reports) {
  std::ostringstream os;
  os << "scenario_id,arm,replan,sim_time,status,planning_time,reused,fallback,"
        "smooth,collision,velocity,acceleration,jerk,curvature,events\n";
  for (const auto& r : reports)
    for (const auto& row : r.trace) {
      std::string ev;
      for (const auto& e : row.events) {
        if (!ev.empty()) ev += ';';
        ev += std::string(to_string(e.kind)) + "@" + format_double(e.time);
      }
      const auto& b = row.breakdown;
      os << r.scenario_id << ',' << r.arm << ',' << row.replan_index << ',' << format_double(row.sim_time) << ','
         << to_string(row.status) << ',' << format_double(row.planning_time) << ',' << row.reused_previous << ','
         << row.used_fallback << ',' << format_double(b.smooth) << ',' << format_double(b.collision) << ','
         << format_double(b.velocity) << ',' << format_double(b.acceleration) << ',' << format_double(b.jerk)
         << ',' << format_double(b.curvature) << ',' << ev << '\n';
    }
  return os.str();
}

}  // namespace agplan

#pragma once

#include "agplan/bspline.hpp"
#include "agplan/common.hpp"
#include "agplan/simbench.hpp"
#include "agplan/voxel_map.hpp"

#include <json.hpp>

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace agplan {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

namespace detail {

inline Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path);
}

}  // namespace detail

inline Json scenario_to_json(const Scenario& sc) {
  Json walls = Json::array();
  for (const auto& w : sc.walls)
    walls.push_back({{"cx", w.cx}, {"cy", w.cy}, {"base", w.base}, {"width", w.width},
                     {"thickness", w.thickness}, {"height", w.height}, {"along_x", w.along_x}});
  Json rings = Json::array();
  for (const auto& r : sc.rings)
    rings.push_back({{"center", detail::vec_json(r.center)}, {"axis", detail::vec_json(r.axis)},
                     {"inner_radius", r.inner_radius}, {"outer_radius", r.outer_radius}});
  return {{"extent", detail::vec_json(sc.extent)},
          {"walls", sc.wall_count},
          {"rings", sc.ring_count},
          {"seed", sc.seed},
          {"start", detail::vec_json(sc.start)},
          {"goal", detail::vec_json(sc.goal)},
          {"obstacles", {{"walls", walls}, {"rings", rings}}}};
}

/// Reads a scenario. With an "obstacles" object the listed obstacles are used
/// verbatim; otherwise they are generated from extent/walls/rings/seed (and
/// start/goal, when given, pin the endpoints).
inline Scenario scenario_from_json(const Json& j) {
  try {
    if (!j.contains("obstacles")) {
      ScenarioParams p;
      p.extent = detail::json_vec(j.at("extent"), "extent");
      p.walls = j.value("walls", 0);
      p.rings = j.value("rings", 0);
      if (j.contains("start")) p.start = detail::json_vec(j["start"], "start");
      if (j.contains("goal")) p.goal = detail::json_vec(j["goal"], "goal");
      return generate_scenario(p, j.value("seed", std::uint64_t{0}));
    }
    Scenario sc;
    sc.extent = detail::json_vec(j.at("extent"), "extent");
    sc.seed = j.value("seed", std::uint64_t{0});
    sc.start = detail::json_vec(j.at("start"), "start");
    sc.goal = detail::json_vec(j.at("goal"), "goal");
    const Json& obs = j.at("obstacles");
    for (const auto& w : obs.value("walls", Json::array())) {
      Wall wall;
      wall.cx = w.at("cx").get<double>();
      wall.cy = w.at("cy").get<double>();
      wall.base = w.value("base", 0.0);
      wall.width = w.at("width").get<double>();
      wall.thickness = w.at("thickness").get<double>();
      wall.height = w.at("height").get<double>();
      wall.along_x = w.value("along_x", true);
      sc.walls.push_back(wall);
    }
    for (const auto& r : obs.value("rings", Json::array())) {
      Ring ring;
      ring.center = detail::json_vec(r.at("center"), "ring center");
      ring.axis = detail::json_vec(r.at("axis"), "ring axis").normalized();
      ring.inner_radius = r.at("inner_radius").get<double>();
      ring.outer_radius = r.at("outer_radius").get<double>();
      sc.rings.push_back(ring);
    }
    sc.wall_count = static_cast<int>(sc.walls.size());
    sc.ring_count = static_cast<int>(sc.rings.size());
    return sc;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad scenario: ") + e.what());
  }
}

inline void write_scenario(const Scenario& sc, const std::string& path) {
  detail::write_file(path, scenario_to_json(sc).dump(2) + "\n");
}

inline Scenario read_scenario(const std::string& path) {
  Json j;
  try {
    j = Json::parse(detail::read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad scenario file: ") + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Grid and trajectory dumps
// ---------------------------------------------------------------------------

/// One "x y z layer" line per raw-occupied voxel centre, layers in
/// ground_truth, sensed, completed order.
inline void dump_grid(const VoxelGrid& grid, std::ostream& out) {
  for (Layer layer : {Layer::GroundTruth, Layer::Sensed, Layer::Completed})
    for (std::size_t i = 0; i < grid.voxel_count(); ++i) {
      if (!grid.raw_occupied(i, layer)) continue;
      const Vec3 c = grid.center(grid.unlinear(i));
      out << format_double(c.x()) << ' ' << format_double(c.y()) << ' ' << format_double(c.z()) << ' '
          << to_string(layer) << '\n';
    }
}

/// "t x y z mode" rows every 1/rate seconds plus the final instant. Mode comes
/// from the sampled altitude against the ground threshold.
inline void export_trajectory(const BSplineTrajectory& traj, double rate, double ground_threshold, std::ostream& out) {
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  if (traj.size() == 0) return;
  const double T = traj.duration();
  const auto n = static_cast<std::size_t>(std::floor(T * rate + 1e-9));
  auto row = [&](double t) {
    const Vec3 p = traj.evaluate(t);
    out << format_double(t) << ' ' << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
        << format_double(p.z()) << ' ' << to_string(p.z() > ground_threshold ? Mode::Aerial : Mode::Ground) << '\n';
  };
  for (std::size_t k = 0; k <= n; ++k) row(static_cast<double>(k) / rate);
  if (T - static_cast<double>(n) / rate > 1e-9) row(T);
}

/// "i x y z mode" per control point.
inline void dump_control_points(const BSplineTrajectory& traj, std::ostream& out) {
  const auto& tags = traj.mode_tags();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Vec3& q = traj[i];
    out << i << ' ' << format_double(q.x()) << ' ' << format_double(q.y()) << ' ' << format_double(q.z()) << ' '
        << to_string(i < tags.size() ? tags[i] : Mode::Ground) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Config overrides
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void take(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

inline void check_keys(const Json& j, std::initializer_list<const char*> known, const char* section) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, std::string(section) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw Error(ErrorCode::InvalidArgument, "unknown key '" + k + "' in " + section);
  }
}

}  // namespace detail

/// Applies a JSON object of overrides to a simulation config. Sections:
/// "search", "weights", "limits", "energy", "sensor", "sim". Unknown keys are
/// configuration errors.
inline void apply_config(const Json& j, SimConfig& cfg) {
  try {
    detail::check_keys(j, {"search", "weights", "limits", "energy", "sensor", "sim"}, "config");
    if (j.contains("search")) {
      const Json& s = j["search"];
      detail::check_keys(s, {"v_max", "a_max", "durations", "accel_levels", "rho_t", "w_energy", "ground_threshold",
                             "ground_height", "goal_tolerance", "position_bin", "velocity_bin", "heuristic_weight",
                             "max_expansions"},
                         "search");
      auto& c = cfg.planner.search;
      detail::take(s, "v_max", c.v_max);
      detail::take(s, "a_max", c.a_max);
      detail::take(s, "durations", c.durations);
      detail::take(s, "accel_levels", c.accel_levels);
      detail::take(s, "rho_t", c.rho_t);
      detail::take(s, "w_energy", c.w_energy);
      detail::take(s, "ground_threshold", c.ground_threshold);
      detail::take(s, "ground_height", c.ground_height);
      detail::take(s, "goal_tolerance", c.goal_tolerance);
      detail::take(s, "position_bin", c.position_bin);
      detail::take(s, "velocity_bin", c.velocity_bin);
      detail::take(s, "heuristic_weight", c.heuristic_weight);
      detail::take(s, "max_expansions", c.max_expansions);
    }
    if (j.contains("weights")) {
      const Json& s = j["weights"];
      detail::check_keys(s, {"lambda_smooth", "lambda_collision", "lambda_feasibility", "lambda_curvature",
                             "safe_clearance", "c_max"},
                         "weights");
      auto& w = cfg.planner.weights;
      detail::take(s, "lambda_smooth", w.lambda_smooth);
      detail::take(s, "lambda_collision", w.lambda_collision);
      detail::take(s, "lambda_feasibility", w.lambda_feasibility);
      detail::take(s, "lambda_curvature", w.lambda_curvature);
      detail::take(s, "safe_clearance", w.safe_clearance);
      detail::take(s, "c_max", w.c_max);
    }
    if (j.contains("limits")) {
      const Json& s = j["limits"];
      detail::check_keys(s, {"v_max", "a_max", "j_max"}, "limits");
      auto& l = cfg.planner.weights.limits;
      detail::take(s, "v_max", l.v_max);
      detail::take(s, "a_max", l.a_max);
      detail::take(s, "j_max", l.j_max);
    }
    if (j.contains("energy")) {
      const Json& s = j["energy"];
      detail::check_keys(s, {"e_drive", "e_fly"}, "energy");
      detail::take(s, "e_drive", cfg.energy.e_drive);
      detail::take(s, "e_fly", cfg.energy.e_fly);
      cfg.planner.search.e_drive = cfg.energy.e_drive;
      cfg.planner.search.e_fly = cfg.energy.e_fly;
    }
    if (j.contains("sensor")) {
      const Json& s = j["sensor"];
      detail::check_keys(s, {"horizontal_fov", "vertical_fov", "max_range"}, "sensor");
      detail::take(s, "horizontal_fov", cfg.sensor.horizontal_fov);
      detail::take(s, "vertical_fov", cfg.sensor.vertical_fov);
      detail::take(s, "max_range", cfg.sensor.max_range);
    }
    if (j.contains("sim")) {
      const Json& s = j["sim"];
      detail::check_keys(s, {"tick", "replan_period", "resolution", "inflation_radius", "time_cap_factor",
                             "arrival_tolerance"},
                         "sim");
      detail::take(s, "tick", cfg.tick);
      detail::take(s, "replan_period", cfg.replan_period);
      detail::take(s, "resolution", cfg.resolution);
      detail::take(s, "inflation_radius", cfg.inflation_radius);
      detail::take(s, "time_cap_factor", cfg.time_cap_factor);
      detail::take(s, "arrival_tolerance", cfg.arrival_tolerance);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config: ") + e.what());
  }
  cfg.validate();
}

inline SimConfig load_config(const std::string& path, SimConfig base = {}) {
  Json j;
  try {
    j = Json::parse(detail::read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config file: ") + e.what());
  }
  apply_config(j, base);
  return base;
}

}  // namespace agplan

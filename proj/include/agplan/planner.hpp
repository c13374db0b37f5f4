#pragma once

#include "agplan/bspline.hpp"
#include "agplan/common.hpp"
#include "agplan/hybrid_astar.hpp"
#include "agplan/traj_opt.hpp"
#include "agplan/voxel_map.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace agplan {

enum class PlanStatus { Success, NoPath, Infeasible };

inline std::string_view to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::Success: return "Success";
    case PlanStatus::NoPath: return "NoPath";
    case PlanStatus::Infeasible: return "Infeasible";
  }
  return "Unknown";
}

enum class Transition { GroundToAerial, AerialToGround };

inline std::string_view to_string(Transition t) {
  return t == Transition::GroundToAerial ? "ground_to_aerial" : "aerial_to_ground";
}

struct ModeEvent {
  double time = 0.0;
  Transition kind = Transition::GroundToAerial;
  bool operator==(const ModeEvent&) const = default;
};

/// Take-off at the first control point of every maximal run above z_g that is
/// entered from below; landing at the first control point after each run.
inline std::vector<ModeEvent> mode_switch_events(const BSplineTrajectory& traj, double ground_threshold) {
  std::vector<ModeEvent> out;
  const auto& q = traj.control_points();
  bool aerial = false;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const bool up = q[i].z() > ground_threshold;
    if (up && !aerial && i > 0) out.push_back({traj.control_point_time(i), Transition::GroundToAerial});
    if (!up && aerial) out.push_back({traj.control_point_time(i), Transition::AerialToGround});
    aerial = up;
  }
  return out;
}

/// Curve samples spaced at most `spacing` apart (bounded via the velocity hull).
inline std::vector<Vec3> dense_samples(const BSplineTrajectory& traj, double spacing) {
  double vmax = 0.0;
  if (traj.degree() > 0) {
    const auto& q = traj.control_points();
    for (std::size_t i = 0; i + 1 < q.size(); ++i) vmax = std::max(vmax, (q[i + 1] - q[i]).norm());
    vmax /= traj.knot_spacing();
  }
  const double T = traj.duration();
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(T * vmax / spacing)));
  std::vector<Vec3> out;
  out.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) out.push_back(traj.evaluate(T * static_cast<double>(k) / static_cast<double>(n)));
  return out;
}

/// Curve time of the first dense sample whose chord from the previous sample
/// crosses an occupied voxel of `layer`, if any.
inline std::optional<double> first_collision(const BSplineTrajectory& traj, const VoxelGrid& grid, Layer layer,
                                             double t_begin = 0.0) {
  const double spacing = 0.5 * grid.resolution();
  double vmax = 0.0;
  const auto& q = traj.control_points();
  for (std::size_t i = 0; i + 1 < q.size(); ++i) vmax = std::max(vmax, (q[i + 1] - q[i]).norm());
  vmax /= traj.knot_spacing();
  const double T = traj.duration();
  const double span = std::max(0.0, T - t_begin);
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span * vmax / spacing)));
  Vec3 prev = traj.evaluate(std::min(T, t_begin));
  if (grid.is_occupied(prev, layer)) return std::min(T, t_begin);
  for (std::size_t k = 1; k <= n; ++k) {
    const double t = std::min(T, t_begin + span * static_cast<double>(k) / static_cast<double>(n));
    const Vec3 p = traj.evaluate(t);
    if (!path_clear(grid, prev, p, layer)) return t;
    prev = p;
  }
  return std::nullopt;
}

struct PlannerOptions {
  InitialTrajectoryConfig initial;
  OptimizerParams optimizer;
  int max_retries = 3;
  /// Post-refinement may stretch the knot spacing by at most this factor.
  double max_time_scale = 10.0;
  /// Time step for sampling the guidance path when it is used as the fallback.
  double guidance_sample_dt = 0.25;
  /// Move anchored control points onto their guidance targets before descent.
  bool warm_start = true;
  Layer layer = Layer::Completed;
};

/// Guidance search tuned for replanning latency: coarse duplicate detection
/// and an inflated heuristic.
inline SearchConfig planner_search_defaults() {
  SearchConfig c;
  c.position_bin = 0.5;
  c.heuristic_weight = 2.0;
  return c;
}

/// Smoothness is a sum of squared third differences over dt^3, which dwarfs
/// the collision term at unit weight; it is scaled down accordingly.
inline CostWeights planner_weight_defaults() {
  CostWeights w;
  w.lambda_smooth = 0.01;
  return w;
}

struct PlanRequest {
  RobotState start;
  Vec3 goal = Vec3::Zero();
  const VoxelGrid* grid = nullptr;
  SearchConfig search = planner_search_defaults();
  CostWeights weights = planner_weight_defaults();
  double horizon = std::numeric_limits<double>::infinity();
  double replan_period = 0.5;
  std::uint64_t seed = 0;
  PlannerOptions options;

  void validate() const {
    if (grid == nullptr) throw Error(ErrorCode::InvalidArgument, "plan request has no grid");
    if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    if (!(replan_period > 0.0)) throw Error(ErrorCode::InvalidArgument, "replan period must be positive");
    if (options.max_retries < 1) throw Error(ErrorCode::InvalidArgument, "need at least one optimisation round");
    search.validate();
    weights.validate();
  }
};

struct PlanResult {
  PlanStatus status = PlanStatus::NoPath;
  BSplineTrajectory trajectory;
  std::vector<ModeEvent> events;
  /// Wall-clock seconds spent inside the planner.
  double planning_time = 0.0;
  CostBreakdown breakdown;
  double cost = 0.0;
  int optimize_rounds = 0;
  std::size_t expansions = 0;
  double time_scale = 1.0;
  bool used_fallback = false;
  bool reused_previous = false;
};

namespace detail {

/// Retags by altitude but leaves the pinned boundary control points in place.
inline void retag_keep_boundary(BSplineTrajectory& traj, const SearchConfig& cfg) {
  const auto p = static_cast<std::size_t>(traj.degree());
  const std::vector<Vec3> before = traj.control_points();
  traj.retag(cfg.ground_threshold, cfg.ground_height);
  auto& q = traj.control_points();
  for (std::size_t i = 0; i < q.size(); ++i)
    if (i < p || i + p >= q.size()) q[i] = before[i];
}

inline Vec3 local_goal(const PlanRequest& req) {
  const Vec3 d = req.goal - req.start.position;
  const double len = d.norm();
  if (len <= req.horizon) return req.goal;
  return req.start.position + d * (req.horizon / len);
}

inline BSplineTrajectory hold_position(const Vec3& p, int degree, double dt) {
  return BSplineTrajectory(degree, std::vector<Vec3>(static_cast<std::size_t>(degree) + 1, p), dt);
}

struct CollisionScan {
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::vector<CurveHit> hits;
};

/// Occupied control-point segments plus segments around free interior control
/// points whose stretch of curve (nearest knot time) is occupied.
inline CollisionScan scan_collisions(const BSplineTrajectory& traj, const VoxelGrid& grid, Layer layer) {
  CollisionScan out;
  auto ranges = extract_collision_segments(traj, grid, layer);
  const auto p = static_cast<std::size_t>(traj.degree());
  const std::size_t n = traj.size();
  if (n > 2 * p) {
    const auto samples = dense_samples(traj, 0.5 * grid.resolution());
    const double T = traj.duration();
    for (std::size_t k = 0; k < samples.size(); ++k) {
      if (!grid.is_occupied(samples[k], layer)) continue;
      const double t = samples.size() > 1 ? T * static_cast<double>(k) / static_cast<double>(samples.size() - 1) : 0.0;
      const double g = t / traj.knot_spacing() + 0.5 * (traj.degree() - 1);
      const auto i = static_cast<std::size_t>(std::clamp(std::lround(g), static_cast<long>(p), static_cast<long>(n - p - 1)));
      if (grid.is_occupied(traj[i], layer)) continue;
      if (std::any_of(out.hits.begin(), out.hits.end(), [i](const CurveHit& h) { return h.index == i; })) continue;
      out.hits.push_back({i, samples[k]});
      ranges.emplace_back(i - 1, i + 1);
    }
  }
  std::sort(ranges.begin(), ranges.end());
  for (const auto& r : ranges) {
    if (!out.segments.empty() && r.first <= out.segments.back().second)
      out.segments.back().second = std::max(out.segments.back().second, r.second);
    else
      out.segments.push_back(r);
  }
  return out;
}

/// Repair rounds: scan, guide each colliding segment, anchor, optimise.
/// Returns true once the curve and its control polygon are collision-free.
inline bool repair(const PlanRequest& req, BSplineTrajectory& traj, std::vector<AnchorPair>& pairs, PlanResult& res) {
  const VoxelGrid& grid = *req.grid;
  const Layer layer = req.options.layer;
  retag_keep_boundary(traj, req.search);
  for (int round = 0; round < req.options.max_retries; ++round) {
    const CollisionScan scan = scan_collisions(traj, grid, layer);
    const auto& segments = scan.segments;
    for (const auto& seg : segments) {
      const RobotState from = make_state(traj[seg.first], Vec3::Zero(), req.search);
      SearchConfig sc = req.search;
      sc.goal_tolerance = std::min(sc.goal_tolerance, 0.5 * (traj[seg.second] - traj[seg.first]).norm() + 1e-3);
      const SearchResult sr = search(from, traj[seg.second], grid, sc);
      res.expansions += sr.expansions;
      if (sr.status != SearchStatus::Found) return false;
      std::vector<Vec3> guide = sr.points();
      guide.push_back(traj[seg.second]);
      std::vector<AnchorPair> fresh;
      try {
        fresh = generate_anchor_pairs(traj, guide, seg, grid, layer, scan.hits);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::MarchEscapedGrid) throw;
        return false;
      }
      for (const auto& pr : fresh) {
        bool still_inside = false;
        for (const auto& old : pairs)
          if (old.index == pr.index && obstacle_distance(traj[pr.index], old) < 0.0) still_inside = true;
        if (!still_inside) pairs.push_back(pr);
      }
      if (req.options.warm_start) {
        // Start descent with anchored interior points on their guidance targets.
        const auto targets = guidance_targets(traj, guide, seg);
        const auto p = static_cast<std::size_t>(traj.degree());
        for (const auto& pr : fresh)
          if (pr.index >= p && pr.index + p < traj.size()) traj.control_points()[pr.index] = targets[pr.index - seg.first];
      }
    }
    if (!segments.empty() && pairs.empty()) return false;
    try {
      auto [next, rep] = optimize(traj, pairs, req.weights, req.options.optimizer);
      traj = std::move(next);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Diverged) throw;
      return false;
    }
    ++res.optimize_rounds;
    retag_keep_boundary(traj, req.search);
    if (!first_collision(traj, grid, layer) && extract_collision_segments(traj, grid, layer).empty()) return true;
  }
  return false;
}

/// Control polygon made of uniform-time samples of a full guidance search,
/// pinned to the start state and (when reachable in a straight line) the goal.
inline BSplineTrajectory guidance_spline(const PlanRequest& req, const SearchResult& sr, const Vec3& goal, double sample_dt) {
  const VoxelGrid& grid = *req.grid;
  const int p = req.options.initial.degree;
  const double total = sr.duration();
  const double n = std::max(1.0, std::ceil(total / sample_dt - 1e-9));
  const double dt = total / n;
  const std::vector<Vec3> samples = sr.sample(dt);
  std::vector<Vec3> ctrl = boundary_control_points(p, req.start.position, req.start.velocity, dt, false);
  for (std::size_t k = 1; k + 1 < samples.size(); ++k) ctrl.push_back(samples[k]);
  const Vec3 end = path_clear(grid, samples.back(), goal, req.options.layer) ? goal : samples.back();
  for (const auto& q : boundary_control_points(p, end, Vec3::Zero(), dt, true)) ctrl.push_back(q);
  BSplineTrajectory traj(p, std::move(ctrl), dt);
  traj.tag_by_altitude(req.search.ground_threshold);
  return traj;
}

/// Time-scale a collision-free curve into the limits and record it.
inline void accept(const PlanRequest& req, BSplineTrajectory traj, const std::vector<AnchorPair>& pairs, PlanResult& res) {
  const double scale = post_refine(traj, req.weights.limits);
  res.time_scale = scale;
  res.cost = total_cost(traj, pairs, req.weights, nullptr, &res.breakdown);
  res.trajectory = std::move(traj);
  res.status = scale > req.options.max_time_scale ? PlanStatus::Infeasible : PlanStatus::Success;
}

/// Repair the given curve; failing that, repair a guidance-search spline;
/// failing that, accept the raw guidance spline if it is collision-free.
inline void run_pipeline(const PlanRequest& req, BSplineTrajectory traj, const Vec3& goal, PlanResult& res) {
  std::vector<AnchorPair> pairs;
  if (repair(req, traj, pairs, res)) {
    accept(req, std::move(traj), pairs, res);
    return;
  }
  res.used_fallback = true;
  const SearchResult sr = search(req.start, goal, *req.grid, req.search);
  res.expansions += sr.expansions;
  if (sr.status != SearchStatus::Found || sr.primitives.empty()) {
    res.status = PlanStatus::NoPath;
    return;
  }
  double sample_dt = req.options.guidance_sample_dt;
  BSplineTrajectory guess = guidance_spline(req, sr, goal, sample_dt);
  BSplineTrajectory repaired = guess;
  pairs.clear();
  if (repair(req, repaired, pairs, res)) {
    accept(req, std::move(repaired), pairs, res);
    return;
  }
  // Denser control polygons hug the guidance path more closely.
  for (int k = 0; k < 3; ++k) {
    if (!first_collision(guess, *req.grid, req.options.layer)) {
      accept(req, std::move(guess), {}, res);
      return;
    }
    sample_dt *= 0.5;
    guess = guidance_spline(req, sr, goal, sample_dt);
  }
  res.trajectory = std::move(guess);
  res.status = PlanStatus::Infeasible;
}

inline void finish(PlanResult& res, const PlanRequest& req, std::chrono::steady_clock::time_point t0) {
  if (res.trajectory.size() > 0) res.events = mode_switch_events(res.trajectory, req.search.ground_threshold);
  res.planning_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline bool at_goal(const PlanRequest& req, const Vec3& goal) {
  return (goal - req.start.position).norm() < 1e-6 && req.start.velocity.norm() < 1e-9;
}

}  // namespace detail

/// Full pipeline from a fresh initial trajectory. Throws InvalidArgument when
/// the start is occupied in the planning layer.
inline PlanResult plan(const PlanRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  req.validate();
  PlanResult res;
  const Vec3 goal = detail::local_goal(req);
  const auto& init = req.options.initial;
  if (detail::at_goal(req, goal)) {
    res.trajectory = detail::hold_position(goal, init.degree, init.spacing / init.speed);
    res.status = PlanStatus::Success;
    detail::finish(res, req, t0);
    return res;
  }
  if (req.grid->is_occupied(req.start.position, req.options.layer))
    throw Error(ErrorCode::InvalidArgument, "start is occupied");
  if ((goal - req.start.position).norm() < 1e-6) {
    // Moving robot asked to stop at its current position.
    const double dt = init.spacing / init.speed;
    auto ctrl = boundary_control_points(init.degree, goal, req.start.velocity, dt, false);
    for (const auto& q : boundary_control_points(init.degree, goal, Vec3::Zero(), dt, true)) ctrl.push_back(q);
    detail::run_pipeline(req, BSplineTrajectory(init.degree, std::move(ctrl), dt), goal, res);
    detail::finish(res, req, t0);
    return res;
  }
  BSplineTrajectory initial = build_initial_trajectory(req.start.position, goal, req.seed, init, req.start.velocity);
  detail::run_pipeline(req, std::move(initial), goal, res);
  detail::finish(res, req, t0);
  return res;
}

/// One row of the per-replan trace.
struct PlanTraceRow {
  int replan_index = 0;
  double sim_time = 0.0;
  PlanStatus status = PlanStatus::NoPath;
  double planning_time = 0.0;
  bool reused_previous = false;
  bool used_fallback = false;
  CostBreakdown breakdown;
  std::vector<ModeEvent> events;
};

/// Receding-horizon wrapper. Keeps the last accepted trajectory and reuses its
/// remainder as the initial guess while it stays collision-free.
class Replanner {
 public:
  explicit Replanner(PlanRequest base) : base_(std::move(base)) { base_.validate(); }

  /// Plans from `current` (sampled at simulation time `now`) against `grid`.
  PlanResult replan_step(const RobotState& current, double now, const VoxelGrid& grid) {
    const auto t0 = std::chrono::steady_clock::now();
    PlanRequest req = base_;
    req.start = current;
    req.grid = &grid;
    req.seed = mix64(base_.seed, static_cast<std::uint64_t>(count_));
    ++count_;

    PlanResult res;
    if (previous_) {
      const double t_rel = now - previous_start_;
      const BSplineTrajectory& prev = *previous_;
      if (t_rel >= 0.0 && t_rel < prev.duration() && !first_collision(prev, grid, req.options.layer, t_rel)) {
        if (auto reused = reuse(prev, t_rel, req)) {
          res = std::move(*reused);
          res.reused_previous = true;
          detail::finish(res, req, t0);
          accept(res, now);
          return res;
        }
      }
    }
    res = plan(req);
    res.planning_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    accept(res, now);
    return res;
  }

  void reset() {
    previous_.reset();
    count_ = 0;
  }
  int replan_count() const { return count_; }

 private:
  void accept(const PlanResult& res, double now) {
    if (res.status != PlanStatus::Success) return;
    previous_ = res.trajectory;
    previous_start_ = now;
  }

  // Refits the remaining part of the previous curve from the current state.
  std::optional<PlanResult> reuse(const BSplineTrajectory& prev, double t_rel, const PlanRequest& req) const {
    const double dt = prev.knot_spacing();
    const double remaining = prev.duration() - t_rel;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(remaining / dt - 1e-9)));
    const double step = remaining / static_cast<double>(n);
    std::vector<Vec3> pts;
    pts.push_back(req.start.position);
    for (std::size_t k = 1; k <= n; ++k) pts.push_back(prev.evaluate(std::min(prev.duration(), t_rel + step * k)));
    if ((pts.back() - pts.front()).norm() < 1e-6 && req.start.velocity.norm() < 1e-9) return std::nullopt;
    BSplineTrajectory guess = fit_from_waypoints(pts, step, prev.degree(), req.start.velocity, Vec3::Zero());
    guess.tag_by_altitude(req.search.ground_threshold);
    if (!extract_collision_segments(guess, *req.grid, req.options.layer).empty() ||
        first_collision(guess, *req.grid, req.options.layer))
      return std::nullopt;
    PlanResult res;
    res.time_scale = post_refine(guess, req.weights.limits);
    if (res.time_scale > req.options.max_time_scale) return std::nullopt;
    res.cost = total_cost(guess, {}, req.weights, nullptr, &res.breakdown);
    res.trajectory = std::move(guess);
    res.status = PlanStatus::Success;
    return res;
  }

  PlanRequest base_;
  std::optional<BSplineTrajectory> previous_;
  double previous_start_ = 0.0;
  int count_ = 0;
};

}  // namespace agplan

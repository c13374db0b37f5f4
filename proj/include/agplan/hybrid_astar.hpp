#pragma once

#include "agplan/bspline.hpp"
#include "agplan/common.hpp"
#include "agplan/voxel_map.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <unordered_map>
#include <utility>
#include <vector>

namespace agplan {

struct RobotState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Mode mode = Mode::Ground;
};

/// Front-end search parameters. Energy rates default to the measured driving
/// and flying consumption of the reference platform (J/s).
struct SearchConfig {
  double v_max = 2.0;
  double a_max = 3.0;
  std::vector<double> durations{0.25, 0.5};
  /// Per-axis acceleration lattice; empty means {-a_max, 0, a_max}.
  std::vector<double> accel_levels;
  double rho_t = 1.0;
  double w_energy = 0.01;
  double e_drive = 251.45;
  double e_fly = 988.33;
  double ground_threshold = 0.3;
  double ground_height = 0.1;
  double goal_tolerance = 0.3;
  /// Closed-set position bin; 0 means the grid resolution.
  double position_bin = 0.0;
  double velocity_bin = 0.5;
  /// Aerial states at or below the ground threshold with |v_z| up to this may land.
  double land_vz_max = 1.0;
  /// Multiplier on the heuristic; 1 keeps the search optimal, larger values trade
  /// optimality for fewer expansions.
  double heuristic_weight = 1.0;
  std::size_t max_expansions = 40000;
  Layer layer = Layer::Completed;
  bool trace = false;

  std::vector<double> levels() const {
    if (!accel_levels.empty()) return accel_levels;
    return {-a_max, 0.0, a_max};
  }

  void validate() const {
    if (!(v_max > 0.0 && a_max > 0.0 && rho_t > 0.0 && w_energy > 0.0 && e_drive > 0.0 &&
          e_fly > 0.0 && goal_tolerance > 0.0 && velocity_bin > 0.0 && position_bin >= 0.0 &&
          heuristic_weight >= 1.0))
      throw Error(ErrorCode::InvalidArgument, "search parameters must be positive");
    if (!(e_fly > e_drive)) throw Error(ErrorCode::InvalidArgument, "flying must cost more than driving");
    if (durations.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one primitive duration");
    for (double d : durations)
      if (!(d > 0.0)) throw Error(ErrorCode::InvalidArgument, "primitive durations must be positive");
    for (double a : levels())
      if (std::abs(a) > a_max + 1e-12)
        throw Error(ErrorCode::InvalidArgument, "acceleration level exceeds a_max");
  }
};

/// Classifies a kinematic state: ground iff on the driving plane with no vertical velocity.
inline RobotState make_state(const Vec3& position, const Vec3& velocity, const SearchConfig& cfg) {
  RobotState s{position, velocity, Mode::Aerial};
  if (std::abs(position.z() - cfg.ground_height) <= 1e-9 && std::abs(velocity.z()) <= 1e-9)
    s.mode = Mode::Ground;
  return s;
}

/// Constant-acceleration edge of the search graph. Landing primitives replace
/// the vertical channel by a straight descent onto the driving plane.
struct MotionPrimitive {
  RobotState parent;
  RobotState result;
  Vec3 accel = Vec3::Zero();
  double duration = 0.0;
  bool landing = false;
  std::vector<Vec3> samples;
  double cost = 0.0;
  bool airborne = false;

  /// Position at local time t in [0, duration].
  Vec3 position_at(double t) const {
    const Vec3& p0 = parent.position;
    Vec3 p = p0 + parent.velocity * t + 0.5 * accel * t * t;
    if (landing) p.z() = p0.z() + (result.position.z() - p0.z()) * (t / duration);
    return p;
  }
};

inline double edge_cost(const MotionPrimitive& prim, const SearchConfig& cfg) {
  const double rate = prim.airborne ? cfg.e_fly : cfg.e_drive;
  return (prim.accel.squaredNorm() + cfg.rho_t) * prim.duration + cfg.w_energy * rate * prim.duration;
}

namespace detail {

inline MotionPrimitive integrate(const RobotState& from, const Vec3& accel, double tau, bool landing,
                                 const SearchConfig& cfg, double sample_spacing) {
  MotionPrimitive prim;
  prim.parent = from;
  prim.accel = accel;
  prim.duration = tau;
  prim.landing = landing;
  const Vec3& p0 = from.position;
  const Vec3& v0 = from.velocity;
  double bound = v0.norm() * tau + 0.5 * accel.norm() * tau * tau;
  if (landing) bound += std::abs(p0.z() - cfg.ground_height);
  const int n = std::max(1, static_cast<int>(std::ceil(bound / sample_spacing)));
  prim.samples.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const double t = tau * k / n;
    Vec3 p = p0 + v0 * t + 0.5 * accel * t * t;
    if (landing) p.z() = p0.z() + (cfg.ground_height - p0.z()) * (t / tau);
    prim.samples.push_back(p);
  }
  Vec3 p1 = p0 + v0 * tau + 0.5 * accel * tau * tau;
  Vec3 v1 = v0 + accel * tau;
  if (landing) {
    p1.z() = cfg.ground_height;
    v1.z() = 0.0;
    prim.result = RobotState{p1, v1, Mode::Ground};
  } else {
    prim.result = make_state(p1, v1, cfg);
  }
  for (const auto& s : prim.samples)
    if (s.z() > cfg.ground_threshold) {
      prim.airborne = true;
      break;
    }
  prim.cost = edge_cost(prim, cfg);
  return prim;
}

inline bool primitive_free(const MotionPrimitive& prim, const SearchConfig& cfg, const VoxelGrid& grid) {
  for (const auto& s : prim.samples)
    if (s.z() < cfg.ground_height - 1e-9) return false;
  if (grid.is_occupied(prim.samples.front(), cfg.layer)) return false;
  // Exact voxel traversal between samples so clipped voxel corners count.
  for (std::size_t k = 1; k < prim.samples.size(); ++k)
    if (!path_clear(grid, prim.samples[k - 1], prim.samples[k], cfg.layer)) return false;
  return true;
}

}  // namespace detail

/// Successors of `state`: one primitive per (acceleration lattice x duration)
/// whose swept samples are free and whose final speed is within v_max. Low,
/// slow aerial states additionally get landing primitives.
inline std::vector<MotionPrimitive> expand(const RobotState& state, const SearchConfig& cfg,
                                           const VoxelGrid& grid) {
  std::vector<MotionPrimitive> out;
  const std::vector<double> lv = cfg.levels();
  const double spacing = grid.resolution();
  for (double tau : cfg.durations) {
    for (double az : lv)
      for (double ay : lv)
        for (double ax : lv) {
          const Vec3 a(ax, ay, az);
          const Vec3 v1 = state.velocity + a * tau;
          if (v1.norm() > cfg.v_max + 1e-9) continue;
          MotionPrimitive prim = detail::integrate(state, a, tau, false, cfg, spacing);
          if (detail::primitive_free(prim, cfg, grid)) out.push_back(std::move(prim));
        }
  }
  const bool can_land = state.mode == Mode::Aerial &&
                        state.position.z() <= cfg.ground_threshold &&
                        std::abs(state.velocity.z()) <= cfg.land_vz_max;
  if (can_land) {
    for (double tau : cfg.durations) {
      const double vz = (state.position.z() - cfg.ground_height) / tau;
      for (double ay : lv)
        for (double ax : lv) {
          const Vec3 a(ax, ay, 0.0);
          const Vec3 v0xy(state.velocity.x(), state.velocity.y(), 0.0);
          const Vec3 v1xy = v0xy + a * tau;
          const double vxy = std::max(v0xy.norm(), v1xy.norm());
          if (std::hypot(vxy, vz) > cfg.v_max + 1e-9) continue;
          MotionPrimitive prim = detail::integrate(state, a, tau, true, cfg, spacing);
          if (detail::primitive_free(prim, cfg, grid)) out.push_back(std::move(prim));
        }
    }
  }
  return out;
}

/// Admissible cost-to-go: distance outside the goal ball at v_max, charged at
/// the cheaper (driving) rate.
inline double heuristic(const Vec3& p, const Vec3& goal, const SearchConfig& cfg) {
  const double d = std::max(0.0, (goal - p).norm() - cfg.goal_tolerance);
  return (cfg.rho_t + cfg.w_energy * cfg.e_drive) * d / cfg.v_max;
}

enum class SearchStatus { Found, NoPath, Timeout };

inline std::string_view to_string(SearchStatus s) {
  switch (s) {
    case SearchStatus::Found: return "Found";
    case SearchStatus::NoPath: return "NoPath";
    case SearchStatus::Timeout: return "Timeout";
  }
  return "Unknown";
}

struct SearchResult {
  SearchStatus status = SearchStatus::NoPath;
  std::vector<MotionPrimitive> primitives;
  double cost = 0.0;
  std::size_t expansions = 0;
  /// Open-set size after each expansion (filled when SearchConfig::trace is set).
  std::vector<std::size_t> frontier_trace;

  double duration() const {
    double t = 0.0;
    for (const auto& p : primitives) t += p.duration;
    return t;
  }
  double airborne_duration() const {
    double t = 0.0;
    for (const auto& p : primitives)
      if (p.airborne) t += p.duration;
    return t;
  }
  int mode_switches() const {
    int n = 0;
    for (const auto& p : primitives)
      if (p.parent.mode != p.result.mode) ++n;
    return n;
  }
  /// Concatenated swept samples from start to end.
  std::vector<Vec3> points() const {
    std::vector<Vec3> out;
    for (const auto& p : primitives)
      for (std::size_t k = 0; k < p.samples.size(); ++k) {
        if (k == 0 && !out.empty() && (p.samples[0] - out.back()).norm() < 1e-12) continue;
        out.push_back(p.samples[k]);
      }
    return out;
  }
  /// Positions at uniform time steps dt along the chain; the final state is always included.
  std::vector<Vec3> sample(double dt) const {
    std::vector<Vec3> out;
    if (primitives.empty()) return out;
    const double total = duration();
    const auto n = static_cast<std::size_t>(std::ceil(total / dt - 1e-9));
    std::size_t k = 0;
    double base = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      while (k + 1 < primitives.size() && t >= base + primitives[k].duration) base += primitives[k++].duration;
      out.push_back(primitives[k].position_at(std::min(t - base, primitives[k].duration)));
    }
    out.push_back(primitives.back().result.position);
    return out;
  }
};

namespace detail {

struct SearchNode {
  RobotState state;
  RobotState from;
  Vec3 accel = Vec3::Zero();
  double duration = 0.0;
  bool landing = false;
  double g = 0.0;
  int parent = -1;
  int switches = 0;
  bool expanded = false;
};

struct OpenEntry {
  double f;
  int switches;
  std::uint64_t key;
  int node;
  double g;
  bool operator>(const OpenEntry& o) const {
    if (f != o.f) return f > o.f;
    if (switches != o.switches) return switches > o.switches;
    return key > o.key;
  }
};

inline std::uint64_t state_key(const RobotState& s, const VoxelGrid& grid, double pos_bin, double vel_bin) {
  std::uint64_t key = 0;
  for (int k = 0; k < 3; ++k) {
    const auto pi = static_cast<std::int64_t>(std::floor((s.position[k] - grid.origin()[k]) / pos_bin));
    key = (key << 14) | (static_cast<std::uint64_t>(pi + (1 << 13)) & 0x3fff);
  }
  for (int k = 0; k < 3; ++k) {
    const auto vi = static_cast<std::int64_t>(std::floor(s.velocity[k] / vel_bin));
    key = (key << 7) | (static_cast<std::uint64_t>(vi + 64) & 0x7f);
  }
  return key;
}

}  // namespace detail

/// Kinodynamic A* over constant-acceleration primitives. States are merged in
/// the closed set by (position bin, velocity bin); a cheaper arrival replaces
/// a bin's representative while it is unexpanded. An expanded representative
/// is only improved (and reopened) by an arrival at the same state, so the
/// extracted chain of primitives stays continuous. Ties on f are broken by fewer mode
/// switches, then by the packed state key.
inline SearchResult search(const RobotState& start, const Vec3& goal, const VoxelGrid& grid,
                           const SearchConfig& cfg) {
  cfg.validate();
  SearchResult result;
  if (grid.is_occupied(start.position, cfg.layer)) {
    result.status = SearchStatus::NoPath;
    return result;
  }
  const double pos_bin = cfg.position_bin > 0.0 ? cfg.position_bin : grid.resolution();
  std::vector<detail::SearchNode> nodes;
  std::unordered_map<std::uint64_t, int> index;
  std::priority_queue<detail::OpenEntry, std::vector<detail::OpenEntry>, std::greater<>> open;

  nodes.push_back({start, start, Vec3::Zero(), 0.0, false, 0.0, -1, 0});
  const std::uint64_t start_key = detail::state_key(start, grid, pos_bin, cfg.velocity_bin);
  index.emplace(start_key, 0);
  open.push({cfg.heuristic_weight * heuristic(start.position, goal, cfg), 0, start_key, 0, 0.0});

  while (!open.empty()) {
    const detail::OpenEntry top = open.top();
    open.pop();
    const detail::SearchNode cur = nodes[static_cast<std::size_t>(top.node)];
    if (top.g > cur.g) continue;  // stale entry
    nodes[static_cast<std::size_t>(top.node)].expanded = true;

    if ((cur.state.position - goal).norm() <= cfg.goal_tolerance) {
      result.status = SearchStatus::Found;
      result.cost = cur.g;
      std::vector<int> chain;
      for (int n = top.node; n > 0; n = nodes[static_cast<std::size_t>(n)].parent) chain.push_back(n);
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        const auto& nd = nodes[static_cast<std::size_t>(*it)];
        result.primitives.push_back(
            detail::integrate(nd.from, nd.accel, nd.duration, nd.landing, cfg, grid.resolution()));
      }
      return result;
    }
    if (result.expansions >= cfg.max_expansions) {
      result.status = SearchStatus::Timeout;
      return result;
    }
    ++result.expansions;

    for (auto& prim : expand(cur.state, cfg, grid)) {
      const double g = cur.g + prim.cost;
      const std::uint64_t key = detail::state_key(prim.result, grid, pos_bin, cfg.velocity_bin);
      const int switches = cur.switches + (prim.result.mode != cur.state.mode ? 1 : 0);
      auto it = index.find(key);
      int id;
      if (it == index.end()) {
        id = static_cast<int>(nodes.size());
        nodes.push_back({prim.result, cur.state, prim.accel, prim.duration, prim.landing, g, top.node, switches});
        index.emplace(key, id);
      } else {
        id = it->second;
        auto& nd = nodes[static_cast<std::size_t>(id)];
        if (!(g < nd.g)) continue;
        if (nd.expanded && ((nd.state.position - prim.result.position).norm() > 1e-9 ||
                            (nd.state.velocity - prim.result.velocity).norm() > 1e-9 || nd.state.mode != prim.result.mode))
          continue;
        nd = {prim.result, cur.state, prim.accel, prim.duration, prim.landing, g, top.node, switches};
      }
      open.push({g + cfg.heuristic_weight * heuristic(prim.result.position, goal, cfg), switches, key, id, g});
    }
    if (cfg.trace) result.frontier_trace.push_back(open.size());
  }
  result.status = SearchStatus::NoPath;
  return result;
}

/// Index ranges [first, last] of control points occupied in `layer`, each padded
/// by one control point on both sides; overlapping ranges are merged.
inline std::vector<std::pair<std::size_t, std::size_t>> extract_collision_segments(
    const BSplineTrajectory& traj, const VoxelGrid& grid, Layer layer = Layer::Completed) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto& q = traj.control_points();
  const std::size_t n = q.size();
  std::size_t i = 0;
  while (i < n) {
    if (!grid.is_occupied(q[i], layer)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && grid.is_occupied(q[j + 1], layer)) ++j;
    const std::size_t first = i > 0 ? i - 1 : 0;
    const std::size_t last = j + 1 < n ? j + 1 : n - 1;
    if (!out.empty() && first <= out.back().second)
      out.back().second = last;
    else
      out.emplace_back(first, last);
    i = j + 1;
  }
  return out;
}

}  // namespace agplan

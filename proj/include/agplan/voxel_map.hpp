#pragma once

#include "agplan/common.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace agplan {

using Index3 = Eigen::Vector3i;

// ---------------------------------------------------------------------------
// Obstacles and scenarios
// ---------------------------------------------------------------------------

/// Axis-aligned wall slab. `width` runs along x when along_x, otherwise along y;
/// `thickness` is the other horizontal extent. A positive base leaves a gap
/// underneath.
struct Wall {
  double cx = 0.0;
  double cy = 0.0;
  double base = 0.0;
  double width = 1.0;
  double thickness = 0.2;
  double height = 1.0;
  bool along_x = true;

  Vec3 min_corner() const {
    const double hx = 0.5 * (along_x ? width : thickness);
    const double hy = 0.5 * (along_x ? thickness : width);
    return {cx - hx, cy - hy, base};
  }
  Vec3 max_corner() const {
    const double hx = 0.5 * (along_x ? width : thickness);
    const double hy = 0.5 * (along_x ? thickness : width);
    return {cx + hx, cy + hy, base + height};
  }
  bool contains(const Vec3& p) const {
    const Vec3 lo = min_corner();
    const Vec3 hi = max_corner();
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  double distance(const Vec3& p) const {
    const Vec3 lo = min_corner();
    const Vec3 hi = max_corner();
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.norm();
  }
  bool operator==(const Wall&) const = default;
};

/// Torus: tube of radius (outer-inner)/2 swept around a circle of radius
/// (outer+inner)/2 in the plane orthogonal to `axis`.
struct Ring {
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();
  double inner_radius = 0.8;
  double outer_radius = 1.1;

  double major_radius() const { return 0.5 * (outer_radius + inner_radius); }
  double tube_radius() const { return 0.5 * (outer_radius - inner_radius); }

  /// Signed distance to the tube surface (negative inside).
  double distance(const Vec3& p) const {
    const Vec3 d = p - center;
    const double h = d.dot(axis);
    const double radial = (d - h * axis).norm();
    return std::hypot(radial - major_radius(), h) - tube_radius();
  }
  bool contains(const Vec3& p) const { return distance(p) <= 0.0; }
  bool operator==(const Ring& o) const {
    return center == o.center && axis == o.axis && inner_radius == o.inner_radius &&
           outer_radius == o.outer_radius;
  }
};

struct Scenario {
  Vec3 extent = Vec3(10.0, 10.0, 5.0);
  int wall_count = 0;
  int ring_count = 0;
  std::uint64_t seed = 0;
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  std::vector<Wall> walls;
  std::vector<Ring> rings;
};

/// Parameters for procedural scenario generation. Obstacle dimension
/// distributions are declared defaults, not measured values.
struct ScenarioParams {
  Vec3 extent = Vec3(20.0, 20.0, 5.0);
  int walls = 80;
  int rings = 20;
  std::optional<Vec3> start;
  std::optional<Vec3> goal;
  double ground_height = 0.1;
  /// Minimum distance kept between any obstacle and the start/goal points.
  double clearance = 1.2;
  /// Inflation assumed when checking that start and goal stay connected.
  double inflation_radius = 0.3;
  int retries_per_obstacle = 200;
  double max_fill_fraction = 0.6;

  static ScenarioParams square_room() { return {}; }
  static ScenarioParams corridor() {
    ScenarioParams p;
    p.extent = Vec3(3.0, 30.0, 5.0);
    p.walls = 60;
    p.rings = 10;
    return p;
  }
  static ScenarioParams empty(const Vec3& extent) {
    ScenarioParams p;
    p.extent = extent;
    p.walls = 0;
    p.rings = 0;
    return p;
  }
};

/// Start and goal on the driving plane, 1 m in from either end of the longer
/// horizontal axis, centred on the other.
inline std::pair<Vec3, Vec3> default_endpoints(const Vec3& extent, double ground_height) {
  const double margin = std::min(1.0, 0.25 * std::max(extent.x(), extent.y()));
  if (extent.x() >= extent.y()) {
    return {Vec3(margin, 0.5 * extent.y(), ground_height),
            Vec3(extent.x() - margin, 0.5 * extent.y(), ground_height)};
  }
  return {Vec3(0.5 * extent.x(), margin, ground_height),
          Vec3(0.5 * extent.x(), extent.y() - margin, ground_height)};
}

namespace detail {

/// Coarse 6-connected reachability map used to keep start and goal connected
/// while obstacles are being placed. Cells are blocked conservatively.
class CoarseConnectivity {
 public:
  CoarseConnectivity(const Vec3& extent, double cell, double inflation)
      : cell_(cell), inflation_(inflation) {
    for (int k = 0; k < 3; ++k) dims_[k] = std::max(1, static_cast<int>(std::ceil(extent[k] / cell)));
    blocked_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], 0);
  }

  std::vector<std::size_t> cells_for(const Wall& w) const {
    const Vec3 lo = w.min_corner().array() - inflation_;
    const Vec3 hi = w.max_corner().array() + inflation_;
    std::vector<std::size_t> out;
    Index3 a, b;
    for (int k = 0; k < 3; ++k) {
      a[k] = std::clamp(static_cast<int>(std::floor(lo[k] / cell_)), 0, dims_[k] - 1);
      b[k] = std::clamp(static_cast<int>(std::floor(hi[k] / cell_)), 0, dims_[k] - 1);
    }
    for (int z = a.z(); z <= b.z(); ++z)
      for (int y = a.y(); y <= b.y(); ++y)
        for (int x = a.x(); x <= b.x(); ++x) out.push_back(index(x, y, z));
    return out;
  }

  std::vector<std::size_t> cells_for(const Ring& r) const {
    const double reach = r.outer_radius + inflation_ + cell_;
    const double margin = inflation_ + 0.5 * std::sqrt(3.0) * cell_;
    std::vector<std::size_t> out;
    Index3 a, b;
    for (int k = 0; k < 3; ++k) {
      a[k] = std::clamp(static_cast<int>(std::floor((r.center[k] - reach) / cell_)), 0, dims_[k] - 1);
      b[k] = std::clamp(static_cast<int>(std::floor((r.center[k] + reach) / cell_)), 0, dims_[k] - 1);
    }
    for (int z = a.z(); z <= b.z(); ++z)
      for (int y = a.y(); y <= b.y(); ++y)
        for (int x = a.x(); x <= b.x(); ++x) {
          const Vec3 c((x + 0.5) * cell_, (y + 0.5) * cell_, (z + 0.5) * cell_);
          if (r.distance(c) <= margin) out.push_back(index(x, y, z));
        }
    return out;
  }

  /// Tentatively blocks the cells; keeps them only if start and goal stay connected.
  bool try_block(const std::vector<std::size_t>& cells, const Vec3& start, const Vec3& goal) {
    std::vector<std::size_t> newly;
    for (auto c : cells)
      if (!blocked_[c]) {
        blocked_[c] = 1;
        newly.push_back(c);
      }
    if (connected(start, goal)) return true;
    for (auto c : newly) blocked_[c] = 0;
    return false;
  }

 private:
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
  }
  Index3 cell_of(const Vec3& p) const {
    Index3 c;
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(static_cast<int>(std::floor(p[k] / cell_)), 0, dims_[k] - 1);
    return c;
  }

  bool connected(const Vec3& start, const Vec3& goal) const {
    const Index3 s = cell_of(start);
    const Index3 g = cell_of(goal);
    const std::size_t si = index(s.x(), s.y(), s.z());
    const std::size_t gi = index(g.x(), g.y(), g.z());
    if (blocked_[si] || blocked_[gi]) return false;
    std::vector<std::uint8_t> seen(blocked_.size(), 0);
    std::deque<Index3> queue{s};
    seen[si] = 1;
    static constexpr std::array<std::array<int, 3>, 6> kNbr{
        {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    while (!queue.empty()) {
      const Index3 c = queue.front();
      queue.pop_front();
      if (c == g) return true;
      for (const auto& d : kNbr) {
        const Index3 n(c.x() + d[0], c.y() + d[1], c.z() + d[2]);
        if ((n.array() < 0).any() || n.x() >= dims_[0] || n.y() >= dims_[1] || n.z() >= dims_[2]) continue;
        const std::size_t ni = index(n.x(), n.y(), n.z());
        if (seen[ni] || blocked_[ni]) continue;
        seen[ni] = 1;
        queue.push_back(n);
      }
    }
    return false;
  }

  double cell_;
  double inflation_;
  std::array<int, 3> dims_{};
  std::vector<std::uint8_t> blocked_;
};

}  // namespace detail

/// Procedurally places walls and rings. Deterministic in `seed`. Walls are a
/// mix of full-height (drive around), raised (drive under) and low (fly over)
/// slabs; ring inner radii are at least 0.8 m so they can be flown through.
inline Scenario generate_scenario(const ScenarioParams& params, std::uint64_t seed) {
  if ((params.extent.array() <= 0.0).any())
    throw Error(ErrorCode::InvalidArgument, "scenario extent must be positive");
  if (params.walls < 0 || params.rings < 0)
    throw Error(ErrorCode::InvalidArgument, "obstacle counts must be non-negative");

  Scenario sc;
  sc.extent = params.extent;
  sc.wall_count = params.walls;
  sc.ring_count = params.rings;
  sc.seed = seed;
  const auto [ds, dg] = default_endpoints(params.extent, params.ground_height);
  sc.start = params.start.value_or(ds);
  sc.goal = params.goal.value_or(dg);

  Rng rng(mix64(seed, 0x5ce7a810ULL));
  detail::CoarseConnectivity conn(params.extent, 0.5, params.inflation_radius);
  const double volume = params.extent.prod();
  double filled = 0.0;
  const double ex = params.extent.x();
  const double ey = params.extent.y();
  const double ez = params.extent.z();
  const double max_width = std::max(0.5, 0.7 * std::min(ex, ey));

  auto keeps_clear = [&](auto const& obs) {
    return obs.distance(sc.start) >= params.clearance && obs.distance(sc.goal) >= params.clearance;
  };

  for (int i = 0; i < params.walls; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < params.retries_per_obstacle && !placed; ++attempt) {
      Wall w;
      w.along_x = rng.bernoulli(0.5);
      const double kind = rng.uniform();
      w.thickness = rng.uniform(0.2, 0.4);
      if (kind < 0.35) {  // full height
        w.width = std::min(rng.uniform(0.6, 2.0), max_width);
        w.base = 0.0;
        w.height = ez;
      } else if (kind < 0.5) {  // raised, gap underneath
        w.width = std::min(rng.uniform(1.0, 3.0), max_width);
        w.base = rng.uniform(1.0, 1.6);
        w.height = ez - w.base;
      } else {  // low, can be flown over
        w.width = std::min(rng.uniform(1.0, 4.0), max_width);
        w.base = 0.0;
        w.height = rng.uniform(0.5, 2.0);
      }
      w.cx = rng.uniform(0.0, ex);
      w.cy = rng.uniform(0.0, ey);
      const double vol = w.width * w.thickness * w.height;
      if ((filled + vol) / volume > params.max_fill_fraction) continue;
      if (!keeps_clear(w)) continue;
      if (!conn.try_block(conn.cells_for(w), sc.start, sc.goal)) continue;
      filled += vol;
      sc.walls.push_back(w);
      placed = true;
    }
    if (!placed)
      throw Error(ErrorCode::PlacementExhausted, "could not place wall " + std::to_string(i));
  }

  for (int i = 0; i < params.rings; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < params.retries_per_obstacle && !placed; ++attempt) {
      Ring r;
      const double tube = rng.uniform(0.1, 0.2);
      r.inner_radius = rng.uniform(0.8, 1.2);
      r.outer_radius = r.inner_radius + 2.0 * tube;
      r.center = Vec3(rng.uniform(0.0, ex), rng.uniform(0.0, ey),
                      rng.uniform(std::min(1.2, 0.5 * ez), std::max(0.5 * ez, ez - 1.2)));
      if (rng.bernoulli(0.7)) {
        const double yaw = rng.uniform(0.0, 2.0 * kPi);
        r.axis = Vec3(std::cos(yaw), std::sin(yaw), 0.0);
      } else {
        r.axis = Vec3::UnitZ();
      }
      const double vol = 2.0 * kPi * kPi * r.major_radius() * tube * tube;
      if ((filled + vol) / volume > params.max_fill_fraction) continue;
      if (!keeps_clear(r)) continue;
      if (!conn.try_block(conn.cells_for(r), sc.start, sc.goal)) continue;
      filled += vol;
      sc.rings.push_back(r);
      placed = true;
    }
    if (!placed)
      throw Error(ErrorCode::PlacementExhausted, "could not place ring " + std::to_string(i));
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Voxel grid
// ---------------------------------------------------------------------------

enum class Layer : std::uint8_t { GroundTruth, Sensed, Completed };

inline std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::GroundTruth: return "ground_truth";
    case Layer::Sensed: return "sensed";
    case Layer::Completed: return "completed";
  }
  return "unknown";
}

/// Dense occupancy lattice with ground-truth, sensed and completed layers.
/// Inflated copies of the ground-truth and completed layers are maintained
/// incrementally; occupancy queries by point use the inflated copies.
class VoxelGrid {
 public:
  static constexpr std::uint8_t kTruth = 1 << 0;
  static constexpr std::uint8_t kTruthInflated = 1 << 1;
  static constexpr std::uint8_t kSensed = 1 << 2;
  static constexpr std::uint8_t kObserved = 1 << 3;
  static constexpr std::uint8_t kCompleted = 1 << 4;
  static constexpr std::uint8_t kCompletedInflated = 1 << 5;
  static constexpr std::uint8_t kOccluded = 1 << 6;

  VoxelGrid() = default;

  VoxelGrid(const Vec3& origin, double resolution, const Index3& dims, double inflation_radius)
      : origin_(origin), resolution_(resolution), dims_(dims), inflation_radius_(inflation_radius) {
    if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
    if ((dims.array() <= 0).any()) throw Error(ErrorCode::InvalidArgument, "grid dims must be positive");
    if (inflation_radius < 0.0) throw Error(ErrorCode::InvalidArgument, "inflation radius must be >= 0");
    flags_.assign(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z(), 0);
    const int r = static_cast<int>(std::floor(inflation_radius / resolution + 1e-9));
    const double r2 = (inflation_radius / resolution) * (inflation_radius / resolution) + 1e-9;
    for (int z = -r; z <= r; ++z)
      for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x)
          if (x * x + y * y + z * z <= r2) offsets_.emplace_back(x, y, z);
  }

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Index3& dims() const { return dims_; }
  double inflation_radius() const { return inflation_radius_; }
  Vec3 extent() const { return dims_.cast<double>() * resolution_; }
  std::size_t voxel_count() const { return flags_.size(); }

  bool in_bounds(const Index3& v) const {
    return (v.array() >= 0).all() && v.x() < dims_.x() && v.y() < dims_.y() && v.z() < dims_.z();
  }
  bool contains(const Vec3& p) const {
    const Vec3 rel = p - origin_;
    return (rel.array() >= 0.0).all() && (rel.array() < extent().array()).all();
  }
  Index3 voxel_of(const Vec3& p) const {
    const Vec3 rel = (p - origin_) / resolution_;
    return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
            static_cast<int>(std::floor(rel.z()))};
  }
  Vec3 center(const Index3& v) const { return origin_ + (v.cast<double>().array() + 0.5).matrix() * resolution_; }
  std::size_t linear(const Index3& v) const {
    return (static_cast<std::size_t>(v.z()) * dims_.y() + v.y()) * dims_.x() + v.x();
  }
  Index3 unlinear(std::size_t i) const {
    const auto nx = static_cast<std::size_t>(dims_.x());
    const auto ny = static_cast<std::size_t>(dims_.y());
    return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny), static_cast<int>(i / (nx * ny))};
  }

  std::uint8_t flags(std::size_t i) const { return flags_[i]; }
  bool has(std::size_t i, std::uint8_t bit) const { return (flags_[i] & bit) != 0; }

  /// Raw (non-inflated) occupancy of a voxel in a layer.
  bool raw_occupied(std::size_t i, Layer layer) const {
    switch (layer) {
      case Layer::GroundTruth: return has(i, kTruth);
      case Layer::Sensed: return has(i, kSensed);
      case Layer::Completed: return has(i, kCompleted);
    }
    return true;
  }

  /// Inflated occupancy of a voxel; only ground-truth and completed layers carry inflation.
  bool inflated_occupied(std::size_t i, Layer layer) const {
    if (layer == Layer::GroundTruth) return has(i, kTruthInflated);
    if (layer == Layer::Completed) return has(i, kCompletedInflated);
    throw Error(ErrorCode::InvalidArgument, "inflated occupancy only exists for ground_truth and completed");
  }

  /// Point query against the inflated layer. Out-of-bounds points are occupied.
  bool is_occupied(const Vec3& p, Layer layer) const {
    const Index3 v = voxel_of(p);
    if (!in_bounds(v)) return true;
    return inflated_occupied(linear(v), layer);
  }

  void set_truth(std::size_t i) { flags_[i] |= kTruth; }

  /// Recomputes the inflated ground-truth layer from scratch.
  void inflate_ground_truth() {
    for (auto& f : flags_) f &= static_cast<std::uint8_t>(~kTruthInflated);
    for (std::size_t i = 0; i < flags_.size(); ++i)
      if (flags_[i] & kTruth) stamp(i, kTruthInflated);
  }

  void mark_observed(std::size_t i) { flags_[i] |= kObserved; }
  void mark_sensed(std::size_t i) {
    flags_[i] |= kSensed;
    mark_completed(i);
  }
  /// Adds a voxel to the completed layer and updates its inflation incrementally.
  bool mark_completed(std::size_t i) {
    if (flags_[i] & kCompleted) return false;
    flags_[i] |= kCompleted;
    stamp(i, kCompletedInflated);
    return true;
  }

  void clear_occluded() {
    for (auto i : occluded_) flags_[i] &= static_cast<std::uint8_t>(~kOccluded);
    occluded_.clear();
  }
  void mark_occluded(std::size_t i) {
    if (!(flags_[i] & kOccluded)) {
      flags_[i] |= kOccluded;
      occluded_.push_back(i);
    }
  }
  /// Voxels inside the sensor volume but hidden during the latest sensing pass.
  const std::vector<std::size_t>& occluded() const { return occluded_; }
  int sense_cycles() const { return sense_cycles_; }
  void note_sense_cycle() { ++sense_cycles_; }

  std::size_t count(std::uint8_t bit) const {
    return static_cast<std::size_t>(std::count_if(flags_.begin(), flags_.end(),
                                                  [bit](std::uint8_t f) { return (f & bit) != 0; }));
  }

 private:
  void stamp(std::size_t i, std::uint8_t bit) {
    const Index3 c = unlinear(i);
    for (const auto& o : offsets_) {
      const Index3 n = c + o;
      if (in_bounds(n)) flags_[linear(n)] |= bit;
    }
  }

  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 0.1;
  Index3 dims_ = Index3::Zero();
  double inflation_radius_ = 0.0;
  std::vector<std::uint8_t> flags_;
  std::vector<Index3> offsets_;
  std::vector<std::size_t> occluded_;
  int sense_cycles_ = 0;
};

/// Fills the ground-truth layer by testing every voxel centre against the
/// scenario's obstacles, then applies inflation as a spherical dilation.
inline VoxelGrid rasterize(const Scenario& sc, double resolution, double inflation_radius = 0.3) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  for (const auto& w : sc.walls)
    if (std::min({w.width, w.thickness, w.height}) < resolution)
      throw Error(ErrorCode::ResolutionTooCoarse, "wall thinner than one voxel");
  for (const auto& r : sc.rings)
    if (r.outer_radius - r.inner_radius < resolution)
      throw Error(ErrorCode::ResolutionTooCoarse, "ring tube thinner than one voxel");

  Index3 dims;
  for (int k = 0; k < 3; ++k)
    dims[k] = std::max(1, static_cast<int>(std::ceil(sc.extent[k] / resolution - 1e-9)));
  VoxelGrid grid(Vec3::Zero(), resolution, dims, inflation_radius);

  auto clamp_range = [&](const Vec3& lo, const Vec3& hi) {
    Index3 a = grid.voxel_of(lo);
    Index3 b = grid.voxel_of(hi);
    for (int k = 0; k < 3; ++k) {
      a[k] = std::clamp(a[k], 0, dims[k] - 1);
      b[k] = std::clamp(b[k], 0, dims[k] - 1);
    }
    return std::pair{a, b};
  };

  for (const auto& w : sc.walls) {
    const auto [a, b] = clamp_range(w.min_corner(), w.max_corner());
    for (int z = a.z(); z <= b.z(); ++z)
      for (int y = a.y(); y <= b.y(); ++y)
        for (int x = a.x(); x <= b.x(); ++x) {
          const Index3 v(x, y, z);
          if (w.contains(grid.center(v))) grid.set_truth(grid.linear(v));
        }
  }
  for (const auto& r : sc.rings) {
    const Vec3 reach = Vec3::Constant(r.outer_radius);
    const auto [a, b] = clamp_range(r.center - reach, r.center + reach);
    for (int z = a.z(); z <= b.z(); ++z)
      for (int y = a.y(); y <= b.y(); ++y)
        for (int x = a.x(); x <= b.x(); ++x) {
          const Index3 v(x, y, z);
          if (r.contains(grid.center(v))) grid.set_truth(grid.linear(v));
        }
  }
  grid.inflate_ground_truth();
  return grid;
}

// ---------------------------------------------------------------------------
// Sensing and completion
// ---------------------------------------------------------------------------

/// Pinhole-style depth sensor: a rectangular frustum around the viewing
/// direction given by yaw/pitch, truncated at max_range.
struct SensorModel {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double horizontal_fov = 2.0 * kPi / 3.0;
  double vertical_fov = kPi / 3.0;
  double max_range = 5.0;

  void validate() const {
    if (!(max_range > 0.0)) throw Error(ErrorCode::InvalidArgument, "sensor range must be positive");
    for (double f : {horizontal_fov, vertical_fov})
      if (!(f > 0.0 && f <= kPi)) throw Error(ErrorCode::InvalidArgument, "sensor fov must lie in (0, pi]");
  }

  bool in_frustum(const Vec3& p) const {
    const Vec3 w = p - position;
    const double range = w.norm();
    if (range > max_range) return false;
    if (range == 0.0) return true;
    const Vec3 fwd(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
    const Vec3 left(-std::sin(yaw), std::cos(yaw), 0.0);
    const Vec3 up = fwd.cross(left);
    const double x = w.dot(fwd);
    if (x <= 0.0) return false;
    return std::abs(std::atan2(w.dot(left), x)) <= 0.5 * horizontal_fov &&
           std::abs(std::atan2(w.dot(up), x)) <= 0.5 * vertical_fov;
  }
};

/// Walks the voxels pierced by the segment from `from` to `to` in order
/// (Amanatides-Woo). The visitor returns false to stop early. Returns false if
/// stopped, true if the walk reached the voxel containing `to`.
template <typename Visitor>
bool walk_segment(const VoxelGrid& grid, const Vec3& from, const Vec3& to, Visitor&& visit) {
  Index3 cur = grid.voxel_of(from);
  const Index3 last = grid.voxel_of(to);
  const Vec3 d = to - from;
  const double len = d.norm();
  std::array<int, 3> step{};
  std::array<double, 3> t_max{};
  std::array<double, 3> t_delta{};
  const double res = grid.resolution();
  for (int k = 0; k < 3; ++k) {
    if (len == 0.0 || d[k] == 0.0) {
      step[k] = 0;
      t_max[k] = std::numeric_limits<double>::infinity();
      t_delta[k] = std::numeric_limits<double>::infinity();
      continue;
    }
    const double dir = d[k] / len;
    step[k] = dir > 0.0 ? 1 : -1;
    const double boundary = grid.origin()[k] + (cur[k] + (step[k] > 0 ? 1 : 0)) * res;
    t_max[k] = (boundary - from[k]) / dir;
    t_delta[k] = res / std::abs(dir);
  }
  const int max_steps = (last - cur).cwiseAbs().sum() + 3;
  for (int n = 0; n <= max_steps; ++n) {
    if (!visit(cur)) return false;
    if (cur == last) return true;
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    if (t_max[axis] > len + 1e-9) return true;
    cur[axis] += step[axis];
    t_max[axis] += t_delta[axis];
  }
  return true;
}

/// True when no voxel along the segment (endpoints included) is raw-occupied in `layer`.
inline bool segment_clear(const VoxelGrid& grid, const Vec3& a, const Vec3& b, Layer layer) {
  return walk_segment(grid, a, b, [&](const Index3& v) {
    return grid.in_bounds(v) && !grid.raw_occupied(grid.linear(v), layer);
  });
}

/// Same traversal against the inflated layer (the point-query semantics of
/// VoxelGrid::is_occupied). A segment lying on a voxel face (a ground run at a
/// face height, say) is checked on both sides, since round-off decides which
/// side any point of the curve it approximates falls on.
inline bool path_clear(const VoxelGrid& grid, const Vec3& a, const Vec3& b, Layer layer) {
  auto clear = [&](const Vec3& s, const Vec3& e) {
    return walk_segment(grid, s, e, [&](const Index3& v) {
      return grid.in_bounds(v) && !grid.inflated_occupied(grid.linear(v), layer);
    });
  };
  if (!clear(a, b)) return false;
  constexpr double kFaceTol = 1e-7;
  for (int k = 0; k < 3; ++k) {
    const double ua = (a[k] - grid.origin()[k]) / grid.resolution();
    const double ub = (b[k] - grid.origin()[k]) / grid.resolution();
    const double face = std::round(ua);
    if (std::abs(ua - face) * grid.resolution() > kFaceTol || std::abs(ub - face) * grid.resolution() > kFaceTol)
      continue;
    Vec3 shift = Vec3::Zero();
    shift[k] = 2.0 * kFaceTol;
    if (!clear(a + shift, b + shift) || !clear(a - shift, b - shift)) return false;
  }
  return true;
}

struct SenseStats {
  std::size_t visible = 0;
  std::size_t occluded = 0;
  std::size_t new_occupied = 0;
};

/// Marks every voxel whose centre lies in the sensor frustum and has a clear
/// line of sight to the sensor. Visible ground-truth-occupied voxels join the
/// sensed layer (and therefore the completed layer). Hidden voxels in the
/// frustum are recorded as occluded for the completion stage.
inline SenseStats sense(VoxelGrid& grid, const SensorModel& sensor) {
  sensor.validate();
  if (!grid.contains(sensor.position))
    throw Error(ErrorCode::InvalidArgument, "sensor must be inside the grid");
  grid.clear_occluded();
  grid.note_sense_cycle();
  SenseStats stats;
  const Index3 origin_voxel = grid.voxel_of(sensor.position);
  const Vec3 reach = Vec3::Constant(sensor.max_range);
  Index3 a = grid.voxel_of(sensor.position - reach);
  Index3 b = grid.voxel_of(sensor.position + reach);
  for (int k = 0; k < 3; ++k) {
    a[k] = std::clamp(a[k], 0, grid.dims()[k] - 1);
    b[k] = std::clamp(b[k], 0, grid.dims()[k] - 1);
  }
  for (int z = a.z(); z <= b.z(); ++z)
    for (int y = a.y(); y <= b.y(); ++y)
      for (int x = a.x(); x <= b.x(); ++x) {
        const Index3 v(x, y, z);
        const Vec3 c = grid.center(v);
        if (!sensor.in_frustum(c)) continue;
        const bool visible = walk_segment(grid, sensor.position, c, [&](const Index3& w) {
          if (w == v || w == origin_voxel) return true;
          return !grid.in_bounds(w) || !grid.raw_occupied(grid.linear(w), Layer::GroundTruth);
        });
        const std::size_t i = grid.linear(v);
        if (visible) {
          ++stats.visible;
          grid.mark_observed(i);
          if (grid.raw_occupied(i, Layer::GroundTruth) && !grid.raw_occupied(i, Layer::Sensed)) {
            grid.mark_sensed(i);
            ++stats.new_occupied;
          }
        } else {
          ++stats.occluded;
          grid.mark_occluded(i);
        }
      }
  return stats;
}

/// Stand-in for a scene-completion network: each occluded ground-truth-occupied
/// voxel of the latest sensing pass is revealed independently with probability
/// `accuracy`. The coin for a voxel is a hash of (seed, voxel index), so the
/// outcome is stable across cycles and the completed layer never shrinks.
inline std::size_t oracle_complete(VoxelGrid& grid, double accuracy, std::uint64_t seed) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "accuracy must lie in [0, 1]");
  std::size_t revealed = 0;
  for (std::size_t i : grid.occluded()) {
    if (!grid.raw_occupied(i, Layer::GroundTruth) || grid.raw_occupied(i, Layer::Completed)) continue;
    if (unit_double(mix64(seed, static_cast<std::uint64_t>(i))) < accuracy) {
      grid.mark_completed(i);
      ++revealed;
    }
  }
  return revealed;
}

}  // namespace agplan

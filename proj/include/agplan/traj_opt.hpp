#pragma once

#include "agplan/bspline.hpp"
#include "agplan/common.hpp"
#include "agplan/lbfgs.hpp"
#include "agplan/voxel_map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace agplan {

// ---------------------------------------------------------------------------
// Initial trajectory
// ---------------------------------------------------------------------------

struct InitialTrajectoryConfig {
  double spacing = 0.5;
  /// Maximum lateral offset of interior control points (m).
  double jitter = 0.1;
  int degree = 3;
  /// Nominal speed used to pick the knot spacing (dt = spacing / speed).
  double speed = 1.5;
};

/// Obstacle-agnostic seed curve: control points along the start-goal segment
/// with seeded horizontal jitter, the first/last `degree` control points
/// pinning the start state and a rest state at the goal.
inline BSplineTrajectory build_initial_trajectory(const Vec3& start, const Vec3& goal, std::uint64_t seed,
                                                  const InitialTrajectoryConfig& cfg = {},
                                                  const Vec3& start_velocity = Vec3::Zero()) {
  if (!(cfg.spacing > 0.0 && cfg.speed > 0.0 && cfg.jitter >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "invalid initial trajectory config");
  const Vec3 span = goal - start;
  const double len = span.norm();
  if (len <= 0.0) throw Error(ErrorCode::InvalidArgument, "start and goal coincide");
  const auto n = static_cast<std::size_t>(std::max(2.0, std::round(len / cfg.spacing) + 1.0));
  Vec3 lateral(-span.y(), span.x(), 0.0);
  lateral = lateral.norm() > 1e-9 ? lateral.normalized() : Vec3::UnitX();

  Rng rng(mix64(seed, 0x1417ULL));
  const double dt = cfg.spacing / cfg.speed;
  const int p = cfg.degree;
  std::vector<Vec3> ctrl = boundary_control_points(p, start, start_velocity, dt, false);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(n - 1);
    ctrl.push_back(start + f * span + rng.uniform(-cfg.jitter, cfg.jitter) * lateral);
  }
  for (const auto& q : boundary_control_points(p, goal, Vec3::Zero(), dt, true)) ctrl.push_back(q);
  return BSplineTrajectory(p, std::move(ctrl), dt);
}

// ---------------------------------------------------------------------------
// Anchor pairs
// ---------------------------------------------------------------------------

/// Obstacle-surface point `p` and unit escape direction `v` attached to
/// control point `index`; `obstacle` numbers the surfaces crossed along v.
struct AnchorPair {
  std::size_t index = 0;
  int obstacle = 0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::UnitZ();
};

/// Signed distance of a control point beyond the anchor surface along v.
inline double obstacle_distance(const Vec3& q, const AnchorPair& pair) { return (q - pair.p).dot(pair.v); }

namespace detail {

inline std::vector<double> cumulative_length(std::span<const Vec3> pts) {
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  return cum;
}

inline Vec3 point_at_fraction(std::span<const Vec3> pts, const std::vector<double>& cum, double f) {
  if (pts.size() == 1 || cum.back() <= 0.0) return pts.front();
  const double s = std::clamp(f, 0.0, 1.0) * cum.back();
  const auto it = std::upper_bound(cum.begin(), cum.end(), s);
  if (it == cum.end()) return pts.back();
  const auto hi = static_cast<std::size_t>(it - cum.begin());
  const std::size_t lo = hi - 1;
  const double seg = cum[hi] - cum[lo];
  const double a = seg > 0.0 ? (s - cum[lo]) / seg : 0.0;
  return (1.0 - a) * pts[lo] + a * pts[hi];
}

}  // namespace detail

/// Guidance point matched to each control point of `segment` by normalised arc length.
inline std::vector<Vec3> guidance_targets(const BSplineTrajectory& initial, std::span<const Vec3> guidance,
                                          std::pair<std::size_t, std::size_t> segment) {
  const auto& q = initial.control_points();
  const std::span<const Vec3> seg_pts(q.data() + segment.first, segment.second - segment.first + 1);
  const auto seg_cum = detail::cumulative_length(seg_pts);
  const auto guide_cum = detail::cumulative_length(guidance);
  std::vector<Vec3> out;
  out.reserve(seg_pts.size());
  for (std::size_t k = 0; k < seg_pts.size(); ++k) {
    const double frac = seg_cum.back() > 0.0 ? seg_cum[k] / seg_cum.back() : 0.0;
    out.push_back(detail::point_at_fraction(guidance, guide_cum, frac));
  }
  return out;
}

/// Occupied curve point attributed to a free control point.
struct CurveHit {
  std::size_t index = 0;
  Vec3 point = Vec3::Zero();
};

/// For each occupied control point of `segment`, marches from the point toward
/// the arc-length-matched guidance point and emits one anchor per obstacle
/// surface crossed on the way out. A free control point listed in `hits`
/// instead marches from its occupied curve point toward itself.
inline std::vector<AnchorPair> generate_anchor_pairs(const BSplineTrajectory& initial,
                                                     std::span<const Vec3> guidance,
                                                     std::pair<std::size_t, std::size_t> segment,
                                                     const VoxelGrid& grid,
                                                     Layer layer = Layer::Completed,
                                                     std::span<const CurveHit> hits = {}) {
  const auto& q = initial.control_points();
  if (segment.first > segment.second || segment.second >= q.size())
    throw Error(ErrorCode::InvalidArgument, "segment indices out of range");
  if (guidance.empty()) throw Error(ErrorCode::InvalidArgument, "empty guidance path");

  const auto targets = guidance_targets(initial, guidance, segment);
  const double step = 0.25 * grid.resolution();

  std::vector<AnchorPair> out;
  for (std::size_t i = segment.first; i <= segment.second; ++i) {
    Vec3 origin = q[i];
    Vec3 target = targets[i - segment.first];
    if (!grid.is_occupied(origin, layer)) {
      const auto hit = std::find_if(hits.begin(), hits.end(), [i](const CurveHit& h) { return h.index == i; });
      if (hit == hits.end() || !grid.is_occupied(hit->point, layer)) continue;
      // The free control point itself is the escape target for its occupied curve point.
      origin = hit->point;
      if ((q[i] - origin).norm() > 1e-6) target = q[i];
    }
    const Vec3 dir = target - origin;
    const double reach = dir.norm();
    if (reach < 1e-9) continue;
    const Vec3 v = dir / reach;

    int obstacle = 0;
    bool inside = true;
    double t_in = 0.0;
    for (double t = step;; t += step) {
      const Vec3 pt = origin + t * v;
      if (!grid.contains(pt)) {
        if (inside) throw Error(ErrorCode::MarchEscapedGrid, "march left the grid inside an obstacle");
        break;
      }
      const bool occ = grid.is_occupied(pt, layer);
      if (inside && !occ) {
        // Refine the crossing between the last occupied and first free sample.
        double lo = t_in;
        double hi = t;
        for (int it = 0; it < 30; ++it) {
          const double mid = 0.5 * (lo + hi);
          (grid.is_occupied(origin + mid * v, layer) ? lo : hi) = mid;
        }
        out.push_back({i, obstacle++, origin + hi * v, v});
        inside = false;
      } else if (!inside && occ) {
        inside = true;
      }
      if (inside) t_in = t;
      if (!inside && t >= reach) break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cost terms
// ---------------------------------------------------------------------------

struct DynamicLimits {
  double v_max = 2.0;
  double a_max = 3.0;
  double j_max = 20.0;
};

/// Scalar cost and its gradient with respect to every control point.
struct TermValue {
  double cost = 0.0;
  std::vector<Vec3> grad;

  explicit TermValue(std::size_t n = 0) : grad(n, Vec3::Zero()) {}
  TermValue& operator+=(const TermValue& o) {
    cost += o.cost;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += o.grad[i];
    return *this;
  }
};

namespace detail {

// Finite-difference stencils for derivative control points of order 0..3.
inline constexpr std::array<std::array<double, 4>, 4> kStencil{{
    {1.0, 0.0, 0.0, 0.0},
    {-1.0, 1.0, 0.0, 0.0},
    {1.0, -2.0, 1.0, 0.0},
    {-1.0, 3.0, -3.0, 1.0},
}};

inline Vec3 difference(const std::vector<Vec3>& q, std::size_t i, int order, double dt) {
  Vec3 d = Vec3::Zero();
  for (int k = 0; k <= order; ++k) d += kStencil[static_cast<std::size_t>(order)][static_cast<std::size_t>(k)] * q[i + static_cast<std::size_t>(k)];
  return d / std::pow(dt, order);
}

inline void scatter(std::vector<Vec3>& grad, std::size_t i, int order, double dt, const Vec3& g) {
  const double inv = 1.0 / std::pow(dt, order);
  for (int k = 0; k <= order; ++k)
    grad[i + static_cast<std::size_t>(k)] += kStencil[static_cast<std::size_t>(order)][static_cast<std::size_t>(k)] * inv * g;
}

/// Per-axis one-sided quadratic penalty on derivative control points of `order`.
inline TermValue limit_penalty(const BSplineTrajectory& traj, int order, double limit) {
  const auto& q = traj.control_points();
  TermValue out(q.size());
  if (traj.degree() < order || q.size() <= static_cast<std::size_t>(order)) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(order) < q.size(); ++i) {
    const Vec3 d = difference(q, i, order, traj.knot_spacing());
    Vec3 g = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      const double excess = std::abs(d[k]) - limit;
      if (excess > 0.0) {
        out.cost += excess * excess;
        g[k] = 2.0 * excess * (d[k] > 0.0 ? 1.0 : -1.0);
      }
    }
    if (!g.isZero()) scatter(out.grad, i, order, traj.knot_spacing(), g);
  }
  return out;
}

inline double max_norm(const BSplineTrajectory& traj, int order) {
  const auto& q = traj.control_points();
  double m = 0.0;
  if (traj.degree() < order) return m;
  for (std::size_t i = 0; i + static_cast<std::size_t>(order) < q.size(); ++i)
    m = std::max(m, difference(q, i, order, traj.knot_spacing()).norm());
  return m;
}

}  // namespace detail

/// Sum of squared jerk control points.
inline TermValue cost_smooth(const BSplineTrajectory& traj) {
  const auto& q = traj.control_points();
  TermValue out(q.size());
  if (q.size() < 4) return out;
  const double dt = traj.knot_spacing();
  for (std::size_t i = 0; i + 3 < q.size(); ++i) {
    const Vec3 j = detail::difference(q, i, 3, dt);
    out.cost += j.squaredNorm();
    detail::scatter(out.grad, i, 3, dt, 2.0 * j);
  }
  return out;
}

/// One-sided penalty on anchor distances: zero when D >= s_f, cubic for small
/// violations and quadratic beyond s_f, joined with a continuous slope.
inline TermValue cost_collision(const BSplineTrajectory& traj, std::span<const AnchorPair> pairs,
                                double safe_clearance) {
  const auto& q = traj.control_points();
  TermValue out(q.size());
  const double sf = safe_clearance;
  for (const auto& pr : pairs) {
    if (pr.index >= q.size()) throw Error(ErrorCode::InvalidArgument, "anchor index out of range");
    const double x = sf - obstacle_distance(q[pr.index], pr);
    if (x <= 0.0) continue;
    double slope;
    if (x <= sf) {
      out.cost += x * x * x;
      slope = 3.0 * x * x;
    } else {
      out.cost += 3.0 * sf * x * x - 3.0 * sf * sf * x + sf * sf * sf;
      slope = 6.0 * sf * x - 3.0 * sf * sf;
    }
    out.grad[pr.index] -= slope * pr.v;
  }
  return out;
}

inline TermValue cost_velocity(const BSplineTrajectory& traj, const DynamicLimits& lim) {
  return detail::limit_penalty(traj, 1, lim.v_max);
}
inline TermValue cost_acceleration(const BSplineTrajectory& traj, const DynamicLimits& lim) {
  return detail::limit_penalty(traj, 2, lim.a_max);
}
inline TermValue cost_jerk(const BSplineTrajectory& traj, const DynamicLimits& lim) {
  return detail::limit_penalty(traj, 3, lim.j_max);
}

/// J_v + J_a + J_j.
inline TermValue cost_feasibility(const BSplineTrajectory& traj, const DynamicLimits& lim) {
  TermValue out = cost_velocity(traj, lim);
  out += cost_acceleration(traj, lim);
  out += cost_jerk(traj, lim);
  return out;
}

/// Curvature penalty over runs of three consecutive ground-tagged control
/// points. The turn angle is measured in the horizontal plane and normalised by
/// the length of the incoming leg. With `strict`, coincident ground points
/// raise DegenerateSpacing; otherwise those triples are skipped.
inline TermValue cost_curvature(const BSplineTrajectory& traj, double c_max, bool strict = true) {
  const auto& q = traj.control_points();
  const auto& tags = traj.mode_tags();
  TermValue out(q.size());
  for (std::size_t i = 1; i + 1 < q.size(); ++i) {
    if (tags[i - 1] != Mode::Ground || tags[i] != Mode::Ground || tags[i + 1] != Mode::Ground) continue;
    const Eigen::Vector2d d1 = (q[i] - q[i - 1]).head<2>();
    const Eigen::Vector2d d2 = (q[i + 1] - q[i]).head<2>();
    const double l1 = d1.norm();
    const double l2 = d2.norm();
    if (l1 < 1e-9 || l2 < 1e-9) {
      if (strict) throw Error(ErrorCode::DegenerateSpacing, "coincident ground control points");
      continue;
    }
    const double delta = wrap_angle(std::atan2(d2.y(), d2.x()) - std::atan2(d1.y(), d1.x()));
    const double turn = std::abs(delta);
    const double c = turn / l1;
    if (c <= c_max) continue;
    const double excess = c - c_max;
    out.cost += excess * excess;
    const double sgn = delta >= 0.0 ? 1.0 : -1.0;
    // d(turn)/d(d1) and d(turn)/d(d2) from d(atan2(y, x)) = (-y, x) / |.|^2.
    const Eigen::Vector2d dturn_d1 = -sgn * Eigen::Vector2d(-d1.y(), d1.x()) / (l1 * l1);
    const Eigen::Vector2d dturn_d2 = sgn * Eigen::Vector2d(-d2.y(), d2.x()) / (l2 * l2);
    const Eigen::Vector2d dc_d1 = dturn_d1 / l1 - turn / (l1 * l1 * l1) * d1;
    const Eigen::Vector2d dc_d2 = dturn_d2 / l1;
    const Eigen::Vector2d g1 = 2.0 * excess * dc_d1;
    const Eigen::Vector2d g2 = 2.0 * excess * dc_d2;
    out.grad[i].head<2>() += g1 - g2;
    out.grad[i - 1].head<2>() -= g1;
    out.grad[i + 1].head<2>() += g2;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimisation
// ---------------------------------------------------------------------------

struct CostWeights {
  double lambda_smooth = 1.0;
  double lambda_collision = 10.0;
  double lambda_feasibility = 1.0;
  double lambda_curvature = 1.0;
  double safe_clearance = 0.3;
  double c_max = 2.0;
  DynamicLimits limits;

  void validate() const {
    if (lambda_smooth < 0.0 || lambda_collision < 0.0 || lambda_feasibility < 0.0 || lambda_curvature < 0.0 ||
        c_max < 0.0)
      throw Error(ErrorCode::InvalidArgument, "cost weights must be non-negative");
    if (!(safe_clearance > 0.0)) throw Error(ErrorCode::InvalidArgument, "safe clearance must be positive");
    if (!(limits.v_max > 0.0 && limits.a_max > 0.0 && limits.j_max > 0.0))
      throw Error(ErrorCode::InvalidArgument, "dynamic limits must be positive");
  }
};

struct CostBreakdown {
  double smooth = 0.0;
  double collision = 0.0;
  double velocity = 0.0;
  double acceleration = 0.0;
  double jerk = 0.0;
  double curvature = 0.0;
};

/// Weighted objective and breakdown; `grad` receives the gradient of the total.
inline double total_cost(const BSplineTrajectory& traj, std::span<const AnchorPair> pairs, const CostWeights& w,
                         std::vector<Vec3>* grad = nullptr, CostBreakdown* parts = nullptr) {
  const TermValue s = cost_smooth(traj);
  const TermValue c = cost_collision(traj, pairs, w.safe_clearance);
  const TermValue v = cost_velocity(traj, w.limits);
  const TermValue a = cost_acceleration(traj, w.limits);
  const TermValue j = cost_jerk(traj, w.limits);
  const TermValue n = cost_curvature(traj, w.c_max, false);
  if (parts) *parts = {s.cost, c.cost, v.cost, a.cost, j.cost, n.cost};
  if (grad) {
    grad->assign(traj.size(), Vec3::Zero());
    for (std::size_t i = 0; i < traj.size(); ++i)
      (*grad)[i] = w.lambda_smooth * s.grad[i] + w.lambda_collision * c.grad[i] +
                   w.lambda_feasibility * (v.grad[i] + a.grad[i] + j.grad[i]) + w.lambda_curvature * n.grad[i];
  }
  return w.lambda_smooth * s.cost + w.lambda_collision * c.cost +
         w.lambda_feasibility * (v.cost + a.cost + j.cost) + w.lambda_curvature * n.cost;
}

/// Largest derivative-limit violation ratio, combined with the time-scaling
/// exponents: r = max(r_v, sqrt(r_a), cbrt(r_j)).
inline double limit_ratio(const BSplineTrajectory& traj, const DynamicLimits& lim) {
  const double rv = detail::max_norm(traj, 1) / lim.v_max;
  const double ra = detail::max_norm(traj, 2) / lim.a_max;
  const double rj = detail::max_norm(traj, 3) / lim.j_max;
  return std::max({rv, std::sqrt(ra), std::cbrt(rj)});
}

inline bool within_limits(const BSplineTrajectory& traj, const DynamicLimits& lim, double tol = 1e-9) {
  return detail::max_norm(traj, 1) <= lim.v_max * (1.0 + tol) &&
         detail::max_norm(traj, 2) <= lim.a_max * (1.0 + tol) &&
         detail::max_norm(traj, 3) <= lim.j_max * (1.0 + tol);
}

struct OptimizationReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  CostBreakdown breakdown;
  double gradient_norm = 0.0;
  double post_refine_scale = 1.0;
  bool feasible = false;
  LbfgsStatus status = LbfgsStatus::IterationCap;
  std::vector<double> cost_trace;
};

struct OptimizerParams {
  LbfgsParams lbfgs;
};

/// Minimises the weighted objective over the interior control points; the
/// first and last `degree` control points (the boundary states) stay fixed.
inline std::pair<BSplineTrajectory, OptimizationReport> optimize(const BSplineTrajectory& traj,
                                                                 std::span<const AnchorPair> pairs,
                                                                 const CostWeights& weights,
                                                                 const OptimizerParams& params = {}) {
  weights.validate();
  const auto p = static_cast<std::size_t>(traj.degree());
  if (traj.size() <= 2 * p) throw Error(ErrorCode::InvalidArgument, "no interior control point to optimise");
  const std::size_t first = p;
  const std::size_t count = traj.size() - 2 * p;

  BSplineTrajectory work = traj;
  Eigen::VectorXd x(static_cast<Eigen::Index>(3 * count));
  for (std::size_t i = 0; i < count; ++i) x.segment<3>(static_cast<Eigen::Index>(3 * i)) = traj[first + i];

  std::vector<Vec3> grad;
  auto objective = [&](const Eigen::VectorXd& xv, Eigen::VectorXd& g) {
    auto& q = work.control_points();
    for (std::size_t i = 0; i < count; ++i) q[first + i] = xv.segment<3>(static_cast<Eigen::Index>(3 * i));
    const double f = total_cost(work, pairs, weights, &grad);
    for (std::size_t i = 0; i < count; ++i) g.segment<3>(static_cast<Eigen::Index>(3 * i)) = grad[first + i];
    return f;
  };

  const LbfgsResult res = minimize_lbfgs(objective, x, params.lbfgs);
  if (res.status == LbfgsStatus::Diverged || !std::isfinite(res.cost))
    throw Error(ErrorCode::Diverged, "objective became non-finite");

  auto& q = work.control_points();
  for (std::size_t i = 0; i < count; ++i) q[first + i] = x.segment<3>(static_cast<Eigen::Index>(3 * i));

  OptimizationReport rep;
  rep.iterations = res.iterations;
  rep.initial_cost = res.initial_cost;
  rep.final_cost = total_cost(work, pairs, weights, nullptr, &rep.breakdown);
  rep.gradient_norm = res.gradient_norm;
  rep.status = res.status;
  rep.cost_trace = res.trace;
  bool clear = true;
  for (const auto& pr : pairs)
    if (obstacle_distance(work[pr.index], pr) < weights.safe_clearance - 1e-9) clear = false;
  rep.feasible = clear && within_limits(work, weights.limits);
  return {std::move(work), rep};
}

/// Restores dynamic feasibility by stretching the knot spacing: if any
/// derivative limit is exceeded, dt is multiplied by r = max(r_v, sqrt(r_a),
/// cbrt(r_j)). Control point positions are untouched. Returns the scale applied.
inline double post_refine(BSplineTrajectory& traj, const DynamicLimits& lim) {
  const double r = limit_ratio(traj, lim);
  if (r <= 1.0) return 1.0;
  const double scale = r * (1.0 + 1e-12);
  traj.set_knot_spacing(traj.knot_spacing() * scale);
  return scale;
}

}  // namespace agplan

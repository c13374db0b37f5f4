#pragma once

#include "agplan/common.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace agplan {

inline constexpr int kMaxSplineDegree = 5;

namespace detail {

constexpr double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

constexpr double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

inline Eigen::MatrixXd make_basis_matrix(int p) {
  // Closed form of the uniform B-spline basis in the power basis:
  // M[i][j] = C(p,i)/p! * sum_{s=j}^{p} (-1)^{s-j} C(p+1, s-j) (p-s)^{p-i}
  Eigen::MatrixXd m(p + 1, p + 1);
  for (int i = 0; i <= p; ++i) {
    for (int j = 0; j <= p; ++j) {
      double acc = 0.0;
      for (int s = j; s <= p; ++s) {
        const double sign = ((s - j) % 2 == 0) ? 1.0 : -1.0;
        acc += sign * binomial(p + 1, s - j) * std::pow(static_cast<double>(p - s), p - i);
      }
      m(i, j) = binomial(p, i) * acc / factorial(p);
    }
  }
  return m;
}

}  // namespace detail

/// Constant (p+1)x(p+1) matrix mapping control points of one span to power-basis
/// coefficients: value(u) = [1, u, ..., u^p] * M * [Q_k .. Q_{k+p}]^T.
/// Rows index powers of u, columns index control points.
inline const Eigen::MatrixXd& basis_matrix(int degree) {
  static const std::array<Eigen::MatrixXd, kMaxSplineDegree + 1> table = [] {
    std::array<Eigen::MatrixXd, kMaxSplineDegree + 1> t;
    for (int p = 0; p <= kMaxSplineDegree; ++p) t[p] = detail::make_basis_matrix(p);
    return t;
  }();
  if (degree < 0 || degree > kMaxSplineDegree)
    throw Error(ErrorCode::InvalidArgument, "spline degree must lie in [0, 5]");
  return table[static_cast<std::size_t>(degree)];
}

/// Uniform B-spline trajectory. Curve time runs over [0, duration()], where
/// duration = (N_c - degree) * knot_spacing. Control point tags carry the
/// ground/aerial mode assignment.
class BSplineTrajectory {
 public:
  BSplineTrajectory() = default;

  BSplineTrajectory(int degree, std::vector<Vec3> control_points, double knot_spacing)
      : degree_(degree), points_(std::move(control_points)), dt_(knot_spacing),
        tags_(points_.size(), Mode::Ground) {
    if (degree_ < 0 || degree_ > kMaxSplineDegree)
      throw Error(ErrorCode::InvalidArgument, "spline degree must lie in [0, 5]");
    if (points_.size() < static_cast<std::size_t>(degree_) + 1)
      throw Error(ErrorCode::InvalidArgument, "need at least degree+1 control points");
    if (!(dt_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "knot spacing must be positive");
  }

  int degree() const { return degree_; }
  std::size_t size() const { return points_.size(); }
  double knot_spacing() const { return dt_; }
  void set_knot_spacing(double dt) {
    if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "knot spacing must be positive");
    dt_ = dt;
  }
  std::size_t span_count() const {
    return points_.size() > static_cast<std::size_t>(degree_) ? points_.size() - static_cast<std::size_t>(degree_) : 0;
  }
  double duration() const { return static_cast<double>(span_count()) * dt_; }

  const std::vector<Vec3>& control_points() const { return points_; }
  std::vector<Vec3>& control_points() { return points_; }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }

  const std::vector<Mode>& mode_tags() const { return tags_; }
  void set_mode_tags(std::vector<Mode> tags) {
    if (tags.size() != points_.size())
      throw Error(ErrorCode::InvalidArgument, "one mode tag per control point");
    tags_ = std::move(tags);
  }

  /// Tags every control point by altitude without moving it.
  void tag_by_altitude(double ground_threshold) {
    tags_.resize(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i)
      tags_[i] = points_[i].z() > ground_threshold ? Mode::Aerial : Mode::Ground;
  }

  /// Tags every control point by altitude against the ground threshold and pins
  /// ground-tagged points onto the driving plane.
  void retag(double ground_threshold, double ground_height) {
    tags_.resize(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (points_[i].z() > ground_threshold) {
        tags_[i] = Mode::Aerial;
      } else {
        tags_[i] = Mode::Ground;
        points_[i].z() = ground_height;
      }
    }
  }

  /// Span index and local parameter u in [0, 1] for curve time t.
  std::pair<std::size_t, double> locate(double t) const {
    const double end = duration();
    const double slack = 1e-9 * std::max(1.0, end);
    if (!(t >= -slack && t <= end + slack))
      throw Error(ErrorCode::OutOfSpan, "time " + std::to_string(t) + " outside [0, " +
                                            std::to_string(end) + "]");
    t = std::clamp(t, 0.0, end);
    const double s = t / dt_;
    auto k = static_cast<std::size_t>(std::floor(s));
    if (k >= span_count()) k = span_count() - 1;
    return {k, s - static_cast<double>(k)};
  }

  Vec3 evaluate(double t) const {
    const auto [k, u] = locate(t);
    const Eigen::MatrixXd& m = basis_matrix(degree_);
    Vec3 out = Vec3::Zero();
    for (int j = 0; j <= degree_; ++j) {
      // Horner over the power basis for column j.
      double w = 0.0;
      for (int i = degree_; i >= 0; --i) w = w * u + m(i, j);
      out += w * points_[k + static_cast<std::size_t>(j)];
    }
    return out;
  }

  /// Control points V_i = (Q_{i+1} - Q_i) / dt of the derivative curve.
  BSplineTrajectory derivative() const {
    if (degree_ == 0) throw Error(ErrorCode::DegreeUnderflow, "degree-0 curve has no derivative");
    std::vector<Vec3> d(points_.size() - 1);
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) d[i] = (points_[i + 1] - points_[i]) / dt_;
    BSplineTrajectory out(degree_ - 1, std::move(d), dt_);
    return out;
  }

  /// Knot-aligned time associated with control point i (its basis-function
  /// centre), clamped to the curve's time range.
  double control_point_time(std::size_t i) const {
    const double t = (static_cast<double>(i) - 0.5 * (degree_ - 1)) * dt_;
    return std::clamp(t, 0.0, duration());
  }

 private:
  int degree_ = 3;
  std::vector<Vec3> points_;
  double dt_ = 1.0;
  std::vector<Mode> tags_;
};

/// Derivative value coefficients of the first span at u=0 (at_end=false) or of
/// the last span at u=1 (at_end=true); order 0 is position.
inline Eigen::VectorXd span_endpoint_weights(int degree, int order, bool at_end, double dt) {
  const Eigen::MatrixXd& m = basis_matrix(degree);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(degree + 1);
  const double scale = std::pow(dt, -order);
  for (int j = 0; j <= degree; ++j) {
    if (!at_end) {
      if (order <= degree) w(j) = detail::factorial(order) * m(order, j) * scale;
    } else {
      double acc = 0.0;
      for (int i = order; i <= degree; ++i)
        acc += detail::factorial(i) / detail::factorial(i - order) * m(i, j);
      w(j) = acc * scale;
    }
  }
  return w;
}

/// Interpolating fit through waypoints assigned to consecutive knots. Endpoint
/// positions are matched exactly; the start/end velocities are imposed (higher
/// boundary derivatives are set to zero) to fill the remaining degrees of freedom.
/// Fewer than degree+1 waypoints are padded by resampling the polyline.
inline BSplineTrajectory fit_from_waypoints(std::span<const Vec3> waypoints, double dt, int degree,
                                            const Vec3& start_velocity = Vec3::Zero(),
                                            const Vec3& end_velocity = Vec3::Zero()) {
  if (waypoints.size() < 2)
    throw Error(ErrorCode::Underdetermined, "need at least two waypoints");
  if (degree < 1 || degree > kMaxSplineDegree)
    throw Error(ErrorCode::InvalidArgument, "fit degree must lie in [1, 5]");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "knot spacing must be positive");

  std::vector<Vec3> pts(waypoints.begin(), waypoints.end());
  if (pts.size() < static_cast<std::size_t>(degree) + 1) {
    const std::size_t want = static_cast<std::size_t>(degree) + 1;
    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    std::vector<Vec3> padded;
    padded.reserve(want);
    for (std::size_t k = 0; k < want; ++k) {
      const double f = static_cast<double>(k) / static_cast<double>(want - 1);
      if (cum.back() <= 0.0) {
        padded.push_back(pts.front());
        continue;
      }
      const double s = f * cum.back();
      std::size_t seg = 0;
      while (seg + 2 < pts.size() && cum[seg + 1] < s) ++seg;
      const double len = cum[seg + 1] - cum[seg];
      const double a = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
      padded.push_back((1.0 - a) * pts[seg] + a * pts[seg + 1]);
    }
    pts = std::move(padded);
  }

  const int p = degree;
  const auto n = static_cast<int>(pts.size());
  const int unknowns = n + p - 1;
  const int start_orders = p / 2;        // ceil((p-1)/2)
  const int end_orders = (p - 1) / 2;    // floor((p-1)/2)

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(unknowns, unknowns);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(unknowns, 3);
  const Eigen::MatrixXd& m = basis_matrix(p);
  int row = 0;
  for (int k = 0; k < n; ++k, ++row) {
    if (k < n - 1) {
      for (int j = 0; j <= p; ++j) a(row, k + j) = m(0, j);
    } else {
      const Eigen::VectorXd w = span_endpoint_weights(p, 0, true, dt);
      for (int j = 0; j <= p; ++j) a(row, n - 2 + j) = w(j);
    }
    b.row(row) = pts[static_cast<std::size_t>(k)].transpose();
  }
  for (int d = 1; d <= start_orders; ++d, ++row) {
    const Eigen::VectorXd w = span_endpoint_weights(p, d, false, dt);
    for (int j = 0; j <= p; ++j) a(row, j) = w(j);
    if (d == 1) b.row(row) = start_velocity.transpose();
  }
  for (int d = 1; d <= end_orders; ++d, ++row) {
    const Eigen::VectorXd w = span_endpoint_weights(p, d, true, dt);
    for (int j = 0; j <= p; ++j) a(row, n - 2 + j) = w(j);
    if (d == 1) b.row(row) = end_velocity.transpose();
  }

  const Eigen::MatrixXd x = a.colPivHouseholderQr().solve(b);
  std::vector<Vec3> ctrl(static_cast<std::size_t>(unknowns));
  for (int i = 0; i < unknowns; ++i) ctrl[static_cast<std::size_t>(i)] = x.row(i).transpose();
  return BSplineTrajectory(p, std::move(ctrl), dt);
}

/// First `degree` control points that realise the given start position and
/// velocity with all higher derivatives zero.
inline std::vector<Vec3> boundary_control_points(int degree, const Vec3& position,
                                                 const Vec3& velocity, double dt, bool at_end) {
  const int p = degree;
  if (p == 0) return {};
  Eigen::MatrixXd a(p, p);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, 3);
  for (int d = 0; d < p; ++d) {
    const Eigen::VectorXd w = span_endpoint_weights(p, d, at_end, dt);
    // The start block excludes the last span point (zero weight at u=0 for
    // orders < p); the end block excludes the first one.
    for (int j = 0; j < p; ++j) a(d, j) = at_end ? w(j + 1) : w(j);
    if (d == 0) b.row(d) = position.transpose();
    if (d == 1) b.row(d) = velocity.transpose();
  }
  const Eigen::MatrixXd x = a.fullPivLu().solve(b);
  std::vector<Vec3> out(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) out[static_cast<std::size_t>(j)] = x.row(j).transpose();
  return out;
}

}  // namespace agplan

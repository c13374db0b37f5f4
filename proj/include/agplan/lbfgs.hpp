#pragma once

#include <Eigen/Core>

#include <cmath>
#include <deque>
#include <string_view>
#include <vector>

namespace agplan {

struct LbfgsParams {
  int memory = 8;
  int max_iterations = 200;
  /// Stop when the gradient 2-norm falls below this.
  double gradient_tolerance = 1e-5;
  /// Stop when |f_prev - f| / max(1, |f|) falls below this.
  double relative_decrease = 1e-8;
  /// Armijo sufficient-decrease constant.
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_linesearch = 50;
  bool keep_trace = false;
};

enum class LbfgsStatus { GradientConverged, CostConverged, IterationCap, LineSearchFailed, Diverged };

inline std::string_view to_string(LbfgsStatus s) {
  switch (s) {
    case LbfgsStatus::GradientConverged: return "GradientConverged";
    case LbfgsStatus::CostConverged: return "CostConverged";
    case LbfgsStatus::IterationCap: return "IterationCap";
    case LbfgsStatus::LineSearchFailed: return "LineSearchFailed";
    case LbfgsStatus::Diverged: return "Diverged";
  }
  return "Unknown";
}

struct LbfgsResult {
  LbfgsStatus status = LbfgsStatus::IterationCap;
  int iterations = 0;
  double initial_cost = 0.0;
  double cost = 0.0;
  double gradient_norm = 0.0;
  /// Cost after each accepted iterate (when keep_trace is set).
  std::vector<double> trace;
};

/// Limited-memory BFGS with backtracking Armijo line search. `fn(x, grad)`
/// returns the cost at x and writes the gradient. Accepted iterates never
/// increase the cost.
template <typename Fn>
LbfgsResult minimize_lbfgs(Fn&& fn, Eigen::VectorXd& x, const LbfgsParams& params = {}) {
  LbfgsResult res;
  Eigen::VectorXd g(x.size());
  double f = fn(x, g);
  res.initial_cost = f;
  res.cost = f;
  res.gradient_norm = g.norm();
  if (!std::isfinite(f)) {
    res.status = LbfgsStatus::Diverged;
    return res;
  }
  if (res.gradient_norm < params.gradient_tolerance) {
    res.status = LbfgsStatus::GradientConverged;
    return res;
  }

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd x_new(x.size());
  Eigen::VectorXd g_new(x.size());
  std::vector<double> alpha(static_cast<std::size_t>(params.memory));

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    // Two-loop recursion for the search direction.
    Eigen::VectorXd d = -g;
    const int m = static_cast<int>(s_hist.size());
    for (int i = m - 1; i >= 0; --i) {
      alpha[static_cast<std::size_t>(i)] = rho_hist[static_cast<std::size_t>(i)] * s_hist[static_cast<std::size_t>(i)].dot(d);
      d -= alpha[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
    }
    if (m > 0) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (int i = 0; i < m; ++i) {
      const double beta = rho_hist[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)].dot(d);
      d += s_hist[static_cast<std::size_t>(i)] * (alpha[static_cast<std::size_t>(i)] - beta);
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {  // not a descent direction; restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g;
      slope = g.dot(d);
    }

    double step = m == 0 ? std::min(1.0, 1.0 / d.norm()) : 1.0;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < params.max_linesearch; ++ls) {
      x_new = x + step * d;
      f_new = fn(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + params.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= params.backtrack;
    }
    if (!accepted) {
      res.status = LbfgsStatus::LineSearchFailed;
      res.iterations = iter;
      return res;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > params.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double f_prev = f;
    x = x_new;
    g = g_new;
    f = f_new;
    res.iterations = iter + 1;
    res.cost = f;
    res.gradient_norm = g.norm();
    if (params.keep_trace) res.trace.push_back(f);

    if (res.gradient_norm < params.gradient_tolerance) {
      res.status = LbfgsStatus::GradientConverged;
      return res;
    }
    if (std::abs(f_prev - f) / std::max(1.0, std::abs(f)) < params.relative_decrease) {
      res.status = LbfgsStatus::CostConverged;
      return res;
    }
  }
  res.status = LbfgsStatus::IterationCap;
  return res;
}

}  // namespace agplan

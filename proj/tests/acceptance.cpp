// Acceptance checks, one PASS/FAIL line per criterion. argv[1] is the CLI binary
// used for the determinism check.
#include "agplan/bspline.hpp"
#include "agplan/hybrid_astar.hpp"
#include "agplan/planner.hpp"
#include "agplan/simbench.hpp"
#include "agplan/traj_opt.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

using namespace agplan;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail, double seconds) {
  std::printf("criterion %d: %s  %s  (%.1f s)\n", id, pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

// 1 -------------------------------------------------------------------------
void energy_rows() {
  const auto t0 = std::chrono::steady_clock::now();
  const double rows[6][3] = {{10.11, 6.5678, 11643.5}, {8.16, 7.4055, 9926.9},  {5.98, 6.1132, 7447.4},
                             {7.74, 15.1263, 11453.2}, {4.06, 15.7295, 7967.8}, {2.54, 13.7734, 5973.7}};
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, std::abs(compute_energy(r[0], r[1]) - r[2]));
  report(1, worst <= 0.1, fmt("six energy totals, worst |error| %.4f J (tol 0.1)", worst), since(t0));
}

// 2 -------------------------------------------------------------------------
void bspline_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0), coord(-5.0, 5.0);
  double eval_err = 0.0, deriv_err = 0.0, scale_err = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const int p = 1 + c % 5;
    const double dt = 0.05 + unit(rng);
    std::vector<Vec3> q(static_cast<std::size_t>(p + 1 + static_cast<int>(unit(rng) * 12)));
    for (auto& v : q) v = Vec3(coord(rng), coord(rng), coord(rng));
    const BSplineTrajectory s(p, q, dt);
    for (int k = 0; k < 25; ++k) {
      const double t = k == 0 ? 0.0 : k == 1 ? s.duration() : unit(rng) * s.duration();
      const Vec3 ref = oracle::de_boor(q, p, dt, t);
      eval_err = std::max(eval_err, (s.evaluate(t) - ref).norm() / std::max(1.0, ref.norm()));
    }
    // Derivative control points are first differences over dt.
    const auto d = s.derivative();
    for (std::size_t i = 0; i + 1 < q.size(); ++i)
      deriv_err = std::max(deriv_err, (d[i] - (q[i + 1] - q[i]) / dt).norm() / std::max(1.0, d[i].norm()));
    // Stretching dt by r divides the k-th derivative control points by r^k.
    const double r = 0.5 + 2.0 * unit(rng);
    auto st = s;
    st.set_knot_spacing(dt * r);
    auto a = s, b = st;
    for (int k = 1; k <= p; ++k) {
      a = a.derivative();
      b = b.derivative();
      for (std::size_t i = 0; i < a.size(); ++i)
        scale_err = std::max(scale_err, (a[i] - std::pow(r, k) * b[i]).norm() / std::max(1.0, a[i].norm()));
    }
  }
  const bool pass = eval_err <= 1e-9 && deriv_err <= 1e-12 && scale_err <= 1e-12;
  report(2, pass,
         fmt("1000 curves p=1..5: eval err %.2e (tol 1e-9), derivative law %.2e, dt scaling %.2e", eval_err,
             deriv_err, scale_err),
         since(t0));
}

// 3 -------------------------------------------------------------------------
void gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const DynamicLimits lim;
  using Term = std::function<TermValue(const BSplineTrajectory&, const std::vector<AnchorPair>&)>;
  const std::pair<const char*, Term> terms[] = {
      {"J_s", [](const auto& t, const auto&) { return cost_smooth(t); }},
      {"J_c", [](const auto& t, const auto& pr) { return cost_collision(t, pr, 0.3); }},
      {"J_v", [&](const auto& t, const auto&) { return cost_velocity(t, lim); }},
      {"J_a", [&](const auto& t, const auto&) { return cost_acceleration(t, lim); }},
      {"J_j", [&](const auto& t, const auto&) { return cost_jerk(t, lim); }},
      {"J_n", [](const auto& t, const auto&) { return cost_curvature(t, 0.5, false); }},
  };
  std::string detail;
  bool pass = true;
  std::uint64_t seed = 300;
  for (const auto& [name, term] : terms) {
    std::mt19937_64 rng(seed++);
    double worst = 0.0;
    int active = 0;
    for (int k = 0; k < 100; ++k) {
      const auto traj = oracle::random_trajectory(rng);
      const auto pairs = oracle::random_pairs(rng, traj, 0.3);
      const auto analytic = term(traj, pairs);
      if (analytic.cost > 0.0) ++active;
      const auto fd = oracle::fd_gradient(traj, [&](const BSplineTrajectory& t) { return term(t, pairs).cost; });
      worst = std::max(worst, oracle::gradient_rel_error(analytic.grad, fd));
    }
    pass = pass && worst <= 1e-4 && active > 50;
    detail += std::string(" ") + name + fmt(" %.1e", worst);
  }
  report(3, pass, "100 trajectories per term, worst rel err:" + detail + " (tol 1e-4)", since(t0));
}

// 4 -------------------------------------------------------------------------
void search_optimality() {
  const auto t0 = std::chrono::steady_clock::now();
  const SearchConfig cfg = oracle::desk_lattice_config();
  int reachable = 0, unreachable = 0, mismatches = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; reachable < 50 && seed < 500; ++seed) {
    const auto pb = oracle::random_desk_problem(seed);
    const SearchResult r = search(pb.start, pb.goal, pb.grid, cfg);
    const auto ref = oracle::lattice_dijkstra(pb.start, pb.goal, pb.grid, cfg);
    if (ref.cost < 0.0) {
      ++unreachable;
      if (r.status != SearchStatus::NoPath) ++mismatches;
      continue;
    }
    ++reachable;
    if (r.status != SearchStatus::Found) {
      ++mismatches;
      continue;
    }
    const double rel = std::abs(r.cost - ref.cost) / ref.cost;
    worst = std::max(worst, rel);
    if (rel > 1e-9) ++mismatches;
  }
  const bool pass = reachable >= 50 && mismatches == 0;
  report(4, pass,
         fmt("%.0f reachable + %.0f unreachable grids <= 8x8x4, 2 durations x 27 accels: %.0f mismatches, worst rel "
             "diff %.1e",
             reachable, unreachable, mismatches, worst),
         since(t0));
}

// 5 -------------------------------------------------------------------------
// A wall across the arena with a single gap; the seed moves the wall and the
// gap so the ground detour ranges from none to long. Flying over needs the
// third voxel layer.
oracle::DeskProblem wall_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index3 dims(14, 10, 4);
  VoxelGrid g(Vec3::Zero(), 0.5, dims, 0.0);
  const int wx = std::uniform_int_distribution<int>(5, 8)(rng);
  const int gap = std::uniform_int_distribution<int>(0, dims.y() - 1)(rng);
  for (int y = 0; y < dims.y(); ++y)
    for (int z = 0; z < 2; ++z)
      if (y != gap) g.mark_completed(g.linear(Index3(wx, y, z)));
  const int sy = std::uniform_int_distribution<int>(2, dims.y() - 3)(rng);
  const int gy = std::uniform_int_distribution<int>(2, dims.y() - 3)(rng);
  return {g, {g.center(Index3(1, sy, 0)), Vec3::Zero(), Mode::Ground}, g.center(Index3(dims.x() - 2, gy, 0))};
}

void energy_preference() {
  const auto t0 = std::chrono::steady_clock::now();
  const double weights[5] = {0.0025, 0.005, 0.01, 0.02, 0.04};
  int violations = 0, decisions = 0, wrong = 0, flew = 0, failed = 0, varied = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto pb = wall_problem(seed);
    double prev = std::numeric_limits<double>::infinity();
    double first_air = -1.0;
    for (double w : weights) {
      SearchConfig cfg = oracle::desk_lattice_config();
      cfg.w_energy = w;
      const SearchResult r = search(pb.start, pb.goal, pb.grid, cfg);
      if (r.status != SearchStatus::Found) {
        ++failed;
        continue;
      }
      const double air = r.airborne_duration();
      if (air > prev + 1e-12) ++violations;
      if (first_air < 0.0) first_air = air;
      prev = air;
      if (w == 0.01) {
        // Default power draws and weight: flying must pay off against
        // the best ground-only route.
        const double c_ground = oracle::lattice_dijkstra(pb.start, pb.goal, pb.grid, cfg, true).cost;
        const double c_all = oracle::lattice_dijkstra(pb.start, pb.goal, pb.grid, cfg).cost;
        ++decisions;
        // Equal costs mean the best route can be driven, so flying is never required.
        const bool should_fly = c_ground < 0.0 || c_all < c_ground * (1.0 - 1e-12);
        if ((air > 0.0) != should_fly) ++wrong;
        if (air > 0.0) ++flew;
      }
    }
    if (prev < first_air) ++varied;
  }
  const bool pass = violations == 0 && wrong == 0 && failed == 0 && flew > 0 && flew < decisions;
  report(5, pass,
         fmt("5 w_E x 20 seeds: %.0f monotonicity violations (%.0f seeds fly less as w_E grows); fly/drive vs lattice oracle: %.0f wrong of %.0f",
             violations, varied, wrong, decisions) +
             fmt(" (%.0f flew)", flew) +
             (failed ? fmt(", %.0f searches failed", failed) : ""),
         since(t0));
}

// 6 -------------------------------------------------------------------------
void corner() {
  const auto t0 = std::chrono::steady_clock::now();
  BSplineTrajectory c(2, {{0, 0, 0.1}, {1, 0, 0.1}, {1, 1, 0.1}}, 0.5);
  const double got = cost_curvature(c, 1.0).cost;
  const double want = (kPi / 2 - 1.0) * (kPi / 2 - 1.0);
  report(6, std::abs(got - want) <= 1e-6, fmt("F_n %.9f vs %.9f", got, want), since(t0));
}

// 7, 8 ----------------------------------------------------------------------
void protocol() {
  const auto t0 = std::chrono::steady_clock::now();
  SimConfig cfg;
  cfg.record_trace = true;
  int plans = 0, unsafe = 0;
  cfg.plan_observer = [&](const PlanResult& r, const VoxelGrid& g) {
    if (r.status != PlanStatus::Success) return;
    ++plans;
    // Speeds stay below v_max, so this time step spaces samples under res / 4.
    const double step = 0.25 * g.resolution() / cfg.planner.weights.limits.v_max;
    if (oracle::first_hit_time(r.trajectory, g, Layer::Completed, step) >= 0.0) ++unsafe;
  };
  const SuiteResult res = run_suite(ScenarioParams::square_room(), 50,
                                    {AblationArm::planner_only(), AblationArm::completion(1.0)}, 7, cfg, "square-room");
  const double secs = since(t0);
  const ArmSummary* only = nullptr;
  const ArmSummary* comp = nullptr;
  for (const auto& a : res.summary.arms) (a.name == "completion" ? comp : only) = &a;
  std::vector<double> all, rebuilt;
  int gt_collisions = 0;
  for (const auto& r : res.reports) {
    if (r.arm != "completion") continue;
    if (r.success && r.collision_point) ++gt_collisions;
    for (const auto& row : r.trace) {
      all.push_back(row.planning_time);
      if (!row.reused_previous) rebuilt.push_back(row.planning_time);
    }
  }
  const double med_all = detail::median(all);
  const double med_rebuilt = detail::median(rebuilt);
  const bool pass7 = comp->success_rate >= 0.95 && comp->success_rate >= only->success_rate &&
                     med_all <= 0.1 && med_rebuilt <= 0.1 && secs < 900.0;
  report(7, pass7,
         fmt("completion %.2f vs planner-only %.2f success; median plan %.2f ms (rebuilds only %.2f ms)",
             comp->success_rate, only->success_rate, 1e3 * med_all, 1e3 * med_rebuilt),
         secs);
  report(8, gt_collisions == 0 && unsafe == 0,
         fmt("%.0f ground-truth collisions in completion successes; %.0f of %.0f reported trajectories fail the "
             "dense scan",
             gt_collisions, unsafe, plans),
         0.0);
}

// 9 -------------------------------------------------------------------------
std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism(const std::string& cli) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto base = std::filesystem::temp_directory_path() / "agplan_acceptance";
  std::filesystem::remove_all(base);
  std::string outs[2];
  bool ran = true;
  for (int k = 0; k < 2; ++k) {
    const auto dir = base / ("run" + std::to_string(k));
    const std::string cmd = "\"" + cli + "\" bench --trials 10 --seed 11 --out-dir \"" + dir.string() + "\" > /dev/null";
    ran = ran && std::system(cmd.c_str()) == 0;
    outs[k] = slurp(dir / "trials.csv");
  }
  const bool pass = ran && !outs[0].empty() && outs[0] == outs[1];
  report(9, pass, fmt("bench --trials 10 twice: trials.csv %.0f bytes, identical=%.0f", outs[0].size(), outs[0] == outs[1]),
         since(t0));
  std::filesystem::remove_all(base);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-agplan-cli>\n");
    return 2;
  }
  energy_rows();
  bspline_oracle();
  gradients();
  search_optimality();
  energy_preference();
  corner();
  protocol();
  determinism(argv[1]);
  std::printf("%s: %d criterion failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}

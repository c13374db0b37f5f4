#include "agplan/voxel_map.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace agplan;

namespace {

std::size_t count_layer(const VoxelGrid& g, Layer layer) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.voxel_count(); ++i) n += g.raw_occupied(i, layer);
  return n;
}

Scenario box_scenario(const Vec3& extent, const Wall& w) {
  Scenario sc;
  sc.extent = extent;
  sc.walls.push_back(w);
  sc.wall_count = 1;
  return sc;
}

}  // namespace

TEST(Scenario, DeterministicInSeed) {
  const auto a = generate_scenario(ScenarioParams::square_room(), 1);
  const auto b = generate_scenario(ScenarioParams::square_room(), 1);
  const auto c = generate_scenario(ScenarioParams::square_room(), 2);
  EXPECT_EQ(a.walls, b.walls);
  EXPECT_EQ(a.rings, b.rings);
  EXPECT_NE(a.walls, c.walls);
  EXPECT_EQ(a.walls.size(), 80u);
  EXPECT_EQ(a.rings.size(), 20u);
}

TEST(Scenario, PresetsKeepEndpointsFreeAndFillBounded) {
  for (const auto& params : {ScenarioParams::square_room(), ScenarioParams::corridor()}) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      const auto sc = generate_scenario(params, seed);
      const auto g = rasterize(sc, 0.1, 0.3);
      EXPECT_FALSE(g.is_occupied(sc.start, Layer::GroundTruth));
      EXPECT_FALSE(g.is_occupied(sc.goal, Layer::GroundTruth));
      EXPECT_LE(static_cast<double>(count_layer(g, Layer::GroundTruth)) / g.voxel_count(), 0.6);
      for (const auto& r : sc.rings) EXPECT_GE(r.inner_radius, 0.8);
    }
  }
  const auto corridor = generate_scenario(ScenarioParams::corridor(), 1);
  EXPECT_EQ(corridor.walls.size(), 60u);
  EXPECT_EQ(corridor.rings.size(), 10u);
}

TEST(Scenario, EmptyParamsGiveFreeGrid) {
  const auto sc = generate_scenario(ScenarioParams::empty(Vec3(10, 10, 5)), 99);
  EXPECT_TRUE(sc.walls.empty());
  EXPECT_TRUE(sc.rings.empty());
  const auto g = rasterize(sc, 0.1);
  EXPECT_EQ(count_layer(g, Layer::GroundTruth), 0u);
  EXPECT_EQ(g.dims(), Index3(100, 100, 50));
}

TEST(Scenario, RejectsBadParameters) {
  auto p = ScenarioParams::square_room();
  p.walls = -1;
  EXPECT_THROW(generate_scenario(p, 1), Error);
  p = ScenarioParams::square_room();
  p.extent = Vec3(0, 1, 1);
  EXPECT_THROW(generate_scenario(p, 1), Error);
}

TEST(Rasterize, UnitBoxMatchesPointInBoxOracle) {
  Wall w;
  w.cx = 2.5;
  w.cy = 2.5;
  w.base = 0.0;
  w.width = 1.0;
  w.thickness = 1.0;
  w.height = 1.0;
  const auto g = rasterize(box_scenario(Vec3(5, 5, 3), w), 0.1, 0.2);
  std::size_t truth = 0;
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    const Vec3 c = g.center(g.unlinear(i));
    const bool inside = w.contains(c);
    EXPECT_EQ(g.raw_occupied(i, Layer::GroundTruth), inside);
    truth += inside;
    // Truth voxel centres sit at least half a voxel inside the box on every axis.
    const double d = w.distance(c);
    if (d <= 0.2 - 0.05 * std::sqrt(3.0)) {
      EXPECT_TRUE(g.inflated_occupied(i, Layer::GroundTruth));
    }
    if (d > 0.2 + 1e-9) {
      EXPECT_FALSE(g.inflated_occupied(i, Layer::GroundTruth));
    }
  }
  EXPECT_EQ(truth, 1000u);
  EXPECT_TRUE(g.is_occupied(Vec3(2.5, 2.5, 0.5), Layer::GroundTruth));
  EXPECT_FALSE(g.is_occupied(Vec3(0.5, 0.5, 0.5), Layer::GroundTruth));
}

TEST(Rasterize, FullWallBisectsGrid) {
  Wall w;
  w.cx = 2.5;
  w.cy = 2.5;
  w.width = 5.0;
  w.thickness = 0.4;
  w.height = 3.0;
  w.along_x = true;
  const auto g = rasterize(box_scenario(Vec3(5, 5, 3), w), 0.1, 0.0);
  EXPECT_FALSE(oracle::flood_connected(g, Index3(10, 5, 5), Index3(10, 45, 5)));
  EXPECT_TRUE(oracle::flood_connected(g, Index3(10, 5, 5), Index3(40, 5, 20)));
  // Lower the wall: the two halves connect over the top.
  w.height = 2.0;
  const auto g2 = rasterize(box_scenario(Vec3(5, 5, 3), w), 0.1, 0.0);
  EXPECT_TRUE(oracle::flood_connected(g2, Index3(10, 5, 5), Index3(10, 45, 5)));
}

TEST(Rasterize, ThinObstacleIsRejected) {
  Wall w;
  w.cx = 2.5;
  w.cy = 2.5;
  w.thickness = 0.05;
  EXPECT_THROW(rasterize(box_scenario(Vec3(5, 5, 3), w), 0.1), Error);
}

TEST(Grid, OutOfBoundsIsOccupied) {
  const auto g = rasterize(generate_scenario(ScenarioParams::empty(Vec3(4, 4, 2)), 1), 0.1);
  EXPECT_TRUE(g.is_occupied(Vec3(-0.01, 1, 1), Layer::GroundTruth));
  EXPECT_TRUE(g.is_occupied(Vec3(1, 1, 2.5), Layer::Completed));
  EXPECT_FALSE(g.is_occupied(Vec3(1, 1, 1), Layer::Completed));
}

TEST(Sense, EmptyGridSeesNothingOccupied) {
  auto g = rasterize(generate_scenario(ScenarioParams::empty(Vec3(6, 6, 3)), 1), 0.1);
  SensorModel s;
  s.position = Vec3(1, 3, 1);
  const auto stats = sense(g, s);
  EXPECT_GT(stats.visible, 0u);
  EXPECT_EQ(stats.occluded, 0u);
  EXPECT_EQ(count_layer(g, Layer::Sensed), 0u);
}

TEST(Sense, WallFrontFaceSensedBackHidden) {
  Wall w;
  w.cx = 3.0;
  w.cy = 3.0;
  w.width = 2.0;
  w.thickness = 0.6;
  w.height = 2.0;
  w.along_x = false;  // slab normal along x
  auto g = rasterize(box_scenario(Vec3(6, 6, 3), w), 0.1, 0.0);
  SensorModel s;
  s.position = Vec3(1.03, 3.01, 1.02);
  sense(g, s);
  const Index3 front = g.voxel_of(Vec3(2.75, 3.0, 1.0));
  const Index3 back = g.voxel_of(Vec3(3.25, 3.0, 1.0));
  EXPECT_TRUE(g.raw_occupied(g.linear(front), Layer::Sensed));
  EXPECT_FALSE(g.raw_occupied(g.linear(back), Layer::Sensed));
  EXPECT_TRUE(g.raw_occupied(g.linear(back), Layer::GroundTruth));
}

TEST(Sense, FacingAwaySeesNothing) {
  Wall w;
  w.cx = 4.0;
  w.cy = 3.0;
  w.width = 1.0;
  w.thickness = 1.0;
  w.height = 1.0;
  auto g = rasterize(box_scenario(Vec3(6, 6, 3), w), 0.1, 0.0);
  SensorModel s;
  s.position = Vec3(2.0, 3.0, 0.5);
  s.yaw = kPi;
  sense(g, s);
  EXPECT_EQ(count_layer(g, Layer::Sensed), 0u);
}

TEST(Sense, MatchesSampledRaycastOracleOnRandomGrids) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 6; ++trial) {
    VoxelGrid g(Vec3::Zero(), 0.25, Index3(12, 12, 6), 0.0);
    for (std::size_t i = 0; i < g.voxel_count(); ++i)
      if (u(rng) < 0.12) g.set_truth(i);
    const Vec3 pos(0.3 + 0.1 * u(rng), 1.4 + u(rng), 0.6 + 0.1 * u(rng));
    const std::size_t own = g.linear(g.voxel_of(pos));
    SensorModel s;
    s.position = pos;
    s.yaw = 0.4 * (u(rng) - 0.5);
    s.max_range = 4.0;
    s.horizontal_fov = 2.0;
    s.vertical_fov = 1.2;
    VoxelGrid before = g;
    sense(g, s);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      if (i == own) continue;
      const Index3 v = g.unlinear(i);
      // Soundness: never sensed unless actually occupied.
      if (g.raw_occupied(i, Layer::Sensed)) {
        EXPECT_TRUE(g.raw_occupied(i, Layer::GroundTruth));
      }
      if (!before.raw_occupied(i, Layer::GroundTruth) || !s.in_frustum(g.center(v))) continue;
      EXPECT_EQ(g.raw_occupied(i, Layer::Sensed), oracle::sampled_visible(g, pos, v)) << trial << " voxel " << i;
      ++checked;
    }
    EXPECT_GT(checked, 0u);
  }
}

TEST(Sense, VisibilityIsSymmetricOnFreeSegments) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 5.9);
  Wall w;
  w.cx = 3.0;
  w.cy = 3.0;
  w.width = 2.0;
  w.thickness = 0.5;
  w.height = 1.5;
  const auto g = rasterize(box_scenario(Vec3(6, 6, 3), w), 0.1, 0.0);
  for (int k = 0; k < 200; ++k) {
    const Vec3 a(u(rng), u(rng), 0.5 * u(rng));
    const Vec3 b(u(rng), u(rng), 0.5 * u(rng));
    EXPECT_EQ(segment_clear(g, a, b, Layer::GroundTruth), segment_clear(g, b, a, Layer::GroundTruth));
  }
}

TEST(Completion, AccuracyExtremesAndMonotonicity) {
  const auto sc = generate_scenario(ScenarioParams::square_room(), 3);
  for (double acc : {0.0, 1.0}) {
    auto g = rasterize(sc, 0.1);
    SensorModel s;
    s.position = sc.start + Vec3(0, 0, 0.5);
    sense(g, s);
    std::vector<std::size_t> occluded_occ;
    for (std::size_t i : g.occluded())
      if (g.raw_occupied(i, Layer::GroundTruth)) occluded_occ.push_back(i);
    const std::size_t sensed = count_layer(g, Layer::Sensed);
    oracle_complete(g, acc, 77);
    const std::size_t completed = count_layer(g, Layer::Completed);
    if (acc == 0.0) {
      EXPECT_EQ(completed, sensed);
    }
    if (acc == 1.0) {
      EXPECT_EQ(completed, sensed + occluded_occ.size());
    }
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      if (g.raw_occupied(i, Layer::Sensed)) {
        EXPECT_TRUE(g.raw_occupied(i, Layer::Completed));
      }
      if (g.raw_occupied(i, Layer::Completed)) {
        EXPECT_TRUE(g.raw_occupied(i, Layer::GroundTruth));
      }
    }
  }
  // Completed layer never shrinks across cycles.
  auto g = rasterize(sc, 0.1);
  std::size_t last = 0;
  for (int k = 0; k < 5; ++k) {
    SensorModel s;
    s.position = sc.start + Vec3(2.0 * k, 0.0, 0.5);
    s.yaw = 0.3 * k;
    sense(g, s);
    oracle_complete(g, 0.5, 77);
    const std::size_t now = count_layer(g, Layer::Completed);
    EXPECT_GE(now, last);
    last = now;
  }
  EXPECT_THROW(oracle_complete(g, 1.5, 1), Error);
}

TEST(Completion, RevealCountFollowsBinomial) {
  // 1000 occluded occupied voxels behind a wall of fully occupied grid.
  VoxelGrid g(Vec3::Zero(), 0.1, Index3(12, 12, 12), 0.0);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) g.set_truth(i);
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.voxel_count() && n < 1000; ++i, ++n) g.mark_occluded(i);
  ASSERT_EQ(g.occluded().size(), 1000u);
  const std::size_t revealed = oracle_complete(g, 0.6, 2024);
  EXPECT_NEAR(static_cast<double>(revealed), 600.0, 50.0);
  // Same seed, fresh grid: identical outcome.
  VoxelGrid h(Vec3::Zero(), 0.1, Index3(12, 12, 12), 0.0);
  for (std::size_t i = 0; i < h.voxel_count(); ++i) h.set_truth(i);
  for (std::size_t i = 0; i < 1000; ++i) h.mark_occluded(i);
  EXPECT_EQ(oracle_complete(h, 0.6, 2024), revealed);
}

TEST(Segment, PathClearUsesInflation) {
  Wall w;
  w.cx = 2.0;
  w.cy = 2.0;
  w.width = 1.0;
  w.thickness = 1.0;
  w.height = 1.0;
  auto g = rasterize(box_scenario(Vec3(4, 4, 2), w), 0.1, 0.3);
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    if (g.raw_occupied(i, Layer::GroundTruth)) g.mark_completed(i);
  // Passes 0.2 m from the box: clear of the raw box, inside the inflation.
  const Vec3 a(0.2, 2.7, 0.5), b(3.8, 2.7, 0.5);
  EXPECT_TRUE(segment_clear(g, a, b, Layer::Completed));
  EXPECT_FALSE(path_clear(g, a, b, Layer::Completed));
}

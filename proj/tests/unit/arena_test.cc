#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dpiil/arena.h"
#include "dpiil/random.h"
#include "geometry_oracle.h"

namespace dpiil {
namespace {

EnvConfig OpenConfig() {
  EnvConfig cfg = EnvConfig::Default();
  cfg.walls.clear();
  return cfg;
}

// Single vertical wall at x = 0 spanning the arena, no aperture.
EnvConfig SingleWallConfig() {
  EnvConfig cfg = OpenConfig();
  cfg.walls.push_back({{0.0, -10.0}, {0.0, 10.0}, 0.0, 0.0, 0.0});
  cfg.goal = {-8.0, 8.0};
  return cfg;
}

TEST(BuildWorld, DefaultLayoutHasTheTwoApertures) {
  const World w = BuildWorld(EnvConfig::Default());
  ASSERT_EQ(w.apertures().size(), 2u);
  EXPECT_DOUBLE_EQ(w.apertures()[0].width, 3.0);
  EXPECT_DOUBLE_EQ(w.apertures()[1].width, 1.5);
  EXPECT_DOUBLE_EQ(w.radius(), 0.25);
  EXPECT_EQ(w.horizon(), 200);
  EXPECT_DOUBLE_EQ(w.config().init_noise, 2.0);
}

TEST(BuildWorld, ZeroWallsGivesOpenArena) {
  const World w = BuildWorld(OpenConfig());
  EXPECT_TRUE(w.segments().empty());
  Rng rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int ep = 0; ep < 50; ++ep) {
    State2 s = Reset(w, DeriveSeed(11, ep));
    for (int t = 0; t < w.horizon(); ++t) {
      const StepResult r = Step(w, s, {u(rng), u(rng)}, t);
      ASSERT_NE(r.outcome, Outcome::kCollision);
      s = r.next;
      if (IsTerminal(r.outcome)) break;
    }
  }
}

TEST(BuildWorld, RejectsInfeasibleConfigs) {
  EnvConfig narrow = OpenConfig();
  narrow.walls.push_back({{0.0, -10.0}, {0.0, 10.0}, 0.0, 0.0, 0.4});
  EXPECT_THROW(BuildWorld(narrow), ConfigError);

  EnvConfig wide = OpenConfig();
  wide.walls.push_back({{0.0, -2.0}, {0.0, 2.0}, 0.0, 0.0, 5.0});
  EXPECT_THROW(BuildWorld(wide), ConfigError);

  EnvConfig no_time = EnvConfig::Default();
  no_time.horizon = 0;
  EXPECT_THROW(BuildWorld(no_time), ConfigError);

  EnvConfig diagonal = OpenConfig();
  diagonal.walls.push_back({{0.0, 0.0}, {1.0, 1.0}, 0.0, 0.0, 0.0});
  EXPECT_THROW(BuildWorld(diagonal), ConfigError);
}

TEST(Reset, DeterministicPerSeed) {
  const World w = BuildWorld(EnvConfig::Default());
  EXPECT_EQ(Reset(w, 42), Reset(w, 42));
  EXPECT_NE(Reset(w, 42), Reset(w, 43));
}

TEST(Reset, OffsetsStayInsideNoiseBox) {
  const World w = BuildWorld(EnvConfig::Default());
  double max_dx = 0.0, max_dy = 0.0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const State2 s = Reset(w, DeriveSeed(5, i));
    const double dx = s.x - w.config().start.x, dy = s.y - w.config().start.y;
    ASSERT_LE(std::abs(dx), 2.0);
    ASSERT_LE(std::abs(dy), 2.0);
    max_dx = std::max(max_dx, std::abs(dx));
    max_dy = std::max(max_dy, std::abs(dy));
  }
  EXPECT_GT(max_dx, 1.9);
  EXPECT_GT(max_dy, 1.9);
}

TEST(Reset, ZeroNoiseIsExactStart) {
  EnvConfig cfg = EnvConfig::Default();
  cfg.init_noise = 0.0;
  const World w = BuildWorld(cfg);
  EXPECT_EQ(Reset(w, 99), ToState(cfg.start));
}

TEST(Step, ZeroActionStaysPut) {
  const World w = BuildWorld(EnvConfig::Default());
  const State2 s{-7.0, -7.0};
  const StepResult r = Step(w, s, {0.0, 0.0}, 0);
  EXPECT_EQ(r.next, s);
  EXPECT_EQ(r.outcome, Outcome::kRunning);
  EXPECT_FALSE(r.clipped);
}

TEST(Step, ShortPushIntoWallCollides) {
  const World w = BuildWorld(SingleWallConfig());
  const State2 s{-(0.25 + 0.1), 3.0};
  const StepResult r = Step(w, s, {0.5, 0.0}, 0);
  EXPECT_EQ(r.outcome, Outcome::kCollision);
  // Contact after 0.1 cm of travel: the disc touches x = 0.
  EXPECT_NEAR(r.next.x, -0.25, 1e-9);
  EXPECT_NEAR(testing_oracle::DistanceToWalls(w.config(), r.next.pos()), 0.25, 1e-9);
}

TEST(Step, StopsJustShortOfWallWithoutCollision) {
  const World w = BuildWorld(SingleWallConfig());
  const StepResult r = Step(w, {-0.35, 3.0}, {0.09, 0.0}, 0);
  EXPECT_EQ(r.outcome, Outcome::kRunning);
}

TEST(Step, GoalCheckedBeforeMotion) {
  const World w = BuildWorld(EnvConfig::Default());
  const State2 in_goal{-7.0, 7.5};
  const StepResult r = Step(w, in_goal, {1.5, 0.0}, 3);
  EXPECT_EQ(r.outcome, Outcome::kSuccess);
  EXPECT_EQ(r.next, in_goal);
}

TEST(Step, TimeoutOnLastStep) {
  const World w = BuildWorld(EnvConfig::Default());
  EXPECT_EQ(Step(w, {-7.0, -7.0}, {0.0, 0.0}, w.horizon() - 1).outcome, Outcome::kTimeout);
  EXPECT_EQ(Step(w, {-7.0, -7.0}, {0.0, 0.0}, w.horizon() - 2).outcome, Outcome::kRunning);
  EXPECT_THROW(Step(w, {-7.0, -7.0}, {0.0, 0.0}, w.horizon()), std::out_of_range);
}

TEST(Step, LeavingTheBoxIsOutOfBounds) {
  const World w = BuildWorld(OpenConfig());
  EXPECT_EQ(Step(w, {9.5, 0.0}, {0.5, 0.0}, 0).outcome, Outcome::kOutOfBounds);
}

TEST(Step, OversizedActionIsClippedAndFlagged) {
  const World w = BuildWorld(OpenConfig());
  const StepResult r = Step(w, {0.0, 0.0}, {3.0, 4.0}, 0);
  EXPECT_TRUE(r.clipped);
  EXPECT_NEAR(Norm(r.next.pos()), 1.5, 1e-12);
  EXPECT_NEAR(r.next.x, 0.9, 1e-12);
  EXPECT_NEAR(r.next.y, 1.2, 1e-12);
}

TEST(Step, PureFunctionOfInputs) {
  const World w = BuildWorld(EnvConfig::Default());
  const State2 s{-1.6, -5.4};
  const Action2 a{1.2, 0.3};
  const StepResult a1 = Step(w, s, a, 10);
  Step(w, {3.0, 3.0}, {-1.0, 1.0}, 4);
  const StepResult a2 = Step(w, s, a, 10);
  EXPECT_EQ(a1.next, a2.next);
  EXPECT_EQ(a1.outcome, a2.outcome);
}

TEST(Step, DeterministicTrajectoryGivenSeedAndActions) {
  const World w = BuildWorld(EnvConfig::Default());
  auto roll = [&] {
    std::vector<State2> states;
    Rng rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    State2 s = Reset(w, 17);
    for (int t = 0; t < w.horizon(); ++t) {
      const StepResult r = Step(w, s, {u(rng), u(rng)}, t);
      states.push_back(r.next);
      s = r.next;
      if (IsTerminal(r.outcome)) break;
    }
    return states;
  };
  EXPECT_EQ(roll(), roll());
}

TEST(Clearance, CentreOfWideApertureMatchesGeometry) {
  const World w = BuildWorld(EnvConfig::Default());
  const Aperture& a = w.apertures()[0];
  EXPECT_NEAR(Clearance(w, a.center), 0.5 * a.width - 0.25, 1e-12);
  EXPECT_NEAR(Clearance(w, a.center), 1.25, 1e-12);
  EXPECT_NEAR(Clearance(w, a.center), testing_oracle::Clearance(w.config(), a.center), 1e-12);
}

TEST(Clearance, OpenRegionIsBoundaryDistance) {
  const World w = BuildWorld(OpenConfig());
  EXPECT_NEAR(Clearance(w, {6.0, 1.0}), 4.0 - 0.25, 1e-12);
}

TEST(Clearance, TouchingAWallIsZero) {
  const World w = BuildWorld(SingleWallConfig());
  EXPECT_NEAR(Clearance(w, {0.25, 4.0}), 0.0, 1e-12);
  EXPECT_LT(Clearance(w, {0.1, 4.0}), 0.0);
}

TEST(Clearance, AgreesWithRectangleOracleOnDefaultLayout) {
  const World w = BuildWorld(EnvConfig::Default());
  Rng rng(21);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 2000; ++i) {
    const Vec2 p{u(rng), u(rng)};
    if (testing_oracle::InsideWall(w.config(), p)) continue;
    ASSERT_NEAR(Clearance(w, p), testing_oracle::Clearance(w.config(), p), 1e-9) << p.x << "," << p.y;
  }
}

// Swept-circle collision against 100-substep dense checking on random moves.
TEST(Step, NoTunnelingAgainstDenseOracle) {
  const World w = BuildWorld(EnvConfig::Default());
  Rng rng(2024);
  std::uniform_real_distribution<double> pos(-10.0, 10.0);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> mag(0.0, 1.5);
  int collisions = 0, checked = 0;
  while (checked < 3000) {
    const Vec2 p{pos(rng), pos(rng)};
    if (testing_oracle::Clearance(w.config(), p) <= 0.0 || InGoal(w, p)) continue;
    const double th = ang(rng), m = mag(rng);
    const Action2 a{m * std::cos(th), m * std::sin(th)};
    const bool dense = testing_oracle::DenseCollision(w.config(), p, a.vec(), 100);
    const bool swept = Step(w, ToState(p), a, 0).outcome == Outcome::kCollision;
    ASSERT_EQ(swept, dense) << "p=(" << p.x << "," << p.y << ") a=(" << a.vx << "," << a.vy << ")";
    collisions += swept;
    ++checked;
  }
  EXPECT_GT(collisions, 20);
}

TEST(Step, CollisionPathTouchesWall) {
  const World w = BuildWorld(EnvConfig::Default());
  Rng rng(5);
  std::uniform_real_distribution<double> pos(-10.0, 10.0);
  std::uniform_real_distribution<double> act(-1.06, 1.06);
  int found = 0;
  while (found < 200) {
    const Vec2 p{pos(rng), pos(rng)};
    if (Clearance(w, p) <= 0.0 || InGoal(w, p)) continue;
    const StepResult r = Step(w, ToState(p), {act(rng), act(rng)}, 0);
    if (r.outcome != Outcome::kCollision) continue;
    ++found;
    ASSERT_LE(WallClearance(w, r.next.pos()), 1e-9);
  }
}

TEST(Geometry, SegmentDistances) {
  EXPECT_DOUBLE_EQ(PointSegmentDistance({0.0, 1.0}, {{-1.0, 0.0}, {1.0, 0.0}}), 1.0);
  EXPECT_DOUBLE_EQ(PointSegmentDistance({3.0, 4.0}, {{0.0, 0.0}, {0.0, 0.0}}), 5.0);
  EXPECT_DOUBLE_EQ(SegmentSegmentDistance({{-1.0, 0.0}, {1.0, 0.0}}, {{0.0, -1.0}, {0.0, 1.0}}), 0.0);
  EXPECT_DOUBLE_EQ(SegmentSegmentDistance({{0.0, 0.0}, {1.0, 0.0}}, {{0.0, 2.0}, {1.0, 2.0}}), 2.0);
}

}  // namespace
}  // namespace dpiil

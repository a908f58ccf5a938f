#ifndef DPIIL_ARENA_H_
#define DPIIL_ARENA_H_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpiil {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double Dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double Norm(const Vec2& a) { return std::hypot(a.x, a.y); }

// Agent position in cm.
struct State2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 pos() const { return {x, y}; }
  bool operator==(const State2&) const = default;
};

// Velocity command in cm/step.
struct Action2 {
  double vx = 0.0;
  double vy = 0.0;

  Vec2 vec() const { return {vx, vy}; }
  double norm() const { return std::hypot(vx, vy); }
  bool operator==(const Action2&) const = default;
};

inline State2 ToState(const Vec2& v) { return {v.x, v.y}; }
inline Action2 ToAction(const Vec2& v) { return {v.x, v.y}; }

// Scales `a` down to norm `max_norm` when it is longer.
Action2 ClipAction(const Action2& a, double max_norm);

struct Segment {
  Vec2 a;
  Vec2 b;
};

// Distance from point p to the closed segment s.
double PointSegmentDistance(const Vec2& p, const Segment& s);

// Minimum distance between two closed segments.
double SegmentSegmentDistance(const Segment& s1, const Segment& s2);

// An axis-aligned wall from `from` to `to`. A wall with positive thickness
// occupies the rectangle swept by the centre line. The aperture is an open
// gap of `gap_width` centred at `gap_center` along the wall's axis; a zero
// width means the wall has no aperture.
struct WallSpec {
  Vec2 from;
  Vec2 to;
  double thickness = 0.0;
  double gap_center = 0.0;
  double gap_width = 0.0;
};

struct EnvConfig {
  static constexpr int kSchemaVersion = 1;

  double half_extent = 10.0;
  std::vector<WallSpec> walls;
  double agent_radius = 0.25;
  Vec2 start{-7.0, -7.0};
  Vec2 goal{-7.0, 7.0};
  double goal_radius = 1.0;
  int horizon = 200;
  double init_noise = 2.0;
  double max_action = 1.5;

  // Canonical two-aperture layout (3.0 cm then 1.5 cm).
  static EnvConfig Default();
};

enum class Outcome { kRunning, kSuccess, kCollision, kOutOfBounds, kTimeout };

const char* OutcomeName(Outcome o);
Outcome ParseOutcome(const std::string& name);
inline bool IsTerminal(Outcome o) { return o != Outcome::kRunning; }

struct StepResult {
  State2 next;
  Outcome outcome = Outcome::kRunning;
  bool clipped = false;
};

struct Aperture {
  Vec2 center;
  double width = 0.0;
  bool vertical_wall = true;
};

// Immutable obstacle geometry resolved from an EnvConfig.
class World {
 public:
  const EnvConfig& config() const { return config_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<Aperture>& apertures() const { return apertures_; }

  double radius() const { return config_.agent_radius; }
  double max_action() const { return config_.max_action; }
  int horizon() const { return config_.horizon; }

 private:
  friend World BuildWorld(const EnvConfig& cfg);
  EnvConfig config_;
  std::vector<Segment> segments_;
  std::vector<Aperture> apertures_;
};

// Throws ConfigError on infeasible geometry.
World BuildWorld(const EnvConfig& cfg);

// Start position plus independent per-axis uniform noise.
State2 Reset(const World& world, std::uint64_t seed);

// Advances one step. The goal test runs before motion; a swept-circle test
// against every wall segment reports the first contact as a Collision.
StepResult Step(const World& world, const State2& s, const Action2& a, int t);

// Free distance between the agent surface and the nearest wall.
double WallClearance(const World& world, const Vec2& p);
// Free distance to the arena boundary (negative once outside).
double BoundaryClearance(const World& world, const Vec2& p);
// min(WallClearance, BoundaryClearance).
double Clearance(const World& world, const Vec2& p);

// Fraction in [0, 1] of the motion s -> s + d at which the agent first
// touches a wall, or a negative value when the motion is free.
double FirstContact(const World& world, const Vec2& s, const Vec2& d);

bool InGoal(const World& world, const Vec2& p);

}  // namespace dpiil

#endif  // DPIIL_ARENA_H_

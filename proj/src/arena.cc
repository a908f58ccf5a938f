#include "dpiil/arena.h"

#include <algorithm>
#include <limits>
#include <random>

#include "dpiil/random.h"

namespace dpiil {

Action2 ClipAction(const Action2& a, double max_norm) {
  const double n = a.norm();
  if (n <= max_norm || n == 0.0) return a;
  const double s = max_norm / n;
  return {a.vx * s, a.vy * s};
}

double PointSegmentDistance(const Vec2& p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len2 = Dot(d, d);
  double u = 0.0;
  if (len2 > 0.0) u = std::clamp(Dot(p - s.a, d) / len2, 0.0, 1.0);
  return Norm(p - (s.a + d * u));
}

namespace {

double Cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

bool SegmentsIntersect(const Segment& s1, const Segment& s2) {
  const Vec2 r = s1.b - s1.a;
  const Vec2 q = s2.b - s2.a;
  const double denom = Cross(r, q);
  if (denom == 0.0) return false;  // parallel: endpoint distances cover it
  const Vec2 w = s2.a - s1.a;
  const double t = Cross(w, q) / denom;
  const double u = Cross(w, r) / denom;
  return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

}  // namespace

double SegmentSegmentDistance(const Segment& s1, const Segment& s2) {
  if (SegmentsIntersect(s1, s2)) return 0.0;
  return std::min({PointSegmentDistance(s1.a, s2), PointSegmentDistance(s1.b, s2),
                   PointSegmentDistance(s2.a, s1), PointSegmentDistance(s2.b, s1)});
}

EnvConfig EnvConfig::Default() {
  EnvConfig cfg;
  // First wall: x = 0 below the divider, 3.0 cm aperture at y = -5.
  cfg.walls.push_back({{0.0, -10.0}, {0.0, 0.0}, 2.0, -5.0, 3.0});
  // Divider between the start and goal halves; the gap x in [5, 10] is the
  // corridor that carries the route up the right side.
  cfg.walls.push_back({{-10.0, 0.0}, {5.0, 0.0}, 1.0, 0.0, 0.0});
  // Second wall: x = 5 above the divider, 1.5 cm aperture at y = +5.
  cfg.walls.push_back({{5.0, 0.0}, {5.0, 10.0}, 2.0, 5.0, 1.5});
  return cfg;
}

const char* OutcomeName(Outcome o) {
  switch (o) {
    case Outcome::kRunning: return "running";
    case Outcome::kSuccess: return "success";
    case Outcome::kCollision: return "collision";
    case Outcome::kOutOfBounds: return "out_of_bounds";
    case Outcome::kTimeout: return "timeout";
  }
  return "running";
}

Outcome ParseOutcome(const std::string& name) {
  for (Outcome o : {Outcome::kRunning, Outcome::kSuccess, Outcome::kCollision,
                    Outcome::kOutOfBounds, Outcome::kTimeout}) {
    if (name == OutcomeName(o)) return o;
  }
  throw std::invalid_argument("unknown outcome '" + name + "'");
}

namespace {

void AddRectangle(std::vector<Segment>& out, double x0, double y0, double x1,
                  double y1) {
  if (x0 == x1 || y0 == y1) {
    out.push_back({{x0, y0}, {x1, y1}});
    return;
  }
  out.push_back({{x0, y0}, {x1, y0}});
  out.push_back({{x1, y0}, {x1, y1}});
  out.push_back({{x1, y1}, {x0, y1}});
  out.push_back({{x0, y1}, {x0, y0}});
}

struct Box {
  double x0, y0, x1, y1;
};

// Emits the solid piece [lo, hi] of a wall along its axis.
void AddPiece(std::vector<Segment>& out, std::vector<Box>& boxes, const WallSpec& w,
              bool vertical, double lo, double hi) {
  if (hi <= lo) return;
  const double h = 0.5 * w.thickness;
  const Box b = vertical ? Box{w.from.x - h, lo, w.from.x + h, hi}
                         : Box{lo, w.from.y - h, hi, w.from.y + h};
  AddRectangle(out, b.x0, b.y0, b.x1, b.y1);
  boxes.push_back(b);
}

bool InsideAny(const std::vector<Box>& boxes, const Vec2& p) {
  for (const Box& b : boxes) {
    if (p.x >= b.x0 && p.x <= b.x1 && p.y >= b.y0 && p.y <= b.y1) return true;
  }
  return false;
}

}  // namespace

World BuildWorld(const EnvConfig& cfg) {
  if (cfg.horizon <= 0) throw ConfigError("horizon must be positive");
  if (!(cfg.agent_radius > 0.0)) throw ConfigError("agent radius must be positive");
  if (!(cfg.half_extent > 0.0)) throw ConfigError("arena half-extent must be positive");
  if (!(cfg.max_action > 0.0)) throw ConfigError("max action must be positive");
  if (cfg.init_noise < 0.0) throw ConfigError("init noise must be non-negative");
  if (!(cfg.goal_radius > 0.0)) throw ConfigError("goal radius must be positive");

  World world;
  world.config_ = cfg;
  std::vector<Box> boxes;
  for (std::size_t i = 0; i < cfg.walls.size(); ++i) {
    const WallSpec& w = cfg.walls[i];
    const std::string tag = "wall " + std::to_string(i) + ": ";
    const bool vertical = w.from.x == w.to.x;
    const bool horizontal = w.from.y == w.to.y;
    if (vertical == horizontal) throw ConfigError(tag + "must be axis-aligned with nonzero length");
    if (w.thickness < 0.0) throw ConfigError(tag + "negative thickness");
    const double lo = vertical ? std::min(w.from.y, w.to.y) : std::min(w.from.x, w.to.x);
    const double hi = vertical ? std::max(w.from.y, w.to.y) : std::max(w.from.x, w.to.x);
    if (w.gap_width <= 0.0) {
      AddPiece(world.segments_, boxes, w, vertical, lo, hi);
      continue;
    }
    if (w.gap_width <= 2.0 * cfg.agent_radius) {
      throw ConfigError(tag + "aperture " + std::to_string(w.gap_width) +
                        " cm does not exceed the agent diameter");
    }
    const double g0 = w.gap_center - 0.5 * w.gap_width;
    const double g1 = w.gap_center + 0.5 * w.gap_width;
    if (g0 < lo || g1 > hi) throw ConfigError(tag + "aperture extends beyond the wall");
    AddPiece(world.segments_, boxes, w, vertical, lo, g0);
    AddPiece(world.segments_, boxes, w, vertical, g1, hi);
    const Vec2 c = vertical ? Vec2{w.from.x, w.gap_center} : Vec2{w.gap_center, w.from.y};
    world.apertures_.push_back({c, w.gap_width, vertical});
  }
  for (const auto& [name, p] : {std::pair{"start", cfg.start}, std::pair{"goal", cfg.goal}}) {
    if (InsideAny(boxes, p) || Clearance(world, p) <= 0.0) {
      throw ConfigError(std::string(name) + " position is not clear of walls and boundary");
    }
  }
  return world;
}

State2 Reset(const World& world, std::uint64_t seed) {
  const EnvConfig& cfg = world.config();
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-cfg.init_noise, cfg.init_noise);
  State2 s = ToState(cfg.start);
  if (cfg.init_noise > 0.0) {
    s.x += u(rng);
    s.y += u(rng);
  }
  return s;
}

double WallClearance(const World& world, const Vec2& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const Segment& s : world.segments()) d = std::min(d, PointSegmentDistance(p, s));
  return d - world.radius();
}

double BoundaryClearance(const World& world, const Vec2& p) {
  const double h = world.config().half_extent;
  return std::min(h - std::abs(p.x), h - std::abs(p.y)) - world.radius();
}

double Clearance(const World& world, const Vec2& p) {
  return std::min(WallClearance(world, p), BoundaryClearance(world, p));
}

double FirstContact(const World& world, const Vec2& s, const Vec2& d) {
  const double r = world.radius();
  const Segment path{s, s + d};
  double best = -1.0;
  for (const Segment& wall : world.segments()) {
    if (SegmentSegmentDistance(path, wall) > r) continue;
    if (PointSegmentDistance(s, wall) <= r) return 0.0;
    // Distance to a convex set is convex along the path, so the contact set
    // is an interval. Locate a point inside it, then bisect its left edge.
    double lo = 0.0;
    double hi = 1.0;
    if (PointSegmentDistance(s + d, wall) > r) {
      // Minimum lies strictly inside; golden-section search for it.
      double a = 0.0, b = 1.0;
      const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
      double c1 = b - phi * (b - a), c2 = a + phi * (b - a);
      double f1 = PointSegmentDistance(s + d * c1, wall);
      double f2 = PointSegmentDistance(s + d * c2, wall);
      for (int i = 0; i < 100 && f1 > r && f2 > r; ++i) {
        if (f1 < f2) {
          b = c2; c2 = c1; f2 = f1;
          c1 = b - phi * (b - a);
          f1 = PointSegmentDistance(s + d * c1, wall);
        } else {
          a = c1; c1 = c2; f1 = f2;
          c2 = a + phi * (b - a);
          f2 = PointSegmentDistance(s + d * c2, wall);
        }
      }
      if (f1 <= r) hi = c1;
      else if (f2 <= r) hi = c2;
      else hi = 0.5 * (a + b);  // grazing contact within round-off
    }
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (PointSegmentDistance(s + d * mid, wall) <= r) hi = mid;
      else lo = mid;
    }
    if (best < 0.0 || hi < best) best = hi;
  }
  return best;
}

bool InGoal(const World& world, const Vec2& p) {
  return Norm(p - world.config().goal) <= world.config().goal_radius;
}

StepResult Step(const World& world, const State2& s, const Action2& a, int t) {
  if (t < 0 || t >= world.horizon()) throw std::out_of_range("step index outside horizon");
  StepResult r;
  r.next = s;
  if (InGoal(world, s.pos())) {
    r.outcome = Outcome::kSuccess;
    return r;
  }
  const Action2 clipped = ClipAction(a, world.max_action());
  r.clipped = !(clipped == a);
  const Vec2 d = clipped.vec();
  const double contact = FirstContact(world, s.pos(), d);
  if (contact >= 0.0) {
    r.next = ToState(s.pos() + d * contact);
    r.outcome = Outcome::kCollision;
    return r;
  }
  r.next = ToState(s.pos() + d);
  if (BoundaryClearance(world, r.next.pos()) < 0.0) {
    r.outcome = Outcome::kOutOfBounds;
  } else if (InGoal(world, r.next.pos())) {
    r.outcome = Outcome::kSuccess;
  } else if (t + 1 == world.horizon()) {
    r.outcome = Outcome::kTimeout;
  }
  return r;
}

}  // namespace dpiil

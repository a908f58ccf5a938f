#include "dpiil/oracle.h"

#include <algorithm>
#include <limits>
#include <random>

namespace dpiil {

ExpertConfig ExpertConfig::Default() {
  ExpertConfig cfg;
  cfg.path = {{-7.0, -7.0}, {-2.5, -5.0}, {2.5, -5.0}, {8.4, -2.0},
              {8.4, 5.0},  {3.25, 5.0},  {-7.0, 7.0}};
  return cfg;
}

void ExpertConfig::Validate(double max_action) const {
  if (path.size() < 2) throw ConfigError("expert path needs at least two waypoints");
  if (!(v_slow > 0.0 && v_slow < v_fast && v_fast <= max_action)) {
    throw ConfigError("expert speeds must satisfy 0 < v_slow < v_fast <= max_action");
  }
  if (noise_k < 0.0) throw ConfigError("expert noise coefficient must be non-negative");
  if (blend_band < 0.0) throw ConfigError("expert blend band must be non-negative");
  if (tracking_gain < 0.0) throw ConfigError("expert tracking gain must be non-negative");
}

void HgGateConfig::Validate() const {
  if (!(d_safe > 0.0 && d_dev > 0.0)) throw ConfigError("HG gate thresholds must be positive");
}

PathProjection ProjectOntoPath(const std::vector<Vec2>& path, const Vec2& p) {
  PathProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec2 a = path[i];
    const Vec2 d = path[i + 1] - a;
    const double len2 = Dot(d, d);
    if (len2 == 0.0) continue;
    const double u = std::clamp(Dot(p - a, d) / len2, 0.0, 1.0);
    const Vec2 q = a + d * u;
    const double dist = Norm(p - q);
    if (dist < best.distance) {
      best.distance = dist;
      best.point = q;
      best.tangent = d * (1.0 / std::sqrt(len2));
      best.at_end = (i + 2 == path.size()) && u >= 1.0;
    }
  }
  return best;
}

double ExpertSpeed(const World& world, const ExpertConfig& cfg, const Vec2& p) {
  const double c = Clearance(world, p);
  if (c < cfg.slow_clearance) return cfg.v_slow;
  if (cfg.blend_band <= 0.0 || c >= cfg.slow_clearance + cfg.blend_band) return cfg.v_fast;
  const double w = (c - cfg.slow_clearance) / cfg.blend_band;
  return cfg.v_slow + w * (cfg.v_fast - cfg.v_slow);
}

Action2 ExpertCommand(const World& world, const ExpertConfig& cfg, const State2& s) {
  const Vec2 p = s.pos();
  const PathProjection proj = ProjectOntoPath(cfg.path, p);
  Vec2 dir;
  if (proj.at_end) {
    dir = cfg.path.back() - p;
  } else {
    dir = proj.tangent + (proj.point - p) * cfg.tracking_gain;
  }
  const double n = Norm(dir);
  if (n == 0.0) return {};
  const double v = ExpertSpeed(world, cfg, p);
  return ToAction(dir * (v / n));
}

Action2 ExpertAction(const World& world, const ExpertConfig& cfg, const State2& s, Rng& rng) {
  const Action2 cmd = ExpertCommand(world, cfg, s);
  const double sd = cfg.noise_k * cmd.norm();
  Action2 a = cmd;
  if (sd > 0.0) {
    std::normal_distribution<double> noise(0.0, sd);
    a.vx += noise(rng);
    a.vy += noise(rng);
  }
  return ClipAction(a, world.max_action());
}

bool HgGate(const World& world, const ExpertConfig& expert, const HgGateConfig& gate,
            const State2& s) {
  if (Clearance(world, s.pos()) < gate.d_safe) return true;
  return ProjectOntoPath(expert.path, s.pos()).distance > gate.d_dev;
}

Dataset GenerateDemos(const World& world, const ExpertConfig& cfg, int n_traj,
                      std::uint64_t seed, DemoGenStats* stats, int max_attempts) {
  if (n_traj < 1) throw GenerationError("demo generation needs n_traj >= 1");
  cfg.Validate(world.max_action());
  if (max_attempts < 0) max_attempts = 10 * n_traj + 10;
  Dataset data;
  int kept = 0;
  int attempt = 0;
  int failures = 0;
  for (; kept < n_traj && attempt < max_attempts; ++attempt) {
    Rng rng(DeriveSeed(seed, static_cast<std::uint64_t>(attempt), 1));
    State2 s = Reset(world, DeriveSeed(seed, static_cast<std::uint64_t>(attempt), 0));
    Dataset episode;
    Outcome outcome = Outcome::kRunning;
    for (int t = 0; t < world.horizon() && !IsTerminal(outcome); ++t) {
      if (InGoal(world, s.pos())) {
        outcome = Outcome::kSuccess;
        break;
      }
      const Action2 a = ExpertAction(world, cfg, s, rng);
      const StepResult r = Step(world, s, a, t);
      episode.push_back({s, a, SpeedOf(s, r.next)});
      s = r.next;
      outcome = r.outcome;
    }
    if (outcome == Outcome::kSuccess) {
      data.insert(data.end(), episode.begin(), episode.end());
      ++kept;
    } else {
      ++failures;
    }
  }
  if (stats != nullptr) *stats = {attempt, failures};
  if (kept < n_traj) {
    throw GenerationError("expert reached the goal in only " + std::to_string(kept) + " of " +
                          std::to_string(attempt) + " attempts");
  }
  return data;
}

}  // namespace dpiil

#ifndef DPIIL_ORACLE_H_
#define DPIIL_ORACLE_H_

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dpiil/arena.h"
#include "dpiil/dataset.h"
#include "dpiil/random.h"

namespace dpiil {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Algorithmic expert: tracks a reference polyline, moving fast in open space
// and slowly where clearance is small. Actions carry signal-dependent noise.
struct ExpertConfig {
  std::vector<Vec2> path;
  double v_fast = 1.0;
  double v_slow = 0.2;
  double slow_clearance = 1.0;
  double blend_band = 0.5;
  double noise_k = 0.1;
  double tracking_gain = 0.7;

  // Reference route for EnvConfig::Default().
  static ExpertConfig Default();
  // Throws ConfigError unless 0 < v_slow < v_fast <= max_action and k >= 0.
  void Validate(double max_action) const;
};

struct HgGateConfig {
  double d_safe = 0.5;
  double d_dev = 1.5;

  void Validate() const;
};

struct PathProjection {
  Vec2 point;
  Vec2 tangent;
  double distance = 0.0;
  bool at_end = false;
};

PathProjection ProjectOntoPath(const std::vector<Vec2>& path, const Vec2& p);

// Commanded speed from clearance alone; monotone non-decreasing in clearance.
double ExpertSpeed(const World& world, const ExpertConfig& cfg, const Vec2& p);

// Noise-free command.
Action2 ExpertCommand(const World& world, const ExpertConfig& cfg, const State2& s);

// Command plus N(0, (k |command|)^2) per axis, clipped to the action limit.
Action2 ExpertAction(const World& world, const ExpertConfig& cfg, const State2& s, Rng& rng);

// Oracle intervention rule used by HG-DAgger.
bool HgGate(const World& world, const ExpertConfig& expert, const HgGateConfig& gate,
            const State2& s);

struct DemoGenStats {
  int attempts = 0;
  int failures = 0;
};

// Rolls the expert from noisy resets and keeps `n_traj` successful episodes.
// Episode i uses seed DeriveSeed(seed, attempt); failures are retried up to
// `max_attempts` in total.
Dataset GenerateDemos(const World& world, const ExpertConfig& cfg, int n_traj,
                      std::uint64_t seed, DemoGenStats* stats = nullptr,
                      int max_attempts = -1);

}  // namespace dpiil

#endif  // DPIIL_ORACLE_H_

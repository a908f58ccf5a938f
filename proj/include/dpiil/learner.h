#ifndef DPIIL_LEARNER_H_
#define DPIIL_LEARNER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpiil/arena.h"
#include "dpiil/dataset.h"
#include "dpiil/estimators.h"
#include "dpiil/oracle.h"
#include "dpiil/random.h"
#include "dpiil/riskgate.h"

namespace dpiil {

enum class Algorithm { kBc, kDagger, kEnsembleDagger, kHgDagger, kDpiilMu, kDpiilUcb };

const char* AlgorithmName(Algorithm a);
// Accepts the CLI spellings (dpiil-ucb, ensemble-dagger, ...). Throws
// std::invalid_argument("unknown algorithm ...") otherwise.
Algorithm ParseAlgorithm(const std::string& name);
bool UsesRiskGate(Algorithm a);

struct ChiPolicy {
  bool fixed = false;
  double value = 1e-4;     // used when fixed
  double quantile = 0.80;  // used when recalibrating
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::kDpiilUcb;
  int iterations = 5;
  int budget = 200;
  int initial_demos = 3;
  std::uint64_t seed = 0;
  int ensemble_size = 5;
  double dagger_beta = 0.2;
  ChiPolicy chi;
  int eval_episodes = 100;
  bool eval_each_iteration = true;
  // Interaction stops early when an iteration runs this many episodes
  // without filling its budget (e.g. a threshold that never fires).
  int max_episodes_per_iteration = 1000;

  EnvConfig env = EnvConfig::Default();
  ExpertConfig expert = ExpertConfig::Default();
  HgGateConfig hg;
  NetConfig net;

  // Throws ConfigError on invalid values.
  void Validate() const;
};

struct StepRecord {
  int t = 0;
  State2 s;
  Action2 a;
  ControlMode mode = ControlMode::kAuto;
  double risk = 0.0;
  Outcome outcome = Outcome::kRunning;
  bool clipped = false;
};

struct EpisodeLog {
  int episode = 0;    // global index within the run
  int iteration = 0;  // 1-based interaction iteration
  std::vector<StepRecord> steps;
  Outcome outcome = Outcome::kRunning;
};

struct IterationMetrics {
  int iteration = 0;
  int episodes = 0;
  int successes = 0;
  long expert_steps = 0;
  long interventions = 0;
  int samples_added = 0;
  std::size_t dataset_size = 0;
  double chi = 0.0;
  bool budget_filled = true;
  double autonomous_performance = -1.0;  // after refit; -1 when not evaluated
};

struct RunMetrics {
  std::string algorithm;
  std::uint64_t seed = 0;
  int interactive_episodes = 0;
  int interactive_successes = 0;
  // Success fraction over interactive episodes; nullopt when there were none.
  std::optional<double> interactive_performance;
  double autonomous_performance = 0.0;
  int eval_episodes = 0;
  long expert_cost = 0;  // expert-mode steps during interaction (C)
  long interventions = 0;
  std::size_t initial_samples = 0;
  std::size_t dataset_size = 0;
  // Expert actions used for training: initial demos plus interaction C, or
  // initial plus extra demos for BC.
  long total_expert_actions = 0;
  std::vector<IterationMetrics> iterations;
};

// Optional replacements for the model-fitting steps.
struct LearnerHooks {
  std::function<SpeedEstimator(const Dataset&, std::uint64_t)> fit_speed;
};

struct RunResult {
  EnsemblePolicy policy;
  std::optional<SpeedEstimator> speed;
  RunMetrics metrics;
  Dataset dataset;
  std::vector<EpisodeLog> logs;
  // Policy after initialisation and after every iteration.
  std::vector<EnsemblePolicy> checkpoints;
};

// Interactive loop for DPIIL_MU / DPIIL_UCB.
RunResult RunDpiil(const TrainConfig& cfg, const LearnerHooks& hooks = {});
// BC, DAgger, EnsembleDAgger and HG-DAgger.
RunResult RunBaseline(const TrainConfig& cfg, const LearnerHooks& hooks = {});
// Dispatches on cfg.algorithm.
RunResult Run(const TrainConfig& cfg, const LearnerHooks& hooks = {});

// Controller used for autonomous rollouts. `rng` is private to the episode.
using Controller = std::function<Action2(const State2&, Rng&)>;

Controller PolicyController(const EnsemblePolicy& policy);
Controller ExpertController(const World& world, const ExpertConfig& expert);
Controller RandomController(double max_action);

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  std::vector<Outcome> outcomes;
  double success_rate() const { return episodes == 0 ? 0.0 : double(successes) / episodes; }
};

// Autonomous rollouts from noisy resets, episodes spread over OpenMP threads.
// Episode i resets with DeriveSeed(seed, i, 0) and drives the controller with
// DeriveSeed(seed, i, 1), so the result does not depend on scheduling.
EvalResult EvaluateEpisodes(const Controller& ctrl, const World& world, int n_episodes,
                            std::uint64_t seed);
// Single-threaded reference.
EvalResult EvaluateEpisodesSerial(const Controller& ctrl, const World& world, int n_episodes,
                                  std::uint64_t seed);

// Success fraction of the ensemble-mean policy. Throws for n_episodes < 1.
double EvaluatePolicy(const EnsemblePolicy& policy, const World& world, int n_episodes,
                      std::uint64_t seed);

// Squared Pearson correlation; `degenerate` is set (and 0 returned) when
// either series has zero variance or fewer than two points.
double RSquared(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate = nullptr);

struct SweepRow {
  double chi = 0.0;
  double interactive = 0.0;
  double autonomous = 0.0;
  long expert_cost = 0;
};

struct SweepTable {
  std::string algorithm;
  std::vector<SweepRow> rows;
  double r2_interactive = 0.0;
  double r2_autonomous = 0.0;
  bool degenerate_interactive = false;
  bool degenerate_autonomous = false;
};

// One run per fixed chi (calibration frozen); r^2 against log10(chi).
SweepTable ChiSweep(const TrainConfig& cfg, const std::vector<double>& chi_grid);

// n points log-spaced over [lo, hi] inclusive.
std::vector<double> LogGrid(double lo, double hi, int n);

// Replicated runs over seeds (OpenMP over seeds); results in seed order.
std::vector<RunMetrics> RunSeeds(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds);

}  // namespace dpiil

#endif  // DPIIL_LEARNER_H_

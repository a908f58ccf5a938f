#include "dpiil/learner.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <random>
#include <stdexcept>

namespace dpiil {

namespace {

// Stream tags for DeriveSeed.
constexpr std::uint64_t kDemoStream = 1;
constexpr std::uint64_t kModelStream = 2;
constexpr std::uint64_t kEpisodeStream = 3;
constexpr std::uint64_t kEvalStream = 4;
constexpr std::uint64_t kBcStream = 5;

struct AlgorithmSpelling {
  Algorithm algo;
  const char* name;
};

constexpr AlgorithmSpelling kSpellings[] = {
    {Algorithm::kBc, "bc"},
    {Algorithm::kDagger, "dagger"},
    {Algorithm::kEnsembleDagger, "ensemble-dagger"},
    {Algorithm::kHgDagger, "hg-dagger"},
    {Algorithm::kDpiilMu, "dpiil-mu"},
    {Algorithm::kDpiilUcb, "dpiil-ucb"},
};

}  // namespace

const char* AlgorithmName(Algorithm a) {
  for (const auto& s : kSpellings) {
    if (s.algo == a) return s.name;
  }
  return "unknown";
}

Algorithm ParseAlgorithm(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) {
    return c == '_' ? '-' : static_cast<char>(std::tolower(c));
  });
  for (const auto& s : kSpellings) {
    if (n == s.name) return s.algo;
  }
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

bool UsesRiskGate(Algorithm a) {
  return a == Algorithm::kDpiilMu || a == Algorithm::kDpiilUcb || a == Algorithm::kEnsembleDagger;
}

void TrainConfig::Validate() const {
  if (iterations < 0) throw ConfigError("iterations K must be >= 0");
  if (budget < 1) throw ConfigError("per-iteration budget must be >= 1");
  if (initial_demos < 1) throw ConfigError("initial demo count must be >= 1");
  if (ensemble_size < 2) throw ConfigError("ensemble size must be >= 2");
  if (!(dagger_beta >= 0.0 && dagger_beta <= 1.0)) throw ConfigError("DAgger beta must lie in [0, 1]");
  if (chi.fixed && !(chi.value > 0.0)) throw ConfigError("fixed chi must be positive");
  if (!(chi.quantile > 0.0 && chi.quantile < 1.0)) throw ConfigError("chi quantile must lie in (0, 1)");
  if (eval_episodes < 1) throw ConfigError("eval episodes must be >= 1");
  if (max_episodes_per_iteration < 1) throw ConfigError("episode cap must be >= 1");
  if (net.train.epochs < 1 || net.train.batch_size < 1) throw ConfigError("bad training options");
  expert.Validate(env.max_action);
  hg.Validate();
}

Controller PolicyController(const EnsemblePolicy& policy) {
  return [&policy](const State2& s, Rng&) { return PolicyAction(policy, s); };
}

Controller ExpertController(const World& world, const ExpertConfig& expert) {
  return [&world, &expert](const State2& s, Rng& rng) { return ExpertAction(world, expert, s, rng); };
}

Controller RandomController(double max_action) {
  return [max_action](const State2&, Rng& rng) {
    std::uniform_real_distribution<double> u(-max_action, max_action);
    Action2 a;
    do {
      a = {u(rng), u(rng)};
    } while (a.norm() > max_action);
    return a;
  };
}

namespace {

Outcome RolloutEpisode(const Controller& ctrl, const World& world, std::uint64_t seed, int i) {
  const auto idx = static_cast<std::uint64_t>(i);
  Rng rng(DeriveSeed(seed, idx, 1));
  State2 s = Reset(world, DeriveSeed(seed, idx, 0));
  for (int t = 0; t < world.horizon(); ++t) {
    const StepResult r = Step(world, s, ctrl(s, rng), t);
    if (IsTerminal(r.outcome)) return r.outcome;
    s = r.next;
  }
  return Outcome::kTimeout;
}

EvalResult Tally(std::vector<Outcome> outcomes) {
  EvalResult r;
  r.episodes = static_cast<int>(outcomes.size());
  r.successes = static_cast<int>(std::count(outcomes.begin(), outcomes.end(), Outcome::kSuccess));
  r.outcomes = std::move(outcomes);
  return r;
}

}  // namespace

EvalResult EvaluateEpisodes(const Controller& ctrl, const World& world, int n_episodes,
                            std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
  std::vector<Outcome> outcomes(static_cast<std::size_t>(n_episodes));
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < n_episodes; ++i) {
    try {
      outcomes[static_cast<std::size_t>(i)] = RolloutEpisode(ctrl, world, seed, i);
    } catch (...) {
#pragma omp critical(dpiil_eval_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return Tally(std::move(outcomes));
}

EvalResult EvaluateEpisodesSerial(const Controller& ctrl, const World& world, int n_episodes,
                                  std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
  std::vector<Outcome> outcomes;
  outcomes.reserve(static_cast<std::size_t>(n_episodes));
  for (int i = 0; i < n_episodes; ++i) outcomes.push_back(RolloutEpisode(ctrl, world, seed, i));
  return Tally(std::move(outcomes));
}

double EvaluatePolicy(const EnsemblePolicy& policy, const World& world, int n_episodes,
                      std::uint64_t seed) {
  return EvaluateEpisodes(PolicyController(policy), world, n_episodes, seed).success_rate();
}

namespace {

GateMode GateModeFor(Algorithm a) {
  switch (a) {
    case Algorithm::kDpiilMu: return GateMode::kDpiilMu;
    case Algorithm::kDpiilUcb: return GateMode::kDpiilUcb;
    default: return GateMode::kEnsembleOnly;
  }
}

bool NeedsSpeedModel(Algorithm a) { return a == Algorithm::kDpiilMu || a == Algorithm::kDpiilUcb; }

class Session {
 public:
  Session(const TrainConfig& cfg, const LearnerHooks& hooks)
      : cfg_(cfg), hooks_(hooks), world_(BuildWorld(cfg.env)) {
    cfg_.Validate();
  }

  RunResult Execute() {
    result_.metrics.algorithm = AlgorithmName(cfg_.algorithm);
    result_.metrics.seed = cfg_.seed;
    result_.dataset = GenerateDemos(world_, cfg_.expert, cfg_.initial_demos,
                                    DeriveSeed(cfg_.seed, kDemoStream));
    result_.metrics.initial_samples = result_.dataset.size();
    if (cfg_.algorithm == Algorithm::kBc) {
      AppendBcDemos();
      Refit(0);
      result_.checkpoints.push_back(result_.policy);
    } else {
      Refit(0);
      result_.checkpoints.push_back(result_.policy);
      for (int k = 1; k <= cfg_.iterations; ++k) Interact(k);
    }
    Finish();
    return std::move(result_);
  }

 private:
  void Refit(int k) {
    const std::uint64_t seed = DeriveSeed(cfg_.seed, kModelStream, static_cast<std::uint64_t>(k));
    result_.policy = FitPolicy(result_.dataset, cfg_.ensemble_size, seed, cfg_.net, world_.max_action());
    if (NeedsSpeedModel(cfg_.algorithm)) {
      const std::uint64_t speed_seed = DeriveSeed(seed, 0xabcdULL);
      result_.speed = hooks_.fit_speed ? hooks_.fit_speed(result_.dataset, speed_seed)
                                       : FitSpeed(result_.dataset, speed_seed, cfg_.net);
    }
  }

  // Extra expert demonstrations until BC has seen as many expert actions as
  // the interactive methods are budgeted (K * budget), truncating the last
  // trajectory.
  void AppendBcDemos() {
    const std::size_t target =
        static_cast<std::size_t>(cfg_.iterations) * static_cast<std::size_t>(cfg_.budget);
    Dataset extra;
    for (std::uint64_t i = 0; extra.size() < target; ++i) {
      Dataset d = GenerateDemos(world_, cfg_.expert, 1, DeriveSeed(cfg_.seed, kBcStream, i));
      extra.insert(extra.end(), d.begin(), d.end());
    }
    extra.resize(target);
    result_.dataset.insert(result_.dataset.end(), extra.begin(), extra.end());
  }

  void Interact(int k) {
    IterationMetrics it;
    it.iteration = k;
    std::optional<RiskGate> gate;
    if (UsesRiskGate(cfg_.algorithm)) {
      gate.emplace(GateModeFor(cfg_.algorithm), 1.0, result_.policy,
                   result_.speed ? &*result_.speed : nullptr);
      const double chi = cfg_.chi.fixed ? cfg_.chi.value
                                        : CalibrateChi(*gate, result_.dataset, cfg_.chi.quantile);
      gate->set_chi(chi);
      it.chi = chi;
    }
    Dataset collected;
    const auto budget = static_cast<std::size_t>(cfg_.budget);
    int local = 0;
    while (collected.size() < budget && local < cfg_.max_episodes_per_iteration) {
      EpisodeLog log;
      log.episode = static_cast<int>(result_.logs.size());
      log.iteration = k;
      const std::uint64_t ep_seed =
          DeriveSeed(cfg_.seed, kEpisodeStream, (static_cast<std::uint64_t>(k) << 32) | local);
      Rng expert_rng(DeriveSeed(ep_seed, 1));
      Rng gate_rng(DeriveSeed(ep_seed, 2));
      std::bernoulli_distribution coin(cfg_.dagger_beta);
      State2 s = Reset(world_, DeriveSeed(ep_seed, 0));
      ControlMode prev = ControlMode::kAuto;
      for (int t = 0; t < world_.horizon(); ++t) {
        const EnsembleQuery q = QueryEnsemble(result_.policy, s);
        StepRecord rec;
        rec.t = t;
        rec.s = s;
        switch (cfg_.algorithm) {
          case Algorithm::kDagger:
            rec.mode = coin(gate_rng) ? ControlMode::kExpert : ControlMode::kAuto;
            break;
          case Algorithm::kHgDagger:
            rec.mode = HgGate(world_, cfg_.expert, cfg_.hg, s) ? ControlMode::kExpert : ControlMode::kAuto;
            break;
          default:
            rec.risk = gate->RiskFromVariance(s, q.variance);
            rec.mode = gate->DecideRisk(rec.risk);
            break;
        }
        rec.a = rec.mode == ControlMode::kExpert ? ExpertAction(world_, cfg_.expert, s, expert_rng) : q.mean;
        const StepResult r = Step(world_, s, rec.a, t);
        rec.outcome = r.outcome;
        rec.clipped = r.clipped;
        if (rec.mode == ControlMode::kExpert) {
          ++it.expert_steps;
          if (prev == ControlMode::kAuto) ++it.interventions;
          if (collected.size() < budget) collected.push_back({s, rec.a, SpeedOf(s, r.next)});
        }
        prev = rec.mode;
        log.steps.push_back(rec);
        s = r.next;
        if (IsTerminal(r.outcome)) break;
      }
      log.outcome = log.steps.back().outcome;
      ++it.episodes;
      if (log.outcome == Outcome::kSuccess) ++it.successes;
      result_.logs.push_back(std::move(log));
      ++local;
    }
    it.budget_filled = collected.size() >= budget;
    it.samples_added = static_cast<int>(collected.size());
    result_.dataset.insert(result_.dataset.end(), collected.begin(), collected.end());
    it.dataset_size = result_.dataset.size();
    Refit(k);
    result_.checkpoints.push_back(result_.policy);
    if (cfg_.eval_each_iteration && k < cfg_.iterations) {
      it.autonomous_performance = Evaluate();
    }
    result_.metrics.iterations.push_back(it);
  }

  double Evaluate() const {
    return EvaluatePolicy(result_.policy, world_, cfg_.eval_episodes, DeriveSeed(cfg_.seed, kEvalStream));
  }

  void Finish() {
    RunMetrics& m = result_.metrics;
    for (const IterationMetrics& it : m.iterations) {
      m.interactive_episodes += it.episodes;
      m.interactive_successes += it.successes;
      m.expert_cost += it.expert_steps;
      m.interventions += it.interventions;
    }
    if (m.interactive_episodes > 0) {
      m.interactive_performance = double(m.interactive_successes) / m.interactive_episodes;
    }
    m.autonomous_performance = Evaluate();
    m.eval_episodes = cfg_.eval_episodes;
    if (!m.iterations.empty()) m.iterations.back().autonomous_performance = m.autonomous_performance;
    m.dataset_size = result_.dataset.size();
    m.total_expert_actions = cfg_.algorithm == Algorithm::kBc
                                 ? static_cast<long>(result_.dataset.size())
                                 : static_cast<long>(m.initial_samples) + m.expert_cost;
  }

  TrainConfig cfg_;
  LearnerHooks hooks_;
  World world_;
  RunResult result_;
};

}  // namespace

RunResult RunDpiil(const TrainConfig& cfg, const LearnerHooks& hooks) {
  if (!NeedsSpeedModel(cfg.algorithm)) {
    throw std::invalid_argument("RunDpiil expects dpiil-mu or dpiil-ucb");
  }
  return Session(cfg, hooks).Execute();
}

RunResult RunBaseline(const TrainConfig& cfg, const LearnerHooks& hooks) {
  if (NeedsSpeedModel(cfg.algorithm)) throw std::invalid_argument("RunBaseline expects a baseline algorithm");
  return Session(cfg, hooks).Execute();
}

RunResult Run(const TrainConfig& cfg, const LearnerHooks& hooks) {
  return NeedsSpeedModel(cfg.algorithm) ? RunDpiil(cfg, hooks) : RunBaseline(cfg, hooks);
}

double RSquared(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate) {
  if (degenerate != nullptr) *degenerate = true;
  if (x.size() != y.size()) throw std::invalid_argument("RSquared: series lengths differ");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  if (degenerate != nullptr) *degenerate = false;
  return (sxy * sxy) / (sxx * syy);
}

std::vector<double> LogGrid(double lo, double hi, int n) {
  if (!(lo > 0.0 && hi > 0.0) || n < 1) throw std::invalid_argument("log grid needs positive bounds and n >= 1");
  if (n == 1) return {lo};
  std::vector<double> g(static_cast<std::size_t>(n));
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (n - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

SweepTable ChiSweep(const TrainConfig& cfg, const std::vector<double>& chi_grid) {
  if (chi_grid.empty()) throw std::invalid_argument("chi grid is empty");
  for (double c : chi_grid) {
    if (!(c > 0.0)) throw std::invalid_argument("chi grid values must be positive");
  }
  SweepTable table;
  table.algorithm = AlgorithmName(cfg.algorithm);
  table.rows.resize(chi_grid.size());
  std::exception_ptr error;
  const int n = static_cast<int>(chi_grid.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      TrainConfig c = cfg;
      c.chi.fixed = true;
      c.chi.value = chi_grid[static_cast<std::size_t>(i)];
      c.eval_each_iteration = false;
      const RunMetrics m = Run(c).metrics;
      table.rows[static_cast<std::size_t>(i)] = {c.chi.value, m.interactive_performance.value_or(0.0),
                                                 m.autonomous_performance, m.expert_cost};
    } catch (...) {
#pragma omp critical(dpiil_sweep_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  std::vector<double> lx, yi, ya;
  for (const SweepRow& r : table.rows) {
    lx.push_back(std::log10(r.chi));
    yi.push_back(r.interactive);
    ya.push_back(r.autonomous);
  }
  table.r2_interactive = RSquared(lx, yi, &table.degenerate_interactive);
  table.r2_autonomous = RSquared(lx, ya, &table.degenerate_autonomous);
  return table;
}

std::vector<RunMetrics> RunSeeds(const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  std::vector<RunMetrics> out(seeds.size());
  std::exception_ptr error;
  const int n = static_cast<int>(seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      TrainConfig c = cfg;
      c.seed = seeds[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] = Run(c).metrics;
    } catch (...) {
#pragma omp critical(dpiil_seeds_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace dpiil

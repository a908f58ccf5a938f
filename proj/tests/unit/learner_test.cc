#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dpiil/learner.h"
#include "dpiil/runio.h"
#include "fitted_models.h"

namespace dpiil {
namespace {

TrainConfig Quick(Algorithm algo, std::uint64_t seed = 0) {
  TrainConfig c;
  c.algorithm = algo;
  c.seed = seed;
  c.iterations = 2;
  c.budget = 60;
  c.eval_episodes = 20;
  c.net.train.epochs = 30;
  c.max_episodes_per_iteration = 200;
  return c;
}

constexpr Algorithm kInteractive[] = {Algorithm::kDagger, Algorithm::kEnsembleDagger, Algorithm::kHgDagger,
                                      Algorithm::kDpiilMu, Algorithm::kDpiilUcb};

TEST(Algorithm, Spellings) {
  for (Algorithm a : {Algorithm::kBc, Algorithm::kDagger, Algorithm::kEnsembleDagger, Algorithm::kHgDagger,
                      Algorithm::kDpiilMu, Algorithm::kDpiilUcb}) {
    EXPECT_EQ(ParseAlgorithm(AlgorithmName(a)), a);
  }
  EXPECT_EQ(ParseAlgorithm("DPIIL_UCB"), Algorithm::kDpiilUcb);
  try {
    ParseAlgorithm("thrifty");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("unknown algorithm"), std::string::npos);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.iterations = -1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = {};
  c.budget = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = {};
  c.ensemble_size = 1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = {};
  c.chi.fixed = true;
  c.chi.value = 0.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = {};
  c.chi.quantile = 1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(Run, DispatchRejectsWrongFamily) {
  EXPECT_THROW(RunDpiil(Quick(Algorithm::kDagger)), std::invalid_argument);
  EXPECT_THROW(RunBaseline(Quick(Algorithm::kDpiilMu)), std::invalid_argument);
}

TEST(Run, ZeroIterationsIsBehaviourCloning) {
  TrainConfig c = Quick(Algorithm::kDpiilUcb);
  c.iterations = 0;
  const RunResult r = dpiil::Run(c);
  EXPECT_FALSE(r.metrics.interactive_performance.has_value());
  EXPECT_EQ(r.metrics.interactive_episodes, 0);
  EXPECT_EQ(r.metrics.expert_cost, 0);
  EXPECT_TRUE(r.logs.empty());
  EXPECT_EQ(r.dataset.size(), r.metrics.initial_samples);
  EXPECT_EQ(r.checkpoints.size(), 1u);
  EXPECT_TRUE(r.speed.has_value());
}

TEST(Run, DeterministicPerSeed) {
  for (Algorithm a : {Algorithm::kBc, Algorithm::kDagger, Algorithm::kEnsembleDagger, Algorithm::kHgDagger,
                      Algorithm::kDpiilMu, Algorithm::kDpiilUcb}) {
    const RunResult x = dpiil::Run(Quick(a, 3));
    const RunResult y = dpiil::Run(Quick(a, 3));
    EXPECT_EQ(MetricsJson(x.metrics), MetricsJson(y.metrics)) << AlgorithmName(a);
    EXPECT_EQ(x.dataset, y.dataset) << AlgorithmName(a);
    for (std::size_t m = 0; m < x.policy.members.size(); ++m) {
      EXPECT_TRUE(x.policy.members[m] == y.policy.members[m]) << AlgorithmName(a);
    }
  }
}

// Dataset growth, expert-sample purity and metric consistency against the
// episode logs.
void CheckStructure(const TrainConfig& cfg, const RunResult& r) {
  const RunMetrics& m = r.metrics;
  ASSERT_EQ(m.iterations.size(), static_cast<std::size_t>(cfg.iterations));
  std::size_t before = m.initial_samples;
  std::size_t cursor = m.initial_samples;
  long expert_records = 0, switches = 0;
  int episodes = 0, successes = 0;
  for (const IterationMetrics& it : m.iterations) {
    if (it.budget_filled) {
      EXPECT_EQ(it.dataset_size, before + static_cast<std::size_t>(cfg.budget));
    }
    EXPECT_EQ(it.dataset_size, before + static_cast<std::size_t>(it.samples_added));
    // The samples appended this iteration are the first `budget` expert steps.
    std::size_t taken = 0;
    long it_expert = 0, it_switches = 0;
    int it_episodes = 0;
    for (const EpisodeLog& log : r.logs) {
      if (log.iteration != it.iteration) continue;
      ++it_episodes;
      ControlMode prev = ControlMode::kAuto;
      for (std::size_t t = 0; t < log.steps.size(); ++t) {
        const StepRecord& rec = log.steps[t];
        EXPECT_EQ(IsTerminal(rec.outcome), t + 1 == log.steps.size());
        if (rec.mode == ControlMode::kExpert) {
          ++it_expert;
          if (prev == ControlMode::kAuto) ++it_switches;
          if (taken < static_cast<std::size_t>(it.samples_added)) {
            const DemoSample& d = r.dataset[cursor + taken];
            EXPECT_EQ(d.s, rec.s);
            EXPECT_EQ(d.a_star, rec.a);
            if (t + 1 < log.steps.size()) EXPECT_EQ(d.v_star, SpeedOf(rec.s, log.steps[t + 1].s));
            ++taken;
          }
        }
        prev = rec.mode;
      }
      EXPECT_EQ(log.outcome, log.steps.back().outcome);
      successes += log.outcome == Outcome::kSuccess;
    }
    EXPECT_EQ(taken, static_cast<std::size_t>(it.samples_added));
    EXPECT_EQ(it_expert, it.expert_steps);
    EXPECT_EQ(it_switches, it.interventions);
    EXPECT_EQ(it_episodes, it.episodes);
    expert_records += it_expert;
    switches += it_switches;
    episodes += it_episodes;
    cursor += it.samples_added;
    before = it.dataset_size;
  }
  EXPECT_EQ(cursor, r.dataset.size());
  EXPECT_EQ(m.expert_cost, expert_records);
  EXPECT_EQ(m.interventions, switches);
  EXPECT_GE(m.expert_cost, m.interventions);
  EXPECT_EQ(m.interactive_episodes, episodes);
  EXPECT_EQ(m.interactive_successes, successes);
  ASSERT_TRUE(m.interactive_performance.has_value());
  EXPECT_GE(*m.interactive_performance, 0.0);
  EXPECT_LE(*m.interactive_performance, 1.0);
  EXPECT_GE(m.autonomous_performance, 0.0);
  EXPECT_LE(m.autonomous_performance, 1.0);
  EXPECT_EQ(m.total_expert_actions, static_cast<long>(m.initial_samples) + m.expert_cost);
  EXPECT_EQ(r.checkpoints.size(), static_cast<std::size_t>(cfg.iterations) + 1);
}

TEST(Run, StructuralInvariantsHoldForEveryInteractiveAlgorithm) {
  for (Algorithm a : kInteractive) {
    SCOPED_TRACE(AlgorithmName(a));
    const TrainConfig cfg = Quick(a, 1);
    CheckStructure(cfg, dpiil::Run(cfg));
  }
}

TEST(Run, GatedModesMatchRecomputedRisk) {
  for (Algorithm a : {Algorithm::kEnsembleDagger, Algorithm::kDpiilMu, Algorithm::kDpiilUcb}) {
    SCOPED_TRACE(AlgorithmName(a));
    const TrainConfig cfg = Quick(a, 2);
    const RunResult r = dpiil::Run(cfg);
    for (const EpisodeLog& log : r.logs) {
      const IterationMetrics& it = r.metrics.iterations[static_cast<std::size_t>(log.iteration - 1)];
      const EnsemblePolicy& policy = r.checkpoints[static_cast<std::size_t>(log.iteration - 1)];
      for (const StepRecord& rec : log.steps) {
        ASSERT_EQ(rec.mode, rec.risk > it.chi ? ControlMode::kExpert : ControlMode::kAuto);
        if (a == Algorithm::kEnsembleDagger) {
          ASSERT_DOUBLE_EQ(rec.risk, PolicyVariance(policy, rec.s));
        }
      }
    }
  }
}

TEST(Run, HgDaggerFollowsOracleGate) {
  const TrainConfig cfg = Quick(Algorithm::kHgDagger, 4);
  const RunResult r = dpiil::Run(cfg);
  const World world = BuildWorld(cfg.env);
  for (const EpisodeLog& log : r.logs) {
    for (const StepRecord& rec : log.steps) {
      ASSERT_EQ(rec.mode == ControlMode::kExpert, HgGate(world, cfg.expert, cfg.hg, rec.s));
    }
  }
}

TEST(Run, DaggerWithBetaOneIsPureExpert) {
  TrainConfig cfg = Quick(Algorithm::kDagger, 5);
  cfg.dagger_beta = 1.0;
  cfg.budget = 400;
  cfg.iterations = 1;
  const RunResult r = dpiil::Run(cfg);
  for (const EpisodeLog& log : r.logs) {
    for (const StepRecord& rec : log.steps) ASSERT_EQ(rec.mode, ControlMode::kExpert);
  }
  EXPECT_EQ(r.metrics.interventions, r.metrics.interactive_episodes);
  EXPECT_GE(*r.metrics.interactive_performance, 0.95);
}

TEST(Run, DaggerWithBetaZeroStopsAtEpisodeCap) {
  TrainConfig cfg = Quick(Algorithm::kDagger, 5);
  cfg.dagger_beta = 0.0;
  cfg.iterations = 1;
  cfg.max_episodes_per_iteration = 7;
  const RunResult r = dpiil::Run(cfg);
  EXPECT_EQ(r.metrics.interactive_episodes, 7);
  EXPECT_EQ(r.metrics.expert_cost, 0);
  EXPECT_FALSE(r.metrics.iterations[0].budget_filled);
  EXPECT_EQ(r.metrics.iterations[0].samples_added, 0);
}

TEST(Run, BcMatchesInteractiveExpertBudget) {
  TrainConfig cfg = Quick(Algorithm::kBc, 6);
  const RunResult r = dpiil::Run(cfg);
  EXPECT_EQ(r.dataset.size(), r.metrics.initial_samples + static_cast<std::size_t>(cfg.iterations * cfg.budget));
  EXPECT_FALSE(r.metrics.interactive_performance.has_value());
  EXPECT_EQ(r.metrics.total_expert_actions, static_cast<long>(r.dataset.size()));
}

TEST(Run, BcExpertActionsWithinFivePercentOfDpiil) {
  TrainConfig cfg;
  cfg.eval_episodes = 10;
  cfg.eval_each_iteration = false;
  cfg.algorithm = Algorithm::kDpiilUcb;
  const RunMetrics dpiil = dpiil::Run(cfg).metrics;
  cfg.algorithm = Algorithm::kBc;
  const RunMetrics bc = dpiil::Run(cfg).metrics;
  const double gap = std::abs(double(bc.total_expert_actions - dpiil.total_expert_actions));
  EXPECT_LE(gap, 0.05 * dpiil.total_expert_actions);
}

TEST(Run, EnsembleDaggerEqualsDpiilWithUnitPrecision) {
  TrainConfig ens = Quick(Algorithm::kEnsembleDagger, 7);
  TrainConfig dpiil = ens;
  dpiil.algorithm = Algorithm::kDpiilUcb;
  LearnerHooks unit;
  // mean 0 and log-variance 0: mean + sd = 1 exactly.
  unit.fit_speed = [](const Dataset&, std::uint64_t) { return testing_oracle::ConstantSpeed(0.0, 1.0); };
  const RunResult a = dpiil::Run(ens);
  const RunResult b = dpiil::Run(dpiil, unit);
  RunMetrics ma = a.metrics, mb = b.metrics;
  mb.algorithm = ma.algorithm;
  EXPECT_EQ(MetricsJson(ma), MetricsJson(mb));
  EXPECT_EQ(a.dataset, b.dataset);
  ASSERT_EQ(a.logs.size(), b.logs.size());
  for (std::size_t i = 0; i < a.logs.size(); ++i) {
    ASSERT_EQ(a.logs[i].steps.size(), b.logs[i].steps.size());
    for (std::size_t t = 0; t < a.logs[i].steps.size(); ++t) {
      EXPECT_EQ(a.logs[i].steps[t].mode, b.logs[i].steps[t].mode);
      EXPECT_EQ(a.logs[i].steps[t].risk, b.logs[i].steps[t].risk);
    }
  }
}

TEST(Run, FixedChiIsUsedEveryIteration) {
  TrainConfig cfg = Quick(Algorithm::kDpiilUcb, 8);
  cfg.chi.fixed = true;
  cfg.chi.value = 3e-4;
  for (const IterationMetrics& it : dpiil::Run(cfg).metrics.iterations) EXPECT_EQ(it.chi, 3e-4);
}

TEST(Run, FailedEpisodesStillContributeSamples) {
  TrainConfig cfg = Quick(Algorithm::kDagger, 9);
  const RunResult r = dpiil::Run(cfg);
  bool saw_failed_expert_step = false;
  for (const EpisodeLog& log : r.logs) {
    if (log.outcome == Outcome::kSuccess) continue;
    for (const StepRecord& rec : log.steps) saw_failed_expert_step |= rec.mode == ControlMode::kExpert;
  }
  if (!saw_failed_expert_step) GTEST_SKIP() << "every episode with expert steps succeeded";
  CheckStructure(cfg, r);
}

TEST(Evaluate, ExpertAndRandomControllers) {
  const World world = BuildWorld(EnvConfig::Default());
  const ExpertConfig expert = ExpertConfig::Default();
  EXPECT_GE(EvaluateEpisodes(ExpertController(world, expert), world, 100, 3).success_rate(), 0.95);
  EXPECT_LE(EvaluateEpisodes(RandomController(1.5), world, 100, 3).success_rate(), 0.05);
}

TEST(Evaluate, ReproducibleAndMatchesSerialReference) {
  const auto& m = testing_oracle::DefaultModels::Get();
  const EvalResult a = EvaluateEpisodes(PolicyController(m.policy), m.world, 100, 42);
  const EvalResult b = EvaluateEpisodes(PolicyController(m.policy), m.world, 100, 42);
  const EvalResult c = EvaluateEpisodesSerial(PolicyController(m.policy), m.world, 100, 42);
  EXPECT_EQ(a.outcomes, b.outcomes);
  EXPECT_EQ(a.outcomes, c.outcomes);
  EXPECT_EQ(EvaluatePolicy(m.policy, m.world, 100, 42), a.success_rate());
  EXPECT_THROW(EvaluatePolicy(m.policy, m.world, 0, 42), std::invalid_argument);
}

TEST(RunSeeds, MatchesSequentialRuns) {
  const TrainConfig cfg = Quick(Algorithm::kEnsembleDagger);
  const std::vector<std::uint64_t> seeds{11, 12};
  const std::vector<RunMetrics> par = RunSeeds(cfg, seeds);
  ASSERT_EQ(par.size(), 2u);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    TrainConfig c = cfg;
    c.seed = seeds[i];
    EXPECT_EQ(MetricsJson(par[i]), MetricsJson(dpiil::Run(c).metrics));
  }
}

// Pearson correlation written from the textbook sums formula.
double PearsonSquared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double r = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return r * r;
}

TEST(RSquared, Cases) {
  bool degenerate = true;
  EXPECT_NEAR(RSquared({1, 2, 3, 4}, {3, 5, 7, 9}, &degenerate), 1.0, 1e-15);
  EXPECT_FALSE(degenerate);
  EXPECT_EQ(RSquared({1, 2, 3}, {0.5, 0.5, 0.5}, &degenerate), 0.0);
  EXPECT_TRUE(degenerate);
  EXPECT_EQ(RSquared({1}, {2}, &degenerate), 0.0);
  EXPECT_TRUE(degenerate);
  const std::vector<double> x{-5.0, -4.5, -4.0, -3.5, -3.0};
  const std::vector<double> y{0.92, 0.80, 0.85, 0.61, 0.70};
  EXPECT_NEAR(RSquared(x, y), PearsonSquared(x, y), 1e-12);
  EXPECT_NEAR(RSquared(x, y), 0.6602, 1e-3);
  EXPECT_THROW(RSquared({1, 2}, {1}), std::invalid_argument);
}

TEST(LogGrid, NineLogSpacedPoints) {
  const std::vector<double> g = LogGrid(1e-5, 1e-3, 9);
  ASSERT_EQ(g.size(), 9u);
  EXPECT_EQ(g.front(), 1e-5);
  EXPECT_EQ(g.back(), 1e-3);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::pow(10.0, 0.25), 1e-12);
  EXPECT_EQ(LogGrid(2e-4, 5e-4, 1), std::vector<double>{2e-4});
  EXPECT_THROW(LogGrid(0.0, 1.0, 3), std::invalid_argument);
}

TEST(ChiSweep, OneFrozenRunPerGridPoint) {
  TrainConfig cfg = Quick(Algorithm::kEnsembleDagger);
  cfg.iterations = 1;
  const std::vector<double> grid{1e-4, 1e-3};
  const SweepTable t = ChiSweep(cfg, grid);
  EXPECT_EQ(t.algorithm, "ensemble-dagger");
  ASSERT_EQ(t.rows.size(), 2u);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    TrainConfig c = cfg;
    c.chi.fixed = true;
    c.chi.value = grid[i];
    c.eval_each_iteration = false;
    const RunMetrics m = dpiil::Run(c).metrics;
    EXPECT_EQ(t.rows[i].chi, grid[i]);
    EXPECT_EQ(t.rows[i].interactive, m.interactive_performance.value_or(0.0));
    EXPECT_EQ(t.rows[i].autonomous, m.autonomous_performance);
    EXPECT_EQ(t.rows[i].expert_cost, m.expert_cost);
  }
  EXPECT_THROW(ChiSweep(cfg, {}), std::invalid_argument);
  EXPECT_THROW(ChiSweep(cfg, {1e-4, -1.0}), std::invalid_argument);
}

TEST(ChiSweep, SinglePointIsFlaggedDegenerate) {
  TrainConfig cfg = Quick(Algorithm::kEnsembleDagger);
  cfg.iterations = 1;
  const SweepTable t = ChiSweep(cfg, {1e-4});
  EXPECT_EQ(t.r2_interactive, 0.0);
  EXPECT_TRUE(t.degenerate_interactive);
  EXPECT_TRUE(t.degenerate_autonomous);
}

}  // namespace
}  // namespace dpiil

#include "cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dpiil/config.h"
#include "dpiil/learner.h"
#include "dpiil/runio.h"
#include "dpiil/session.h"
#include "json.hpp"

namespace dpiil {

namespace fs = std::filesystem;

namespace {

// Bad flags or values: reported with usage, exit 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentConfig LoadConfig(const CommonFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : LoadExperimentConfig(f.config);
  if (f.seed_set) {
    cfg.train.seed = f.seed;
    cfg.seeds = {f.seed};
  }
  return cfg;
}

Algorithm AlgorithmFlag(const std::string& name) {
  try {
    return ParseAlgorithm(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// "lo:hi:Nlog", "lo:hi:Nlin" or a comma-separated list.
std::vector<double> ParseGrid(const std::string& spec) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw UsageError("bad grid value '" + s + "' in '" + spec + "'");
    return v;
  };
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  if (spec.find(':') != std::string::npos) {
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw UsageError("grid must look like lo:hi:Nlog");
    const double lo = number(parts[0]), hi = number(parts[1]);
    std::string n = parts[2];
    bool log = true;
    if (n.size() > 3 && n.substr(n.size() - 3) == "log") {
      n.resize(n.size() - 3);
    } else if (n.size() > 3 && n.substr(n.size() - 3) == "lin") {
      n.resize(n.size() - 3);
      log = false;
    } else {
      throw UsageError("grid count must end in 'log' or 'lin'");
    }
    const double count = number(n);
    if (count < 1 || count != static_cast<int>(count)) throw UsageError("grid count must be a positive integer");
    if (!(lo > 0.0 && hi > 0.0)) throw UsageError("grid bounds must be positive");
    if (log) return LogGrid(lo, hi, static_cast<int>(count));
    std::vector<double> g;
    const int c = static_cast<int>(count);
    for (int i = 0; i < c; ++i) g.push_back(c == 1 ? lo : lo + (hi - lo) * i / (c - 1));
    return g;
  }
  std::vector<double> g;
  while (std::getline(ss, item, ',')) g.push_back(number(item));
  if (g.empty()) throw UsageError("empty grid");
  for (double v : g) {
    if (!(v > 0.0)) throw UsageError("grid values must be positive");
  }
  return g;
}

void PrintSummary(std::ostream& out, const RunMetrics& m) {
  out << m.algorithm << " seed " << m.seed << ": ";
  if (m.interactive_performance) {
    out << "interactive " << std::fixed << std::setprecision(3) << *m.interactive_performance << ", ";
  }
  out << "autonomous " << std::fixed << std::setprecision(3) << m.autonomous_performance << ", C " << m.expert_cost
      << ", interventions " << m.interventions << ", |D| " << m.dataset_size << "\n";
  out.unsetf(std::ios::floatfield);
}

int DemoGen(const CommonFlags& f, int n, const std::string& out_dir, std::ostream& out) {
  ExperimentConfig cfg = LoadConfig(f);
  if (n < 1) throw UsageError("--n must be >= 1");
  const World world = BuildWorld(cfg.train.env);
  DemoGenStats stats;
  const Dataset data = GenerateDemos(world, cfg.train.expert, n, cfg.train.seed, &stats);
  fs::create_directories(out_dir);
  cfg.out_dir = out_dir;
  SaveExperimentConfig((fs::path(out_dir) / "config.cfg").string(), cfg);
  SaveDataset((fs::path(out_dir) / "dataset.csv").string(), data,
              {{"trajectories", std::to_string(n)}, {"seed", std::to_string(cfg.train.seed)}});
  out << "wrote " << data.size() << " samples from " << n << " trajectories (" << stats.failures
      << " failed attempts discarded) to " << (fs::path(out_dir) / "dataset.csv").string() << "\n";
  return 0;
}

struct TrainFlags {
  std::string algo;
  std::string out;
  int iterations = -1;
  double chi_fixed = 0.0;
  bool no_episodes = false;
};

int Train(const CommonFlags& f, const TrainFlags& t, std::ostream& out) {
  ExperimentConfig cfg = LoadConfig(f);
  if (!t.algo.empty()) cfg.train.algorithm = AlgorithmFlag(t.algo);
  if (t.iterations >= 0) cfg.train.iterations = t.iterations;
  if (t.chi_fixed != 0.0) {
    if (!(t.chi_fixed > 0.0)) throw UsageError("--chi-fixed must be positive");
    cfg.train.chi.fixed = true;
    cfg.train.chi.value = t.chi_fixed;
  }
  if (t.no_episodes) cfg.export_episodes = false;
  if (!t.out.empty()) cfg.out_dir = t.out;
  cfg.Validate();
  const RunResult result = Run(cfg.train);
  SaveRun(cfg.out_dir, cfg, result);
  PrintSummary(out, result.metrics);
  out << "run directory: " << cfg.out_dir << "\n";
  return 0;
}

int Eval(const CommonFlags& f, const std::string& run_dir, int episodes, std::ostream& out) {
  CommonFlags flags = f;
  if (flags.config.empty()) flags.config = (fs::path(run_dir) / "config.cfg").string();
  ExperimentConfig cfg = LoadConfig(flags);
  if (episodes >= 0) cfg.train.eval_episodes = episodes;
  if (cfg.train.eval_episodes < 1) throw UsageError("--episodes must be >= 1");
  const RunModels models = LoadRunModels(run_dir);
  const World world = BuildWorld(cfg.train.env);
  const EvalResult r = EvaluateEpisodes(PolicyController(models.policy), world, cfg.train.eval_episodes,
                                        DeriveSeed(cfg.train.seed, 4));
  std::map<std::string, int> counts;
  for (Outcome o : r.outcomes) ++counts[OutcomeName(o)];
  nlohmann::ordered_json j;
  j["episodes"] = r.episodes;
  j["successes"] = r.successes;
  j["success_rate"] = r.success_rate();
  j["outcomes"] = counts;
  out << j.dump(2) << "\n";
  return 0;
}

int SweepChi(const CommonFlags& f, const std::string& algo, const std::string& grid, const std::string& out_path,
             std::ostream& out) {
  ExperimentConfig cfg = LoadConfig(f);
  if (!algo.empty()) cfg.train.algorithm = AlgorithmFlag(algo);
  if (!UsesRiskGate(cfg.train.algorithm)) {
    throw UsageError(std::string("sweep-chi needs a risk-gated algorithm, got ") + AlgorithmName(cfg.train.algorithm));
  }
  const std::vector<double> chis = ParseGrid(grid);
  cfg.Validate();
  const SweepTable table = ChiSweep(cfg.train, chis);
  if (out_path.empty()) {
    WriteSweepCsv(out, table);
  } else {
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    std::ofstream file(out_path);
    if (!file) throw std::runtime_error("cannot write " + out_path);
    WriteSweepCsv(file, table);
    out << "wrote " << table.rows.size() << " rows to " << out_path << "\n";
  }
  return 0;
}

struct ServeFlags {
  std::string run;
  std::string out;
  int port = -1;
  int episodes = -1;
  double wait = -1.0;
  double tick_hz = -1.0;
  bool lockstep = false;
};

int Serve(const CommonFlags& f, const ServeFlags& s, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = LoadConfig(f);
  if (!s.run.empty()) cfg.session.models = s.run;
  if (s.port >= 0) cfg.session.port = s.port;
  if (s.episodes >= 0) cfg.session.episodes = s.episodes;
  if (s.wait >= 0.0) cfg.session.connect_timeout = s.wait;
  if (s.tick_hz > 0.0) cfg.session.tick_hz = s.tick_hz;
  if (s.lockstep) cfg.session.lockstep = true;
  if (!s.out.empty()) cfg.out_dir = s.out;
  if (!UsesRiskGate(cfg.train.algorithm)) {
    throw UsageError(std::string("serve needs a risk-gated algorithm, got ") + AlgorithmName(cfg.train.algorithm));
  }
  cfg.Validate();

  const World world = BuildWorld(cfg.train.env);
  RunModels models;
  Dataset data;
  if (!cfg.session.models.empty()) {
    models = LoadRunModels(cfg.session.models);
    data = LoadDataset((fs::path(cfg.session.models) / "dataset.csv").string());
  } else {
    TrainConfig init = cfg.train;
    init.iterations = 0;
    init.eval_episodes = 1;
    RunResult r = Run(init);
    models = {r.policy, r.speed};
    data = r.dataset;
  }
  const bool dpiil = cfg.train.algorithm != Algorithm::kEnsembleDagger;
  if (dpiil && !models.speed) throw std::runtime_error("run directory has no speed model for " + std::string(AlgorithmName(cfg.train.algorithm)));
  const GateMode mode = cfg.train.algorithm == Algorithm::kDpiilMu    ? GateMode::kDpiilMu
                        : cfg.train.algorithm == Algorithm::kDpiilUcb ? GateMode::kDpiilUcb
                                                                      : GateMode::kEnsembleOnly;
  RiskGate gate(mode, 1.0, models.policy, dpiil ? &*models.speed : nullptr);
  gate.set_chi(cfg.train.chi.fixed ? cfg.train.chi.value : CalibrateChi(gate, data, cfg.train.chi.quantile));

  TcpListener listener(cfg.session.port);
  out << "listening on 127.0.0.1:" << listener.port() << " (chi " << gate.chi() << ")" << std::endl;
  auto client = listener.Accept(std::chrono::milliseconds(static_cast<long>(cfg.session.connect_timeout * 1000)));
  if (!client) {
    err << "dpiil serve: no client connected within " << cfg.session.connect_timeout << " s; not starting\n";
    return 1;
  }
  SessionOptions opts;
  opts.tick_hz = cfg.session.tick_hz;
  opts.episodes = cfg.session.episodes;
  opts.lockstep = cfg.session.lockstep;
  opts.seed = DeriveSeed(cfg.train.seed, 6);
  const SessionResult result = ServeSession(world, models.policy, gate, *client, opts);

  fs::create_directories(cfg.out_dir);
  SaveDataset((fs::path(cfg.out_dir) / "session_dataset.csv").string(), result.dataset,
              {{"source", "session"}, {"episodes", std::to_string(result.logs.size())}});
  {
    std::ofstream eps(fs::path(cfg.out_dir) / "session_episodes.csv");
    WriteEpisodesCsv(eps, result.logs);
  }
  out << "session: " << result.logs.size() << " episodes completed, " << result.successes << " successes, "
      << result.dataset.size() << " expert samples";
  if (result.aborted) out << ", episode " << *result.aborted << " aborted (client disconnected)";
  out << "\n";
  return 0;
}

int Replay(const std::string& log_path, int episode, double tick_hz, int port, double wait, std::ostream& out,
           std::ostream& err) {
  const std::vector<EpisodeLog> logs = LoadEpisodesCsv(log_path);
  if (logs.empty()) throw std::runtime_error("log '" + log_path + "' has no episodes");
  std::vector<const EpisodeLog*> chosen;
  for (const EpisodeLog& l : logs) {
    if (episode < 0 || l.episode == episode) chosen.push_back(&l);
  }
  if (chosen.empty()) throw std::runtime_error("episode " + std::to_string(episode) + " not in " + log_path);

  std::unique_ptr<Channel> client;
  std::unique_ptr<TcpListener> listener;
  if (port >= 0) {
    listener = std::make_unique<TcpListener>(port);
    out << "replay listening on 127.0.0.1:" << listener->port() << std::endl;
    client = listener->Accept(std::chrono::milliseconds(static_cast<long>(wait * 1000)));
    if (!client) {
      err << "dpiil replay: no client connected within " << wait << " s\n";
      return 1;
    }
  }
  for (const EpisodeLog* l : chosen) {
    for (const SessionMessage& m : ReplayMessages(*l)) {
      if (client) {
        client->Send(EncodeMessage(m));
        if (tick_hz > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(1.0 / tick_hz));
      } else {
        out << EncodeMessage(m) << "\n";
      }
    }
  }
  return 0;
}

}  // namespace

int CliRun(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Precision-aware interactive imitation learning on a 2D aperture-passing task", "dpiil"};
  app.require_subcommand(1);

  CommonFlags common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment config file")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { common.seed = v, common.seed_set = true; }, "random seed");
  };

  int demo_n = 3;
  std::string demo_out;
  auto* demo = app.add_subcommand("demo-gen", "roll out the expert and write a demonstration dataset");
  add_common(demo);
  demo->add_option("--n", demo_n, "number of successful trajectories");
  demo->add_option("--out", demo_out, "output directory")->required();

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "run one training experiment");
  add_common(train);
  train->add_option("--algo", tf.algo, "bc, dagger, ensemble-dagger, hg-dagger, dpiil-mu or dpiil-ucb");
  train->add_option("--out", tf.out, "run directory");
  train->add_option("--iterations", tf.iterations, "interaction iterations K");
  train->add_option("--chi-fixed", tf.chi_fixed, "freeze the risk threshold at this value");
  train->add_flag("--no-episodes", tf.no_episodes, "skip episodes.csv");

  std::string eval_run;
  int eval_episodes = -1;
  auto* eval = app.add_subcommand("eval", "autonomous rollouts of a trained policy");
  add_common(eval);
  eval->add_option("--run", eval_run, "run directory with models/")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--episodes", eval_episodes, "test episodes");

  std::string sweep_algo, sweep_grid = "1e-5:1e-3:9log", sweep_out;
  auto* sweep = app.add_subcommand("sweep-chi", "train once per fixed risk threshold");
  add_common(sweep);
  sweep->add_option("--algo", sweep_algo, "risk-gated algorithm");
  sweep->add_option("--grid", sweep_grid, "lo:hi:Nlog, lo:hi:Nlin or a comma list")->capture_default_str();
  sweep->add_option("--out", sweep_out, "CSV path (default: stdout)");

  ServeFlags sf;
  auto* serve = app.add_subcommand("serve", "live session with a client acting as the expert");
  add_common(serve);
  serve->add_option("--run", sf.run, "run directory whose models to load")->check(CLI::ExistingDirectory);
  serve->add_option("--out", sf.out, "output directory for the session dataset");
  serve->add_option("--port", sf.port, "TCP port on 127.0.0.1 (0 = any free port)");
  serve->add_option("--episodes", sf.episodes, "episodes to run");
  serve->add_option("--wait", sf.wait, "seconds to wait for a client");
  serve->add_option("--tick-hz", sf.tick_hz, "tick rate");
  serve->add_flag("--lockstep", sf.lockstep, "advance only when the client answers");

  std::string replay_log;
  int replay_episode = -1, replay_port = -1;
  double replay_hz = 20.0, replay_wait = 30.0;
  auto* replay = app.add_subcommand("replay", "re-emit the message stream of a logged episode");
  replay->add_option("--log", replay_log, "episodes CSV")->required()->check(CLI::ExistingFile);
  replay->add_option("--episode", replay_episode, "episode id (default: all)");
  replay->add_option("--port", replay_port, "stream to a TCP client instead of stdout");
  replay->add_option("--tick-hz", replay_hz, "playback rate when streaming");
  replay->add_option("--wait", replay_wait, "seconds to wait for a client");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "dpiil: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*demo) return DemoGen(common, demo_n, demo_out, out);
    if (*train) return Train(common, tf, out);
    if (*eval) return Eval(common, eval_run, eval_episodes, out);
    if (*sweep) return SweepChi(common, sweep_algo, sweep_grid, sweep_out, out);
    if (*serve) return Serve(common, sf, out, err);
    if (*replay) return Replay(replay_log, replay_episode, replay_hz, replay_port, replay_wait, out, err);
  } catch (const UsageError& e) {
    err << "dpiil: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return 2;
  } catch (const std::exception& e) {
    err << "dpiil: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dpiil

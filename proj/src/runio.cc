#include "dpiil/runio.h"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dpiil {

namespace fs = std::filesystem;

std::string MetricsJson(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["algorithm"] = m.algorithm;
  j["seed"] = m.seed;
  j["interactive_episodes"] = m.interactive_episodes;
  j["interactive_successes"] = m.interactive_successes;
  j["interactive_performance"] =
      m.interactive_performance ? nlohmann::ordered_json(*m.interactive_performance) : nullptr;
  j["autonomous_performance"] = m.autonomous_performance;
  j["eval_episodes"] = m.eval_episodes;
  j["expert_cost"] = m.expert_cost;
  j["interventions"] = m.interventions;
  j["initial_samples"] = m.initial_samples;
  j["dataset_size"] = m.dataset_size;
  j["total_expert_actions"] = m.total_expert_actions;
  auto iters = nlohmann::ordered_json::array();
  for (const IterationMetrics& it : m.iterations) {
    nlohmann::ordered_json e;
    e["iteration"] = it.iteration;
    e["episodes"] = it.episodes;
    e["successes"] = it.successes;
    e["expert_steps"] = it.expert_steps;
    e["interventions"] = it.interventions;
    e["samples_added"] = it.samples_added;
    e["dataset_size"] = it.dataset_size;
    e["chi"] = it.chi;
    e["budget_filled"] = it.budget_filled;
    e["autonomous_performance"] =
        it.autonomous_performance < 0.0 ? nlohmann::ordered_json(nullptr)
                                        : nlohmann::ordered_json(it.autonomous_performance);
    iters.push_back(e);
  }
  j["iterations"] = iters;
  return j.dump(2) + "\n";
}

void WriteEpisodesCsv(std::ostream& out, const std::vector<EpisodeLog>& logs) {
  out << "episode,t,x,y,vx,vy,mode,outcome,risk,clipped,iteration\n";
  out << std::setprecision(17);
  for (const EpisodeLog& log : logs) {
    for (const StepRecord& r : log.steps) {
      out << log.episode << ',' << r.t << ',' << r.s.x << ',' << r.s.y << ',' << r.a.vx << ','
          << r.a.vy << ',' << ControlModeName(r.mode) << ',' << OutcomeName(r.outcome) << ','
          << r.risk << ',' << (r.clipped ? 1 : 0) << ',' << log.iteration << '\n';
    }
  }
}

namespace {

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double ToDouble(const std::string& s, int lineno) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw std::runtime_error("episodes csv: bad number '" + s + "' at line " + std::to_string(lineno));
  }
  return v;
}

int ToInt(const std::string& s, int lineno) {
  const double v = ToDouble(s, lineno);
  if (v != static_cast<int>(v)) {
    throw std::runtime_error("episodes csv: bad integer '" + s + "' at line " + std::to_string(lineno));
  }
  return static_cast<int>(v);
}

}  // namespace

std::vector<EpisodeLog> ReadEpisodesCsv(std::istream& in) {
  std::vector<EpisodeLog> logs;
  std::string line;
  int lineno = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (columns == 0) {
      if (line.rfind("episode,t,x,y,vx,vy,mode,outcome", 0) != 0) {
        throw std::runtime_error("episodes csv: unexpected header '" + line + "'");
      }
      columns = SplitCsv(line).size();
      if (columns != 8 && columns != 11) {
        throw std::runtime_error("episodes csv: expected 8 or 11 columns");
      }
      continue;
    }
    const auto cells = SplitCsv(line);
    if (cells.size() != columns) {
      throw std::runtime_error("episodes csv: wrong column count at line " + std::to_string(lineno));
    }
    StepRecord r;
    const int episode = ToInt(cells[0], lineno);
    r.t = ToInt(cells[1], lineno);
    r.s = {ToDouble(cells[2], lineno), ToDouble(cells[3], lineno)};
    r.a = {ToDouble(cells[4], lineno), ToDouble(cells[5], lineno)};
    try {
      r.mode = ParseControlMode(cells[6]);
      r.outcome = ParseOutcome(cells[7]);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("episodes csv: ") + e.what() + " at line " + std::to_string(lineno));
    }
    int iteration = 0;
    if (columns == 11) {
      r.risk = ToDouble(cells[8], lineno);
      r.clipped = ToInt(cells[9], lineno) != 0;
      iteration = ToInt(cells[10], lineno);
    }
    if (logs.empty() || logs.back().episode != episode) {
      EpisodeLog log;
      log.episode = episode;
      log.iteration = iteration;
      logs.push_back(std::move(log));
    } else if (r.t != logs.back().steps.back().t + 1) {
      throw std::runtime_error("episodes csv: non-consecutive t at line " + std::to_string(lineno));
    }
    logs.back().steps.push_back(r);
    logs.back().outcome = r.outcome;
  }
  if (columns == 0) throw std::runtime_error("episodes csv: missing header");
  return logs;
}

std::vector<EpisodeLog> LoadEpisodesCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return ReadEpisodesCsv(in);
}

void WriteSweepCsv(std::ostream& out, const SweepTable& table) {
  out << "chi,interactive,autonomous,expert_cost\n";
  out << std::setprecision(17);
  for (const SweepRow& r : table.rows) {
    out << r.chi << ',' << r.interactive << ',' << r.autonomous << ',' << r.expert_cost << '\n';
  }
  out << "# algorithm=" << table.algorithm << '\n';
  out << "# r2_interactive=" << table.r2_interactive
      << (table.degenerate_interactive ? " degenerate" : "") << '\n';
  out << "# r2_autonomous=" << table.r2_autonomous
      << (table.degenerate_autonomous ? " degenerate" : "") << '\n';
}

namespace {

std::ofstream OpenOut(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

}  // namespace

void SaveRun(const std::string& dir, const ExperimentConfig& cfg, const RunResult& result) {
  const fs::path root(dir);
  fs::create_directories(root / "models");

  ExperimentConfig snapshot = cfg;
  snapshot.train.seed = result.metrics.seed;
  snapshot.seeds = {result.metrics.seed};
  snapshot.out_dir = dir;
  SaveExperimentConfig((root / "config.cfg").string(), snapshot);

  OpenOut(root / "metrics.json") << MetricsJson(result.metrics);
  SaveDataset((root / "dataset.csv").string(), result.dataset,
              {{"algorithm", result.metrics.algorithm}, {"seed", std::to_string(result.metrics.seed)}});
  if (cfg.export_episodes) {
    auto out = OpenOut(root / "episodes.csv");
    WriteEpisodesCsv(out, result.logs);
  }
  {
    auto out = OpenOut(root / "models" / "policy.ens");
    SaveEnsemble(out, result.policy);
  }
  if (result.speed) {
    auto out = OpenOut(root / "models" / "speed.net");
    SaveSpeed(out, *result.speed);
  }
  for (std::size_t k = 0; k < result.checkpoints.size(); ++k) {
    auto out = OpenOut(root / "models" / ("policy_iter" + std::to_string(k) + ".ens"));
    SaveEnsemble(out, result.checkpoints[k]);
  }
}

RunModels LoadRunModels(const std::string& dir) {
  const fs::path models = fs::path(dir) / "models";
  std::ifstream pin(models / "policy.ens");
  if (!pin) throw std::runtime_error("no policy checkpoint in " + models.string());
  RunModels m{LoadEnsemble(pin), std::nullopt};
  if (fs::exists(models / "speed.net")) {
    std::ifstream sin(models / "speed.net");
    m.speed = LoadSpeed(sin);
  }
  return m;
}

}  // namespace dpiil

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <thread>

#include "cli.h"
#include "dpiil/runio.h"
#include "dpiil/session.h"
#include "json.hpp"
#include "temp_dir.h"

namespace dpiil {
namespace {

using namespace std::chrono_literals;
using testing_oracle::ReadFile;
using testing_oracle::TempDir;
using testing_oracle::WriteFile;

struct Outcome3 {
  int code;
  std::string out;
  std::string err;
};

Outcome3 Cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = CliRun(args, out, err);
  return {code, out.str(), err.str()};
}

// Small enough that a full train finishes in well under a second.
std::string TinyConfig(const TempDir& dir) {
  const std::string path = dir / "tiny.cfg";
  WriteFile(path,
            "schema_version = 1\n"
            "iterations = 1\n"
            "budget = 20\n"
            "eval_episodes = 5\n"
            "net.epochs = 5\n"
            "net.hidden = 16 16\n"
            "session.connect_timeout = 0.2\n");
  return path;
}

int FreePort() {
  TcpListener probe(0);
  return probe.port();
}

TEST(Cli, HelpAndUsageExitCodes) {
  EXPECT_EQ(Cli({"--help"}).code, 0);
  EXPECT_NE(Cli({"--help"}).out.find("sweep-chi"), std::string::npos);
  EXPECT_EQ(Cli({"train", "--help"}).code, 0);
  EXPECT_EQ(Cli({}).code, 2);
  EXPECT_EQ(Cli({"fly"}).code, 2);
  EXPECT_EQ(Cli({"train", "--bogus"}).code, 2);
  EXPECT_EQ(Cli({"train", "--config", "/definitely/missing.cfg"}).code, 2);
  const Outcome3 algo = Cli({"train", "--algo", "thrifty"});
  EXPECT_EQ(algo.code, 2);
  EXPECT_NE(algo.err.find("unknown algorithm"), std::string::npos);
  EXPECT_EQ(Cli({"sweep-chi", "--algo", "dagger"}).code, 2);
  EXPECT_EQ(Cli({"sweep-chi", "--grid", "1e-5:1e-3:9"}).code, 2);
  EXPECT_EQ(Cli({"serve", "--algo", "bc"}).code, 2);
  EXPECT_EQ(Cli({"demo-gen", "--n", "0", "--out", "x"}).code, 2);
}

TEST(Cli, RuntimeFailuresExitOne) {
  TempDir dir;
  WriteFile(dir / "broken.cfg", "schema_version = 1\nbudget = lots\n");
  const Outcome3 r = Cli({"train", "--config", dir / "broken.cfg"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("config line 2"), std::string::npos);
  std::filesystem::create_directories(dir / "empty");
  EXPECT_EQ(Cli({"eval", "--run", dir / "empty", "--config", TinyConfig(dir)}).code, 1);
}

TEST(Cli, DemoGenWritesDatasetAndConfig) {
  TempDir dir;
  const Outcome3 r = Cli({"demo-gen", "--config", TinyConfig(dir), "--n", "2", "--seed", "4", "--out", dir / "demos"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::map<std::string, std::string> meta;
  const Dataset data = LoadDataset(dir / "demos/dataset.csv", &meta);
  EXPECT_FALSE(data.empty());
  EXPECT_EQ(meta["trajectories"], "2");
  EXPECT_EQ(meta["seed"], "4");
  EXPECT_EQ(LoadExperimentConfig(dir / "demos/config.cfg").train.seed, 4u);
}

TEST(Cli, TrainThenEval) {
  TempDir dir;
  const std::string run = dir / "run";
  const Outcome3 t = Cli({"train", "--config", TinyConfig(dir), "--algo", "ensemble-dagger", "--seed", "2",
                          "--out", run});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("ensemble-dagger seed 2"), std::string::npos);
  const auto metrics = nlohmann::json::parse(ReadFile(run + "/metrics.json"));
  EXPECT_EQ(metrics["algorithm"], "ensemble-dagger");
  EXPECT_EQ(metrics["seed"], 2);
  EXPECT_EQ(metrics["iterations"].size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(run + "/episodes.csv"));
  EXPECT_EQ(LoadExperimentConfig(run + "/config.cfg").train.algorithm, Algorithm::kEnsembleDagger);

  const Outcome3 e = Cli({"eval", "--run", run, "--episodes", "7"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto j = nlohmann::json::parse(e.out);
  EXPECT_EQ(j["episodes"], 7);
  int total = 0;
  for (const auto& [k, v] : j["outcomes"].items()) total += v.get<int>();
  EXPECT_EQ(total, 7);
  EXPECT_EQ(j["success_rate"].get<double>(), j["successes"].get<double>() / 7.0);
}

TEST(Cli, TrainFlagsOverrideConfig) {
  TempDir dir;
  const std::string run = dir / "bc";
  ASSERT_EQ(Cli({"train", "--config", TinyConfig(dir), "--algo", "bc", "--iterations", "0", "--no-episodes",
                 "--out", run})
                .code,
            0);
  const auto m = nlohmann::json::parse(ReadFile(run + "/metrics.json"));
  EXPECT_TRUE(m["interactive_performance"].is_null());
  EXPECT_EQ(m["iterations"].size(), 0u);
  EXPECT_FALSE(std::filesystem::exists(run + "/episodes.csv"));

  const std::string fixed = dir / "fixed";
  ASSERT_EQ(Cli({"train", "--config", TinyConfig(dir), "--chi-fixed", "2e-4", "--out", fixed}).code, 0);
  EXPECT_EQ(nlohmann::json::parse(ReadFile(fixed + "/metrics.json"))["iterations"][0]["chi"], 2e-4);
}

TEST(Cli, SweepChiWritesNineRowsAndFooter) {
  TempDir dir;
  const Outcome3 r = Cli({"sweep-chi", "--config", TinyConfig(dir), "--algo", "dpiil-ucb", "--out", dir / "s.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(ReadFile(dir / "s.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "chi,interactive,autonomous,expert_cost");
  int rows = 0, footers = 0;
  while (std::getline(in, line)) {
    if (line.rfind("# r2_", 0) == 0) ++footers;
    else if (line[0] != '#') ++rows;
  }
  EXPECT_EQ(rows, 9);
  EXPECT_EQ(footers, 2);

  const Outcome3 list = Cli({"sweep-chi", "--config", TinyConfig(dir), "--grid", "1e-4,1e-3"});
  ASSERT_EQ(list.code, 0) << list.err;
  EXPECT_EQ(list.out.rfind("chi,interactive", 0), 0u);
  EXPECT_NE(list.out.find("\n0.001,"), std::string::npos);
}

TEST(Cli, ServeWithoutClientExitsOne) {
  TempDir dir;
  const Outcome3 r = Cli({"serve", "--config", TinyConfig(dir), "--port", "0", "--out", dir / "s"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no client connected"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "s/session_dataset.csv"));
}

TEST(Cli, ServeLockstepSessionThenReplay) {
  TempDir dir;
  const std::string cfg = TinyConfig(dir);
  const std::string run = dir / "run";
  ASSERT_EQ(Cli({"train", "--config", cfg, "--out", run}).code, 0);
  const int port = FreePort();
  const World world = BuildWorld(EnvConfig::Default());
  std::thread client([&] {
    for (int attempt = 0; attempt < 200; ++attempt) {
      try {
        auto ch = TcpConnect("127.0.0.1", port);
        RunScriptedExpertClient(*ch, world, ExpertConfig::Default(), 3);
        return;
      } catch (const std::runtime_error&) {
        std::this_thread::sleep_for(50ms);
      }
    }
  });
  const Outcome3 r = Cli({"serve", "--run", run, "--port", std::to_string(port), "--episodes", "2", "--wait", "20",
                          "--lockstep", "--out", dir / "session"});
  client.join();
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("2 episodes completed"), std::string::npos);
  const std::vector<EpisodeLog> logs = LoadEpisodesCsv(dir / "session/session_episodes.csv");
  ASSERT_EQ(logs.size(), 2u);
  std::size_t expert_rows = 0;
  for (const EpisodeLog& l : logs) {
    for (const StepRecord& s : l.steps) expert_rows += s.mode == ControlMode::kExpert;
  }
  EXPECT_EQ(LoadDataset(dir / "session/session_dataset.csv").size(), expert_rows);

  const Outcome3 rep = Cli({"replay", "--log", dir / "session/session_episodes.csv", "--episode", "1"});
  ASSERT_EQ(rep.code, 0) << rep.err;
  std::istringstream in(rep.out);
  std::vector<SessionMessage> msgs;
  for (std::string line; std::getline(in, line);) msgs.push_back(DecodeMessage(line));
  ASSERT_EQ(msgs.size(), logs[1].steps.size() + 1);
  EXPECT_EQ(std::get<EpisodeEndMsg>(msgs.back()).outcome, logs[1].outcome);
  EXPECT_EQ(Cli({"replay", "--log", dir / "session/session_episodes.csv", "--episode", "9"}).code, 1);
}

TEST(Cli, ReplayStreamsOverTcp) {
  TempDir dir;
  WriteFile(dir / "log.csv",
            "episode,t,x,y,vx,vy,mode,outcome\n"
            "0,0,-7,-7,1,0,auto,running\n"
            "0,1,-6,-7,1,0,expert,timeout\n");
  const int port = FreePort();
  std::vector<std::string> lines;
  std::thread client([&] {
    for (int attempt = 0; attempt < 200; ++attempt) {
      try {
        auto ch = TcpConnect("127.0.0.1", port);
        try {
          while (auto line = ch->Receive(5000ms)) lines.push_back(*line);
        } catch (const ChannelClosed&) {
        }
        return;
      } catch (const std::runtime_error&) {
        std::this_thread::sleep_for(50ms);
      }
    }
  });
  const Outcome3 r = Cli({"replay", "--log", dir / "log.csv", "--port", std::to_string(port), "--tick-hz", "1000",
                          "--wait", "20"});
  client.join();
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(std::get<StateMsg>(DecodeMessage(lines[1])).mode, ControlMode::kExpert);
  EXPECT_EQ(std::get<EpisodeEndMsg>(DecodeMessage(lines[2])).outcome, Outcome::kTimeout);
}

}  // namespace
}  // namespace dpiil

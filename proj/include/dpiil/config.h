#ifndef DPIIL_CONFIG_H_
#define DPIIL_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "dpiil/learner.h"

namespace dpiil {

struct SessionSettings {
  int port = 7878;
  double tick_hz = 20.0;
  int episodes = 3;
  // Seconds to wait for a client before giving up.
  double connect_timeout = 30.0;
  // Wait for each human_action instead of ticking on the wall clock.
  bool lockstep = false;
  // Run directory whose models/ the session loads; empty = fit on fresh demos.
  std::string models;
};

// Everything a run needs, stored as one flat key = value file.
struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  TrainConfig train;
  std::string out_dir = "run";
  std::vector<std::uint64_t> seeds{0};
  bool export_episodes = true;
  SessionSettings session;

  // Throws ConfigError.
  void Validate() const;
};

// Keys absent from the text keep their defaults. Relative paths are resolved
// against `base_dir`. Throws ConfigError naming the offending line.
ExperimentConfig ParseExperimentConfig(const std::string& text, const std::string& base_dir = "");
ExperimentConfig LoadExperimentConfig(const std::string& path);

// Every key, in a stable order; parses back to an equal config.
std::string FormatExperimentConfig(const ExperimentConfig& cfg);
void SaveExperimentConfig(const std::string& path, const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace dpiil

#endif  // DPIIL_CONFIG_H_

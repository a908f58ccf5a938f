#ifndef DPIIL_RUNIO_H_
#define DPIIL_RUNIO_H_

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpiil/config.h"
#include "dpiil/learner.h"

namespace dpiil {

// metrics.json body. Interactive performance is null when there were no
// interactive episodes.
std::string MetricsJson(const RunMetrics& m);

// Trajectory CSV: episode,t,x,y,vx,vy,mode,outcome,risk,clipped. The first
// eight columns are the exchange format; readers accept files without the
// last two.
void WriteEpisodesCsv(std::ostream& out, const std::vector<EpisodeLog>& logs);
// Throws std::runtime_error on a malformed file. Rows are grouped by episode
// id in file order.
std::vector<EpisodeLog> ReadEpisodesCsv(std::istream& in);
std::vector<EpisodeLog> LoadEpisodesCsv(const std::string& path);

// chi,interactive,autonomous,expert_cost rows followed by "# r2_..." lines.
void WriteSweepCsv(std::ostream& out, const SweepTable& table);

struct RunModels {
  EnsemblePolicy policy;
  std::optional<SpeedEstimator> speed;
};

// Writes config.cfg, metrics.json, dataset.csv, models/ and (when
// cfg.export_episodes) episodes.csv under `dir`. The config snapshot records
// the run's own seed.
void SaveRun(const std::string& dir, const ExperimentConfig& cfg, const RunResult& result);
// Reads models/policy.ens and, if present, models/speed.net.
RunModels LoadRunModels(const std::string& dir);

}  // namespace dpiil

#endif  // DPIIL_RUNIO_H_

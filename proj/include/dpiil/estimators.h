#ifndef DPIIL_ESTIMATORS_H_
#define DPIIL_ESTIMATORS_H_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dpiil/arena.h"
#include "dpiil/dataset.h"
#include "dpiil/tinynet.h"

namespace dpiil {

struct NetConfig {
  std::vector<int> hidden{64, 64};
  nn::TrainOptions train;
};

// M independently initialised and shuffled state -> action regressors.
struct EnsemblePolicy {
  std::vector<nn::Mlp> members;
  double max_action = 1.5;
};

struct EnsembleQuery {
  Action2 mean;           // per-dimension mean over members, clipped
  double variance = 0.0;  // population variance per dim, averaged over dims
};

EnsembleQuery QueryEnsemble(const EnsemblePolicy& ens, const State2& s);
Action2 PolicyAction(const EnsemblePolicy& ens, const State2& s);
double PolicyVariance(const EnsemblePolicy& ens, const State2& s);

// Batched policy variance; one entry per state.
std::vector<double> PolicyVarianceBatch(const EnsemblePolicy& ens, const std::vector<State2>& states);

// Members are trained concurrently (OpenMP) with seeds derived from `seed`.
// Throws std::invalid_argument for M < 2; training errors propagate.
EnsemblePolicy FitPolicy(const Dataset& data, int ensemble_size, std::uint64_t seed,
                         const NetConfig& net, double max_action);
// Sequential reference; identical result.
EnsemblePolicy FitPolicySerial(const Dataset& data, int ensemble_size, std::uint64_t seed,
                               const NetConfig& net, double max_action);

// Gaussian speed model: one network with mean and log-variance heads.
struct SpeedEstimator {
  nn::Mlp net;

  struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
  };
  Prediction Predict(const State2& s) const;
};

SpeedEstimator FitSpeed(const Dataset& data, std::uint64_t seed, const NetConfig& net);

enum class PrecisionMode { kMu, kUcb };

inline constexpr double kPrecisionFloor = 1e-4;

// 1 / max(mu, floor) or 1 / max(mu + sigma, floor).
double PrecisionFromMoments(double mean, double variance, PrecisionMode mode);
double Precision(const SpeedEstimator& est, const State2& s, PrecisionMode mode);
std::vector<double> PrecisionBatch(const SpeedEstimator& est, const std::vector<State2>& states,
                                   PrecisionMode mode);

void SaveEnsemble(std::ostream& out, const EnsemblePolicy& ens);
EnsemblePolicy LoadEnsemble(std::istream& in);
void SaveSpeed(std::ostream& out, const SpeedEstimator& est);
SpeedEstimator LoadSpeed(std::istream& in);

// Rows of a dataset as (samples x 2) state matrix.
Eigen::MatrixXd StateMatrix(const Dataset& data);
Eigen::MatrixXd StateMatrix(const std::vector<State2>& states);

}  // namespace dpiil

#endif  // DPIIL_ESTIMATORS_H_

#ifndef DPIIL_RISKGATE_H_
#define DPIIL_RISKGATE_H_

#include <vector>

#include "dpiil/arena.h"
#include "dpiil/dataset.h"
#include "dpiil/estimators.h"

namespace dpiil {

enum class GateMode { kDpiilMu, kDpiilUcb, kEnsembleOnly };

enum class ControlMode { kAuto, kExpert };

const char* ControlModeName(ControlMode m);
ControlMode ParseControlMode(const std::string& name);

// Collision-risk gate. Holds non-owning references to the fitted models,
// which must outlive the gate.
class RiskGate {
 public:
  // Throws std::invalid_argument unless chi > 0. `speed` may be null for
  // kEnsembleOnly.
  RiskGate(GateMode mode, double chi, const EnsemblePolicy& policy, const SpeedEstimator* speed);

  GateMode mode() const { return mode_; }
  double chi() const { return chi_; }
  void set_chi(double chi);

  // Precision(s) * variance(s) for the DPIIL modes, variance(s) otherwise.
  double Risk(const State2& s) const;
  // Same as Risk() with a precomputed ensemble variance.
  double RiskFromVariance(const State2& s, double variance) const;
  std::vector<double> RiskBatch(const std::vector<State2>& states) const;

  // Expert iff Risk(s) > chi.
  ControlMode Decide(const State2& s) const { return DecideRisk(Risk(s)); }
  ControlMode DecideRisk(double risk) const {
    return risk > chi_ ? ControlMode::kExpert : ControlMode::kAuto;
  }

 private:
  GateMode mode_;
  double chi_;
  const EnsemblePolicy* policy_;
  const SpeedEstimator* speed_;
};

// Nearest-rank quantile: the ceil(q * n)-th smallest value (1-based).
// Throws std::invalid_argument for empty input or q outside (0, 1).
double NearestRankQuantile(std::vector<double> values, double q);

// Threshold at the given risk quantile over the dataset states.
double CalibrateChi(const RiskGate& gate, const Dataset& data, double quantile = 0.80);

// Fraction of values strictly above chi.
double GatedFraction(const std::vector<double>& risks, double chi);

}  // namespace dpiil

#endif  // DPIIL_RISKGATE_H_

#include "dpiil/riskgate.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dpiil {

const char* ControlModeName(ControlMode m) { return m == ControlMode::kExpert ? "expert" : "auto"; }

ControlMode ParseControlMode(const std::string& name) {
  if (name == "auto") return ControlMode::kAuto;
  if (name == "expert") return ControlMode::kExpert;
  throw std::invalid_argument("unknown control mode '" + name + "'");
}

RiskGate::RiskGate(GateMode mode, double chi, const EnsemblePolicy& policy,
                   const SpeedEstimator* speed)
    : mode_(mode), chi_(chi), policy_(&policy), speed_(speed) {
  if (!(chi > 0.0)) throw std::invalid_argument("risk threshold chi must be positive");
  if (mode != GateMode::kEnsembleOnly && speed == nullptr) {
    throw std::invalid_argument("DPIIL gate needs a speed estimator");
  }
}

void RiskGate::set_chi(double chi) {
  if (!(chi > 0.0)) throw std::invalid_argument("risk threshold chi must be positive");
  chi_ = chi;
}

double RiskGate::RiskFromVariance(const State2& s, double variance) const {
  switch (mode_) {
    case GateMode::kEnsembleOnly:
      return variance;
    case GateMode::kDpiilMu:
      return Precision(*speed_, s, PrecisionMode::kMu) * variance;
    case GateMode::kDpiilUcb:
      return Precision(*speed_, s, PrecisionMode::kUcb) * variance;
  }
  return variance;
}

double RiskGate::Risk(const State2& s) const {
  return RiskFromVariance(s, PolicyVariance(*policy_, s));
}

std::vector<double> RiskGate::RiskBatch(const std::vector<State2>& states) const {
  std::vector<double> risk = PolicyVarianceBatch(*policy_, states);
  if (mode_ == GateMode::kEnsembleOnly) return risk;
  const PrecisionMode pm = mode_ == GateMode::kDpiilMu ? PrecisionMode::kMu : PrecisionMode::kUcb;
  const std::vector<double> pre = PrecisionBatch(*speed_, states, pm);
  for (std::size_t i = 0; i < risk.size(); ++i) risk[i] *= pre[i];
  return risk;
}

double NearestRankQuantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty set");
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile must lie in (0, 1)");
  const double n = static_cast<double>(values.size());
  // Guard against q * n landing a hair above an integer through round-off.
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<long>(rank - 1), values.end());
  return values[rank - 1];
}

double CalibrateChi(const RiskGate& gate, const Dataset& data, double quantile) {
  if (data.empty()) throw std::invalid_argument("cannot calibrate chi on an empty dataset");
  std::vector<State2> states;
  states.reserve(data.size());
  for (const DemoSample& d : data) states.push_back(d.s);
  const double chi = NearestRankQuantile(gate.RiskBatch(states), quantile);
  // A zero-risk quantile would give an invalid threshold; keep it positive.
  return std::max(chi, 1e-300);
}

double GatedFraction(const std::vector<double>& risks, double chi) {
  if (risks.empty()) return 0.0;
  const auto n = std::count_if(risks.begin(), risks.end(), [chi](double r) { return r > chi; });
  return static_cast<double>(n) / static_cast<double>(risks.size());
}

}  // namespace dpiil

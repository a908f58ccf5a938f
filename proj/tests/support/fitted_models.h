#ifndef DPIIL_TESTS_FITTED_MODELS_H_
#define DPIIL_TESTS_FITTED_MODELS_H_

#include <cmath>
#include <vector>

#include "dpiil/estimators.h"
#include "dpiil/oracle.h"

namespace dpiil::testing_oracle {

// Models fitted once on the default three-demonstration dataset.
struct DefaultModels {
  World world = BuildWorld(EnvConfig::Default());
  ExpertConfig expert = ExpertConfig::Default();
  Dataset data;
  EnsemblePolicy policy;
  SpeedEstimator speed;

  static const DefaultModels& Get() {
    static const DefaultModels m = [] {
      DefaultModels d;
      d.data = GenerateDemos(d.world, d.expert, 3, 0);
      d.policy = FitPolicy(d.data, 5, 1, NetConfig{}, d.world.max_action());
      d.speed = FitSpeed(d.data, 2, NetConfig{});
      return d;
    }();
    return m;
  }
};

// Ensemble of constant members, member i always outputs outputs[i].
inline EnsemblePolicy ConstantEnsemble(const std::vector<Action2>& outputs, double max_action = 1.5) {
  EnsemblePolicy ens;
  ens.max_action = max_action;
  for (const Action2& a : outputs) {
    nn::Mlp m({2, 2}, 0);
    m.SetParameters({0.0, 0.0, 0.0, 0.0, a.vx, a.vy});
    ens.members.push_back(m);
  }
  return ens;
}

// Speed model with constant mean and variance.
inline SpeedEstimator ConstantSpeed(double mean, double variance) {
  SpeedEstimator est;
  est.net = nn::Mlp({2, 2}, 0);
  est.net.SetParameters({0.0, 0.0, 0.0, 0.0, mean, std::log(variance)});
  return est;
}

}  // namespace dpiil::testing_oracle

#endif  // DPIIL_TESTS_FITTED_MODELS_H_

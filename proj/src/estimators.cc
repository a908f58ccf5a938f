#include "dpiil/estimators.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <istream>
#include <ostream>
#include <string>

#include "dpiil/random.h"

namespace dpiil {

Eigen::MatrixXd StateMatrix(const Dataset& data) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), 2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = data[i].s.x;
    x(static_cast<Eigen::Index>(i), 1) = data[i].s.y;
  }
  return x;
}

Eigen::MatrixXd StateMatrix(const std::vector<State2>& states) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(states.size()), 2);
  for (std::size_t i = 0; i < states.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = states[i].x;
    x(static_cast<Eigen::Index>(i), 1) = states[i].y;
  }
  return x;
}

EnsembleQuery QueryEnsemble(const EnsemblePolicy& ens, const State2& s) {
  EnsembleQuery q;
  const std::size_t m = ens.members.size();
  if (m == 0) return q;
  const Eigen::Vector2d x(s.x, s.y);
  std::vector<Eigen::Vector2d> outs;
  outs.reserve(m);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const nn::Mlp& net : ens.members) {
    outs.push_back(net.Forward(x));
    mean += outs.back();
  }
  mean /= static_cast<double>(m);
  Eigen::Vector2d var = Eigen::Vector2d::Zero();
  for (const Eigen::Vector2d& o : outs) var += (o - mean).cwiseAbs2();
  var /= static_cast<double>(m);
  q.mean = ClipAction({mean(0), mean(1)}, ens.max_action);
  q.variance = var.mean();
  return q;
}

Action2 PolicyAction(const EnsemblePolicy& ens, const State2& s) { return QueryEnsemble(ens, s).mean; }

double PolicyVariance(const EnsemblePolicy& ens, const State2& s) {
  return QueryEnsemble(ens, s).variance;
}

std::vector<double> PolicyVarianceBatch(const EnsemblePolicy& ens, const std::vector<State2>& states) {
  const Eigen::MatrixXd x = StateMatrix(states).transpose();
  const std::size_t m = ens.members.size();
  std::vector<Eigen::MatrixXd> outs;
  outs.reserve(m);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(2, x.cols());
  for (const nn::Mlp& net : ens.members) {
    outs.push_back(net.ForwardBatch(x));
    mean += outs.back();
  }
  mean /= static_cast<double>(m);
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(2, x.cols());
  for (const Eigen::MatrixXd& o : outs) var += (o - mean).cwiseAbs2();
  var /= static_cast<double>(m);
  std::vector<double> result(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    result[i] = var.col(static_cast<Eigen::Index>(i)).mean();
  }
  return result;
}

namespace {

std::vector<int> Topology(int in, const NetConfig& cfg, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(out);
  return sizes;
}

nn::Mlp FitMember(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int m, std::uint64_t seed,
                  const NetConfig& cfg) {
  const auto idx = static_cast<std::uint64_t>(m);
  nn::Mlp net(Topology(2, cfg, 2), DeriveSeed(seed, idx, 0));
  nn::TrainOptions opts = cfg.train;
  opts.seed = DeriveSeed(seed, idx, 1);
  nn::Train(net, x, y, nn::LossKind::kMse, opts);
  return net;
}

Eigen::MatrixXd ActionMatrix(const Dataset& data) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(data.size()), 2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    y(static_cast<Eigen::Index>(i), 0) = data[i].a_star.vx;
    y(static_cast<Eigen::Index>(i), 1) = data[i].a_star.vy;
  }
  return y;
}

void CheckFitArgs(const Dataset& data, int ensemble_size) {
  if (ensemble_size < 2) throw std::invalid_argument("ensemble needs at least two members");
  if (data.empty()) throw nn::TrainingError("training dataset is empty");
}

}  // namespace

EnsemblePolicy FitPolicy(const Dataset& data, int ensemble_size, std::uint64_t seed,
                         const NetConfig& net, double max_action) {
  CheckFitArgs(data, ensemble_size);
  const Eigen::MatrixXd x = StateMatrix(data);
  const Eigen::MatrixXd y = ActionMatrix(data);
  EnsemblePolicy ens;
  ens.max_action = max_action;
  ens.members.resize(static_cast<std::size_t>(ensemble_size));
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (int m = 0; m < ensemble_size; ++m) {
    try {
      ens.members[static_cast<std::size_t>(m)] = FitMember(x, y, m, seed, net);
    } catch (...) {
#pragma omp critical(dpiil_fit_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return ens;
}

EnsemblePolicy FitPolicySerial(const Dataset& data, int ensemble_size, std::uint64_t seed,
                               const NetConfig& net, double max_action) {
  CheckFitArgs(data, ensemble_size);
  const Eigen::MatrixXd x = StateMatrix(data);
  const Eigen::MatrixXd y = ActionMatrix(data);
  EnsemblePolicy ens;
  ens.max_action = max_action;
  for (int m = 0; m < ensemble_size; ++m) ens.members.push_back(FitMember(x, y, m, seed, net));
  return ens;
}

SpeedEstimator::Prediction SpeedEstimator::Predict(const State2& s) const {
  const Eigen::VectorXd out = net.Forward(Eigen::Vector2d(s.x, s.y));
  return {out(0), std::exp(nn::ClampLogVar(out(1)))};
}

SpeedEstimator FitSpeed(const Dataset& data, std::uint64_t seed, const NetConfig& cfg) {
  if (data.empty()) throw nn::TrainingError("training dataset is empty");
  const Eigen::MatrixXd x = StateMatrix(data);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(data.size()), 1);
  for (std::size_t i = 0; i < data.size(); ++i) y(static_cast<Eigen::Index>(i), 0) = data[i].v_star;
  SpeedEstimator est{nn::Mlp(Topology(2, cfg, 2), DeriveSeed(seed, 0x5eedULL, 0))};
  nn::TrainOptions opts = cfg.train;
  opts.seed = DeriveSeed(seed, 0x5eedULL, 1);
  nn::Train(est.net, x, y, nn::LossKind::kGaussianNll, opts);
  return est;
}

double PrecisionFromMoments(double mean, double variance, PrecisionMode mode) {
  const double speed = mode == PrecisionMode::kMu ? mean : mean + std::sqrt(variance);
  return 1.0 / std::max(speed, kPrecisionFloor);
}

double Precision(const SpeedEstimator& est, const State2& s, PrecisionMode mode) {
  const auto p = est.Predict(s);
  return PrecisionFromMoments(p.mean, p.variance, mode);
}

std::vector<double> PrecisionBatch(const SpeedEstimator& est, const std::vector<State2>& states,
                                   PrecisionMode mode) {
  const Eigen::MatrixXd out = est.net.ForwardBatch(StateMatrix(states).transpose());
  std::vector<double> result(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    result[i] = PrecisionFromMoments(out(0, c), std::exp(nn::ClampLogVar(out(1, c))), mode);
  }
  return result;
}

void SaveEnsemble(std::ostream& out, const EnsemblePolicy& ens) {
  out << "dpiil-ensemble schema_version 1 members " << ens.members.size() << " max_action ";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", ens.max_action);
  out << buf << '\n';
  for (const nn::Mlp& m : ens.members) nn::SaveMlp(out, m);
}

EnsemblePolicy LoadEnsemble(std::istream& in) {
  std::string magic, sv, members_kw, max_kw, max_tok;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> sv >> version >> members_kw >> count >> max_kw >> max_tok) ||
      magic != "dpiil-ensemble" || version != 1 || members_kw != "members" || max_kw != "max_action") {
    throw std::runtime_error("ensemble checkpoint: bad header");
  }
  EnsemblePolicy ens;
  ens.max_action = std::strtod(max_tok.c_str(), nullptr);
  for (std::size_t i = 0; i < count; ++i) ens.members.push_back(nn::LoadMlp(in));
  return ens;
}

void SaveSpeed(std::ostream& out, const SpeedEstimator& est) {
  out << "dpiil-speed schema_version 1\n";
  nn::SaveMlp(out, est.net);
}

SpeedEstimator LoadSpeed(std::istream& in) {
  std::string magic, sv;
  int version = 0;
  if (!(in >> magic >> sv >> version) || magic != "dpiil-speed" || version != 1) {
    throw std::runtime_error("speed checkpoint: bad header");
  }
  return {nn::LoadMlp(in)};
}

}  // namespace dpiil

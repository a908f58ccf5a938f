#include "dpiil/tinynet.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "dpiil/random.h"

namespace dpiil::nn {

Mlp::Mlp(std::vector<int> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least two layer sizes");
  for (int s : sizes_) {
    if (s <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
  }
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Layer layer;
    layer.w.resize(out, in);
    for (int c = 0; c < in; ++c) {
      for (int r = 0; r < out; ++r) layer.w(r, c) = u(rng);
    }
    layer.b = Eigen::VectorXd::Zero(out);
    layers_.push_back(std::move(layer));
  }
  shift_ = Eigen::VectorXd::Zero(sizes_.front());
  scale_ = Eigen::VectorXd::Ones(sizes_.front());
}

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.w.size() + l.b.size();
  return n;
}

void Mlp::SetNormalization(Eigen::VectorXd shift, Eigen::VectorXd scale) {
  if (shift.size() != input_dim() || scale.size() != input_dim()) {
    throw std::invalid_argument("normalization size does not match the input layer");
  }
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

void Mlp::FitNormalization(const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != input_dim() || inputs.rows() == 0) {
    throw std::invalid_argument("normalization data does not match the input layer");
  }
  Eigen::VectorXd mean = inputs.colwise().mean().transpose();
  Eigen::VectorXd sd(input_dim());
  for (int j = 0; j < input_dim(); ++j) {
    const double var = (inputs.col(j).array() - mean(j)).square().mean();
    sd(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  SetNormalization(std::move(mean), std::move(sd));
}

Eigen::VectorXd Mlp::Forward(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) {
    throw std::invalid_argument("Mlp input has " + std::to_string(x.size()) + " values, expected " +
                                std::to_string(input_dim()));
  }
  Eigen::VectorXd a = (x - shift_).cwiseQuotient(scale_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].w * a + layers_[l].b;
    a = (l + 1 < layers_.size()) ? Eigen::VectorXd(z.array().tanh()) : z;
  }
  return a;
}

Eigen::MatrixXd Mlp::ForwardBatch(const Eigen::MatrixXd& x) const {
  return ForwardTape(*this, x).output;
}

std::vector<double> Mlp::Parameters() const {
  std::vector<double> p;
  p.reserve(num_params());
  for (const Layer& l : layers_) {
    p.insert(p.end(), l.w.data(), l.w.data() + l.w.size());
    p.insert(p.end(), l.b.data(), l.b.data() + l.b.size());
  }
  return p;
}

void Mlp::SetParameters(const std::vector<double>& p) {
  if (p.size() != num_params()) throw std::invalid_argument("parameter vector size mismatch");
  std::size_t k = 0;
  for (Layer& l : layers_) {
    std::copy_n(p.begin() + k, l.w.size(), l.w.data());
    k += l.w.size();
    std::copy_n(p.begin() + k, l.b.size(), l.b.data());
    k += l.b.size();
  }
}

bool Mlp::AllFinite() const {
  for (const Layer& l : layers_) {
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

bool Mlp::operator==(const Mlp& o) const {
  if (sizes_ != o.sizes_ || shift_ != o.shift_ || scale_ != o.scale_) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].w != o.layers_[l].w || layers_[l].b != o.layers_[l].b) return false;
  }
  return true;
}

Tape ForwardTape(const Mlp& net, const Eigen::MatrixXd& x) {
  if (x.rows() != net.input_dim()) {
    throw std::invalid_argument("Mlp batch has " + std::to_string(x.rows()) +
                                " input rows, expected " + std::to_string(net.input_dim()));
  }
  const auto& layers = net.layers();
  Tape tape;
  tape.acts.reserve(layers.size());
  tape.acts.push_back(
      (x.colwise() - net.input_shift()).array().colwise() / net.input_scale().array());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].w * tape.acts.back();
    z.colwise() += layers[l].b;
    if (l + 1 < layers.size()) {
      tape.acts.push_back(z.array().tanh().matrix());
    } else {
      tape.output = std::move(z);
    }
  }
  return tape;
}

std::vector<Layer> Backward(const Mlp& net, const Tape& tape, const Eigen::MatrixXd& d_output) {
  const auto& layers = net.layers();
  std::vector<Layer> grads(layers.size());
  Eigen::MatrixXd delta = d_output;
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads[l].w.noalias() = delta * tape.acts[l].transpose();
    grads[l].b = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layers[l].w.transpose() * delta;
      delta = back.array() * (1.0 - tape.acts[l].array().square());
    }
  }
  return grads;
}

LossGrad MseLoss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("MSE prediction and target shapes differ");
  }
  LossGrad out;
  const double n = static_cast<double>(std::max<Eigen::Index>(pred.cols(), 1));
  const Eigen::MatrixXd diff = pred - target;
  out.value = diff.squaredNorm() / n;
  out.grad = (2.0 / n) * diff;
  return out;
}

double ClampLogVar(double raw) { return std::clamp(raw, kLogVarMin, kLogVarMax); }

NllValue GaussianNll(double v, double mu, double log_var) {
  constexpr double kLog2Pi = 1.8378770664093453;
  const double inv_var = std::exp(-log_var);
  const double r = v - mu;
  NllValue out;
  out.value = 0.5 * (kLog2Pi + log_var + r * r * inv_var);
  out.d_mu = -r * inv_var;
  out.d_log_var = 0.5 * (1.0 - r * r * inv_var);
  return out;
}

LossGrad GaussianNllLoss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != 2 || target.rows() != 1 || pred.cols() != target.cols()) {
    throw std::invalid_argument("Gaussian NLL expects (mu, log_var) predictions and scalar targets");
  }
  LossGrad out;
  out.grad = Eigen::MatrixXd::Zero(2, pred.cols());
  const double n = static_cast<double>(std::max<Eigen::Index>(pred.cols(), 1));
  for (Eigen::Index i = 0; i < pred.cols(); ++i) {
    const double raw = pred(1, i);
    const NllValue v = GaussianNll(target(0, i), pred(0, i), ClampLogVar(raw));
    out.value += v.value;
    out.grad(0, i) = v.d_mu / n;
    out.grad(1, i) = (raw >= kLogVarMin && raw <= kLogVarMax) ? v.d_log_var / n : 0.0;
  }
  out.value /= n;
  return out;
}

namespace {

std::vector<Layer> ZerosLike(const Mlp& net) {
  std::vector<Layer> z;
  for (const Layer& l : net.layers()) {
    z.push_back({Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()), Eigen::VectorXd::Zero(l.b.size())});
  }
  return z;
}

LossGrad ComputeLoss(LossKind kind, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  return kind == LossKind::kMse ? MseLoss(pred, target) : GaussianNllLoss(pred, target);
}

}  // namespace

Adam::Adam(const Mlp& net, AdamOptions opts) : opts_(opts), m_(ZerosLike(net)), v_(ZerosLike(net)) {}

void Adam::Step(Mlp& net, const std::vector<Layer>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const double step = opts_.lr * std::sqrt(c2) / c1;
  const double eps = opts_.eps * std::sqrt(c2);
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = opts_.beta1 * m + (1.0 - opts_.beta1) * g;
    v = opts_.beta2 * v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
    param.array() -= step * m.array() / (v.array().sqrt() + eps);
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].w, m_[l].w, v_[l].w, grads[l].w);
    update(layers[l].b, m_[l].b, v_[l].b, grads[l].b);
  }
}

TrainReport Train(Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  LossKind loss, const TrainOptions& opts) {
  const Eigen::Index n = inputs.rows();
  if (n == 0) throw TrainingError("training dataset is empty");
  if (targets.rows() != n) throw std::invalid_argument("inputs and targets differ in sample count");
  if (inputs.cols() != net.input_dim()) throw std::invalid_argument("input width mismatch");
  const Eigen::Index target_dim = loss == LossKind::kMse ? net.output_dim() : 1;
  if (targets.cols() != target_dim) throw std::invalid_argument("target width mismatch");
  if (loss == LossKind::kGaussianNll && net.output_dim() != 2) {
    throw std::invalid_argument("Gaussian NLL needs a two-output network");
  }
  if (opts.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (opts.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");

  if (opts.fit_normalization) net.FitNormalization(inputs);
  const Eigen::MatrixXd xt = inputs.transpose();
  const Eigen::MatrixXd yt = targets.transpose();

  Rng rng(opts.seed);
  Adam adam(net, opts.adam);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainReport report;
  Eigen::MatrixXd xb, yb;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (Eigen::Index start = 0; start < n; start += opts.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(opts.batch_size, n - start);
      xb.resize(xt.rows(), b);
      yb.resize(yt.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        xb.col(j) = xt.col(order[start + j]);
        yb.col(j) = yt.col(order[start + j]);
      }
      const Tape tape = ForwardTape(net, xb);
      const LossGrad lg = ComputeLoss(loss, tape.output, yb);
      if (!std::isfinite(lg.value)) {
        throw TrainingError("training diverged: non-finite loss in epoch " + std::to_string(epoch + 1));
      }
      total += lg.value * static_cast<double>(b);
      adam.Step(net, Backward(net, tape, lg.grad));
    }
    report.epoch_loss.push_back(total / static_cast<double>(n));
  }
  if (!net.AllFinite()) throw TrainingError("training diverged: non-finite parameters");
  if (report.epoch_loss.back() > report.epoch_loss.front()) {
    report.loss_increased = true;
    std::cerr << "warning: final-epoch loss " << report.epoch_loss.back()
              << " exceeds first-epoch loss " << report.epoch_loss.front() << "\n";
  }
  return report;
}

double EvaluateLoss(const Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                    LossKind loss) {
  const Eigen::MatrixXd pred = net.ForwardBatch(inputs.transpose());
  return ComputeLoss(loss, pred, targets.transpose()).value;
}

namespace {

void WriteHex(std::ostream& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  out << buf;
}

double ReadHex(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw std::runtime_error("checkpoint: unexpected end of data");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw std::runtime_error("checkpoint: bad number '" + tok + "'");
  return v;
}

void Expect(std::istream& in, const std::string& word) {
  std::string tok;
  if (!(in >> tok) || tok != word) {
    throw std::runtime_error("checkpoint: expected '" + word + "', found '" + tok + "'");
  }
}

}  // namespace

void SaveMlp(std::ostream& out, const Mlp& net) {
  out << "dpiil-mlp schema_version 1\n";
  out << "sizes " << net.sizes().size();
  for (int s : net.sizes()) out << ' ' << s;
  out << "\ninput_shift";
  for (Eigen::Index i = 0; i < net.input_shift().size(); ++i) {
    out << ' ';
    WriteHex(out, net.input_shift()(i));
  }
  out << "\ninput_scale";
  for (Eigen::Index i = 0; i < net.input_scale().size(); ++i) {
    out << ' ';
    WriteHex(out, net.input_scale()(i));
  }
  out << '\n';
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const Layer& layer = net.layers()[l];
    out << "layer " << l << ' ' << layer.w.rows() << ' ' << layer.w.cols() << " tanh_hidden\n";
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
        if (c > 0) out << ' ';
        WriteHex(out, layer.w(r, c));
      }
      out << '\n';
    }
    out << "bias";
    for (Eigen::Index r = 0; r < layer.b.size(); ++r) {
      out << ' ';
      WriteHex(out, layer.b(r));
    }
    out << '\n';
  }
  out << "end\n";
}

Mlp LoadMlp(std::istream& in) {
  Expect(in, "dpiil-mlp");
  Expect(in, "schema_version");
  int version = 0;
  if (!(in >> version) || version != 1) throw std::runtime_error("checkpoint: unsupported schema version");
  Expect(in, "sizes");
  std::size_t count = 0;
  if (!(in >> count) || count < 2 || count > 64) throw std::runtime_error("checkpoint: bad layer count");
  std::vector<int> sizes(count);
  for (int& s : sizes) {
    if (!(in >> s) || s <= 0) throw std::runtime_error("checkpoint: bad layer size");
  }
  Mlp net(sizes, 0);
  Eigen::VectorXd shift(sizes.front()), scale(sizes.front());
  Expect(in, "input_shift");
  for (Eigen::Index i = 0; i < shift.size(); ++i) shift(i) = ReadHex(in);
  Expect(in, "input_scale");
  for (Eigen::Index i = 0; i < scale.size(); ++i) scale(i) = ReadHex(in);
  net.SetNormalization(shift, scale);
  for (std::size_t l = 0; l + 1 < count; ++l) {
    Layer& layer = net.layers()[l];
    Expect(in, "layer");
    std::size_t idx = 0;
    Eigen::Index rows = 0, cols = 0;
    std::string act;
    if (!(in >> idx >> rows >> cols >> act) || idx != l || rows != layer.w.rows() ||
        cols != layer.w.cols()) {
      throw std::runtime_error("checkpoint: layer header mismatch");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) layer.w(r, c) = ReadHex(in);
    }
    Expect(in, "bias");
    for (Eigen::Index r = 0; r < rows; ++r) layer.b(r) = ReadHex(in);
  }
  Expect(in, "end");
  return net;
}

}  // namespace dpiil::nn

#ifndef DPIIL_TINYNET_H_
#define DPIIL_TINYNET_H_

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dpiil::nn {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
};

// Fully connected network: tanh on hidden layers, linear output. Inputs are
// standardized with the stored shift/scale before the first layer.
class Mlp {
 public:
  Mlp() = default;
  // Glorot-uniform weights, zero biases.
  Mlp(std::vector<int> sizes, std::uint64_t seed);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t num_params() const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  const Eigen::VectorXd& input_shift() const { return shift_; }
  const Eigen::VectorXd& input_scale() const { return scale_; }
  void SetNormalization(Eigen::VectorXd shift, Eigen::VectorXd scale);
  // Mean/std of the columns of `inputs` (samples x features); unit scale
  // for constant features.
  void FitNormalization(const Eigen::MatrixXd& inputs);

  // Throws std::invalid_argument on a dimension mismatch.
  Eigen::VectorXd Forward(const Eigen::VectorXd& x) const;
  // Columns are samples.
  Eigen::MatrixXd ForwardBatch(const Eigen::MatrixXd& x) const;

  // Flat parameter view, layer by layer: W (column-major) then b.
  std::vector<double> Parameters() const;
  void SetParameters(const std::vector<double>& p);

  bool AllFinite() const;
  bool operator==(const Mlp& o) const;

 private:
  std::vector<int> sizes_;
  std::vector<Layer> layers_;
  Eigen::VectorXd shift_;
  Eigen::VectorXd scale_;
};

// Activations kept from a batched forward pass for backpropagation.
struct Tape {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = normalized input
  Eigen::MatrixXd output;
};

Tape ForwardTape(const Mlp& net, const Eigen::MatrixXd& x);

// Gradients of a scalar loss w.r.t. every layer, given dL/d(output).
std::vector<Layer> Backward(const Mlp& net, const Tape& tape, const Eigen::MatrixXd& d_output);

struct LossGrad {
  double value = 0.0;
  Eigen::MatrixXd grad;  // w.r.t. the prediction, same shape
};

// Squared L2 error summed over output dims, averaged over the batch columns.
LossGrad MseLoss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 4.0;

struct NllValue {
  double value = 0.0;
  double d_mu = 0.0;
  double d_log_var = 0.0;
};

// 0.5 * [ln(2 pi) + log_var + (v - mu)^2 exp(-log_var)]
NllValue GaussianNll(double v, double mu, double log_var);

double ClampLogVar(double raw);

// Batched Gaussian NLL over a two-row prediction (mu; raw log-variance).
// The log-variance is clamped; its gradient is zero where the clamp binds.
LossGrad GaussianNllLoss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

enum class LossKind { kMse, kGaussianNll };

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment accumulators mirroring an Mlp's parameter shapes.
class Adam {
 public:
  Adam(const Mlp& net, AdamOptions opts);
  void Step(Mlp& net, const std::vector<Layer>& grads);
  long step_count() const { return t_; }

 private:
  AdamOptions opts_;
  long t_ = 0;
  std::vector<Layer> m_;
  std::vector<Layer> v_;
};

struct TrainOptions {
  int epochs = 200;
  int batch_size = 64;
  AdamOptions adam;
  std::uint64_t seed = 0;
  bool fit_normalization = true;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  bool loss_increased = false;
};

// Mini-batch training. `inputs` and `targets` hold one sample per row.
// Throws TrainingError on an empty dataset or a non-finite loss.
TrainReport Train(Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  LossKind loss, const TrainOptions& opts);

// Mean loss of the whole dataset under the current parameters.
double EvaluateLoss(const Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                    LossKind loss);

// Text checkpoint with hexadecimal floats; Save -> Load is bit-exact.
void SaveMlp(std::ostream& out, const Mlp& net);
Mlp LoadMlp(std::istream& in);

}  // namespace dpiil::nn

#endif  // DPIIL_TINYNET_H_

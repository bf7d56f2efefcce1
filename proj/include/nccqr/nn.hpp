#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace nccqr {

/// Two-output ReLU MLP. widths = {d, hidden..., 2}; weights[i] is
/// widths[i+1] x widths[i]. Output row 0 is the lower head, row 1 the upper.
struct NetworkParams {
  std::vector<Eigen::Index> widths;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  /// Outputs clipped to [-bound, bound] when set.
  std::optional<double> output_bound;

  Eigen::Index input_dim() const { return widths.front(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  /// Throws std::invalid_argument if shapes, widths or values are inconsistent.
  void validate() const;
};

/// Per-parameter derivatives, shaped like NetworkParams.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Gradients zeros_like(const NetworkParams& params);
  bool all_finite() const;
};

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Gradients first_moment;
  Gradients second_moment;
  std::uint64_t step = 0;
  AdamHyper hyper;

  static AdamState for_params(const NetworkParams& params, AdamHyper hyper = {});
};

/// He-normal weights (variance 2 / fan_in), zero biases.
NetworkParams init_network(Eigen::Index input_dim, std::span<const Eigen::Index> hidden_widths,
                           std::uint64_t seed);

std::pair<double, double> forward(const NetworkParams& params, std::span<const double> x);

/// X is n x d; returns n x 2.
Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& X);

/// Pullback of per-sample output gradients (n x 2), summed over the batch and
/// divided by n.
Gradients backward(const NetworkParams& params, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& output_grads);

/// One Adam update with bias correction. Throws std::domain_error on
/// non-finite gradients; params and state are left untouched in that case.
void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state);

/// Cached activations of one forward pass, reused by the training loop.
/// Inputs are column-major with one sample per column (d x n).
class ForwardPass {
 public:
  void run(const NetworkParams& params, const Eigen::MatrixXd& inputs);

  /// 2 x n network outputs of the last run.
  const Eigen::MatrixXd& outputs() const { return outputs_; }

  /// output_grads is 2 x n; result is the batch mean of the pullbacks.
  Gradients backward(const NetworkParams& params, const Eigen::MatrixXd& output_grads) const;

 private:
  const Eigen::MatrixXd* inputs_ = nullptr;
  std::vector<Eigen::MatrixXd> pre_;   // pre-activation per layer
  std::vector<Eigen::MatrixXd> post_;  // ReLU output per hidden layer
  Eigen::MatrixXd outputs_;
};

}  // namespace nccqr

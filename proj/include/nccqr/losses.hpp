#pragma once

#include <Eigen/Dense>

namespace nccqr {

/// Lower and upper quantile levels, 0 < tau1 < tau2 < 1.
class QuantileLevels {
 public:
  QuantileLevels(double tau1, double tau2);

  /// tau1 = alpha / 2, tau2 = 1 - alpha / 2.
  static QuantileLevels for_miscoverage(double alpha);

  double tau1() const { return tau1_; }
  double tau2() const { return tau2_; }

 private:
  double tau1_;
  double tau2_;
};

/// Non-negative weight of the crossing penalty.
class PenaltyWeight {
 public:
  explicit PenaltyWeight(double lambda);
  double value() const { return lambda_; }

 private:
  double lambda_;
};

/// rho_tau(u) = u * (tau - 1{u <= 0}).
double check_loss(double u, double tau);

/// Derivative of check_loss in u; at u = 0 the indicator is taken as written,
/// giving tau - 1.
double check_subgrad(double u, double tau);

/// max(f1 - f2, 0).
double relu_penalty(double f1, double f2);

/// Mean over samples of rho_tau1(y - f1) + rho_tau2(y - f2) + lambda * max(f1 - f2, 0).
/// preds is n x 2 (lower, upper).
double penalized_objective(const Eigen::MatrixXd& preds, const Eigen::VectorXd& y,
                           const QuantileLevels& levels, PenaltyWeight lambda);

/// Per-sample subgradient of the summand (no 1/n factor), n x 2. The penalty
/// contributes nothing at f1 == f2.
Eigen::MatrixXd sample_output_grads(const Eigen::MatrixXd& preds, const Eigen::VectorXd& y,
                                    const QuantileLevels& levels, PenaltyWeight lambda);

/// Subgradient of penalized_objective with respect to each prediction,
/// i.e. sample_output_grads / n.
Eigen::MatrixXd objective_output_grads(const Eigen::MatrixXd& preds, const Eigen::VectorXd& y,
                                       const QuantileLevels& levels, PenaltyWeight lambda);

}  // namespace nccqr

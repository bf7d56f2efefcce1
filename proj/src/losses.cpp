#include "nccqr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nccqr {

namespace {

void require_level(double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("quantile level must lie in (0, 1), got " + std::to_string(tau));
}

void require_shapes(const Eigen::MatrixXd& preds, const Eigen::VectorXd& y) {
  if (preds.cols() != 2) throw std::invalid_argument("predictions must have 2 columns");
  if (preds.rows() != y.size())
    throw std::invalid_argument("prediction rows (" + std::to_string(preds.rows()) +
                                ") do not match responses (" + std::to_string(y.size()) + ")");
  if (y.size() == 0) throw std::invalid_argument("objective of an empty batch");
}

}  // namespace

QuantileLevels::QuantileLevels(double tau1, double tau2) : tau1_(tau1), tau2_(tau2) {
  require_level(tau1);
  require_level(tau2);
  if (!(tau1 < tau2)) throw std::invalid_argument("quantile levels must satisfy tau1 < tau2");
}

QuantileLevels QuantileLevels::for_miscoverage(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  return QuantileLevels(alpha / 2.0, 1.0 - alpha / 2.0);
}

PenaltyWeight::PenaltyWeight(double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("penalty weight must be finite and >= 0");
}

double check_loss(double u, double tau) {
  require_level(tau);
  return u * (tau - (u <= 0.0 ? 1.0 : 0.0));
}

double check_subgrad(double u, double tau) {
  require_level(tau);
  return u > 0.0 ? tau : tau - 1.0;
}

double relu_penalty(double f1, double f2) { return std::max(f1 - f2, 0.0); }

double penalized_objective(const Eigen::MatrixXd& preds, const Eigen::VectorXd& y,
                           const QuantileLevels& levels, PenaltyWeight lambda) {
  require_shapes(preds, y);
  double pinball = 0.0;
  double penalty = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double f1 = preds(i, 0);
    const double f2 = preds(i, 1);
    pinball += check_loss(y(i) - f1, levels.tau1()) + check_loss(y(i) - f2, levels.tau2());
    penalty += relu_penalty(f1, f2);
  }
  const double n = static_cast<double>(y.size());
  // Summed separately so that a zero penalty leaves the pinball mean bit-identical.
  return pinball / n + lambda.value() * penalty / n;
}

Eigen::MatrixXd sample_output_grads(const Eigen::MatrixXd& preds, const Eigen::VectorXd& y,
                                    const QuantileLevels& levels, PenaltyWeight lambda) {
  require_shapes(preds, y);
  Eigen::MatrixXd g(y.size(), 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double f1 = preds(i, 0);
    const double f2 = preds(i, 1);
    const double crossing = f1 > f2 ? lambda.value() : 0.0;
    g(i, 0) = -check_subgrad(y(i) - f1, levels.tau1()) + crossing;
    g(i, 1) = -check_subgrad(y(i) - f2, levels.tau2()) - crossing;
  }
  return g;
}

Eigen::MatrixXd objective_output_grads(const Eigen::MatrixXd& preds, const Eigen::VectorXd& y,
                                       const QuantileLevels& levels, PenaltyWeight lambda) {
  return sample_output_grads(preds, y, levels, lambda) / static_cast<double>(y.size());
}

}  // namespace nccqr

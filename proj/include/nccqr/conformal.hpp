#pragma once

#include "nccqr/datasets.hpp"
#include "nccqr/losses.hpp"
#include "nccqr/nn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

namespace nccqr {

/// Thrown when the training objective becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct TrainConfig {
  /// Crossing-penalty weight; ln(n_train) when unset.
  std::optional<double> lambda;
  std::vector<Eigen::Index> hidden_widths{256, 256, 256};
  AdamHyper adam;
  int epochs = 2000;
  /// Stop when the best objective improved by less than this over the window.
  double early_stop_tol = 1e-6;
  int early_stop_window = 50;
  /// Full-batch training up to this many samples, mini-batches above.
  Eigen::Index full_batch_max = 4000;
  Eigen::Index batch_size = 256;
  std::uint64_t seed = 0;
  std::optional<double> output_bound;
  bool standardize_features = false;
  bool standardize_response = false;
  /// Linear quantile regression (subgradient descent).
  int qr_iterations = 4000;
  double qr_learning_rate = 0.05;

  double resolved_lambda(Eigen::Index n_train) const;
  void validate() const;
};

struct LinearQuantileFit {
  double intercept = 0.0;
  Eigen::VectorXd slope;

  double predict(std::span<const double> x) const;
};

/// Affine map applied to network outputs: y = shift + scale * f.
struct ResponseScale {
  double shift = 0.0;
  double scale = 1.0;
};

/// Fitted pair (lower, upper) of conditional quantile estimates.
class QuantileModel {
 public:
  enum class Kind { Neural, Linear };

  struct LinearPair {
    LinearQuantileFit lower;
    LinearQuantileFit upper;
  };

  QuantileModel(NetworkParams network, QuantileLevels levels, Scaler scaler,
                ResponseScale response = {}, std::vector<double> loss_trace = {});
  QuantileModel(LinearPair linear, QuantileLevels levels);

  Kind kind() const { return std::holds_alternative<NetworkParams>(body_) ? Kind::Neural : Kind::Linear; }
  const QuantileLevels& levels() const { return levels_; }
  Eigen::Index input_dim() const;

  /// X is n x d in raw feature units; returns n x 2 (lower, upper).
  Eigen::MatrixXd predict(const Eigen::MatrixXd& X) const;
  std::pair<double, double> predict(std::span<const double> x) const;

  const NetworkParams* network() const { return std::get_if<NetworkParams>(&body_); }
  const LinearPair* linear() const { return std::get_if<LinearPair>(&body_); }
  const Scaler& scaler() const { return scaler_; }
  const ResponseScale& response_scale() const { return response_; }

  /// Training objective per epoch (neural) or per iteration sample (linear).
  const std::vector<double>& loss_trace() const { return loss_trace_; }

 private:
  std::variant<NetworkParams, LinearPair> body_;
  QuantileLevels levels_;
  Scaler scaler_;
  ResponseScale response_;
  std::vector<double> loss_trace_;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool crossed() const { return hi < lo; }
};

/// Quantile model plus the calibrated offset added to both band edges.
struct ConformalBand {
  QuantileModel model;
  double q_hat = 0.0;
  double alpha = 0.1;
  std::size_t calib_size = 0;

  /// n x 2 matrix of (lo, hi) for raw features X.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& X) const;
};

/// Penalized quantile network fitted by full- or mini-batch Adam.
QuantileModel fit_nccqr(const Dataset& train, const QuantileLevels& levels, const TrainConfig& cfg);

/// fit_nccqr with the crossing penalty switched off.
QuantileModel fit_cqr(const Dataset& train, const QuantileLevels& levels, const TrainConfig& cfg);

/// Affine tau-quantile regression by subgradient descent on the mean pinball loss.
LinearQuantileFit fit_linear_qr(const Dataset& train, double tau, const TrainConfig& cfg);

/// Linear model for both levels.
QuantileModel fit_qr_pair(const Dataset& train, const QuantileLevels& levels, const TrainConfig& cfg);

/// E_i = max(f1(x_i) - y_i, y_i - f2(x_i)).
Eigen::VectorXd conformity_scores(const QuantileModel& model, const Dataset& calib);

/// Rank k = ceil((1 - alpha)(m + 1)) used by the calibrated quantile.
std::size_t conformal_rank(std::size_t m, double alpha);

/// k-th smallest score, k = conformal_rank. Throws std::invalid_argument when k > m.
double empirical_quantile(std::span<const double> scores, double alpha);

ConformalBand calibrate(QuantileModel model, const Dataset& calib, double alpha);

/// [f1(x) - q_hat, f2(x) + q_hat]; not reordered when crossed.
Interval predict_interval(const ConformalBand& band, std::span<const double> x);

}  // namespace nccqr

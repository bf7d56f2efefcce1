#include "nccqr/conformal.hpp"

#include "nccqr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace nccqr {

namespace {

double column_quantile(Eigen::VectorXd values, double tau) {
  auto* begin = values.data();
  auto* end = begin + values.size();
  const auto k = static_cast<std::ptrdiff_t>(
      std::clamp(std::ceil(tau * static_cast<double>(values.size())) - 1.0, 0.0,
                 static_cast<double>(values.size() - 1)));
  std::nth_element(begin, begin + k, end);
  return begin[k];
}

// Full-data objective and per-sample gradients in column (2 x n) layout.
struct ObjectiveEval {
  double value = 0.0;
  Eigen::MatrixXd sample_grads;  // 2 x n
};

ObjectiveEval evaluate_objective(const Eigen::MatrixXd& outputs, const Eigen::VectorXd& y,
                                 const QuantileLevels& levels, PenaltyWeight lambda) {
  const Eigen::MatrixXd preds = outputs.transpose();
  return {penalized_objective(preds, y, levels, lambda),
          sample_output_grads(preds, y, levels, lambda).transpose()};
}

}  // namespace

double TrainConfig::resolved_lambda(Eigen::Index n_train) const {
  if (lambda) return *lambda;
  return std::log(static_cast<double>(std::max<Eigen::Index>(n_train, 1)));
}

void TrainConfig::validate() const {
  if (lambda) (void)PenaltyWeight(*lambda);
  if (hidden_widths.empty()) throw std::invalid_argument("train config: no hidden layers");
  for (const auto w : hidden_widths)
    if (w < 1) throw std::invalid_argument("train config: hidden widths must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (early_stop_window < 1) throw std::invalid_argument("train config: early-stop window must be >= 1");
  if (!(early_stop_tol >= 0.0)) throw std::invalid_argument("train config: early-stop tolerance must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw std::invalid_argument("train config: Adam betas must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw std::invalid_argument("train config: Adam epsilon must be > 0");
  if (output_bound && !(*output_bound > 0.0))
    throw std::invalid_argument("train config: output bound must be > 0");
  if (qr_iterations < 1 || !(qr_learning_rate > 0.0))
    throw std::invalid_argument("train config: invalid linear QR settings");
}

double LinearQuantileFit::predict(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != slope.size())
    throw std::invalid_argument("linear quantile model: input dimension mismatch");
  double v = intercept;
  for (std::size_t j = 0; j < x.size(); ++j) v += slope(static_cast<Eigen::Index>(j)) * x[j];
  return v;
}

QuantileModel::QuantileModel(NetworkParams network, QuantileLevels levels, Scaler scaler,
                             ResponseScale response, std::vector<double> loss_trace)
    : body_(std::move(network)),
      levels_(levels),
      scaler_(std::move(scaler)),
      response_(response),
      loss_trace_(std::move(loss_trace)) {
  const auto& net = std::get<NetworkParams>(body_);
  net.validate();
  if (scaler_.mean.size() != net.input_dim() || scaler_.sd.size() != net.input_dim())
    throw std::invalid_argument("scaler dimension does not match network input");
  if (!(response_.scale > 0.0)) throw std::invalid_argument("response scale must be > 0");
}

QuantileModel::QuantileModel(LinearPair linear, QuantileLevels levels)
    : body_(std::move(linear)), levels_(levels) {
  const auto& pair = std::get<LinearPair>(body_);
  if (pair.lower.slope.size() != pair.upper.slope.size() || pair.lower.slope.size() < 1)
    throw std::invalid_argument("linear quantile pair has inconsistent slopes");
  scaler_ = Scaler::identity(pair.lower.slope.size());
}

Eigen::Index QuantileModel::input_dim() const {
  if (const auto* net = network()) return net->input_dim();
  return linear()->lower.slope.size();
}

Eigen::MatrixXd QuantileModel::predict(const Eigen::MatrixXd& X) const {
  if (X.cols() != input_dim())
    throw std::invalid_argument("predict: input dimension " + std::to_string(X.cols()) +
                                " does not match model input " + std::to_string(input_dim()));
  if (const auto* net = network()) {
    Eigen::MatrixXd out =
        scaler_.is_identity() ? forward_batch(*net, X) : forward_batch(*net, scaler_.transform(X));
    out = (out.array() * response_.scale + response_.shift).matrix();
    return out;
  }
  const auto& pair = *linear();
  Eigen::MatrixXd out(X.rows(), 2);
  out.col(0) = (X * pair.lower.slope).array() + pair.lower.intercept;
  out.col(1) = (X * pair.upper.slope).array() + pair.upper.intercept;
  return out;
}

std::pair<double, double> QuantileModel::predict(std::span<const double> x) const {
  const Eigen::MatrixXd row =
      Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::MatrixXd out = predict(row);
  return {out(0, 0), out(0, 1)};
}

Eigen::MatrixXd ConformalBand::predict(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd out = model.predict(X);
  out.col(0).array() -= q_hat;
  out.col(1).array() += q_hat;
  return out;
}

QuantileModel fit_nccqr(const Dataset& train, const QuantileLevels& levels, const TrainConfig& cfg) {
  train.validate();
  cfg.validate();
  const PenaltyWeight lambda(cfg.resolved_lambda(train.n()));

  const Scaler scaler = cfg.standardize_features ? standardize(train) : Scaler::identity(train.d());
  ResponseScale response;
  if (cfg.standardize_response && train.n() >= 2) {
    response.shift = train.y.mean();
    const double sd = std::sqrt((train.y.array() - response.shift).square().sum() /
                                static_cast<double>(train.n() - 1));
    response.scale = sd > 0.0 ? sd : 1.0;
  }
  const Eigen::MatrixXd inputs =
      (scaler.is_identity() ? train.X : scaler.transform(train.X)).transpose();
  const Eigen::VectorXd y = (train.y.array() - response.shift) / response.scale;
  const Eigen::Index n = y.size();

  NetworkParams params = init_network(train.d(), cfg.hidden_widths, cfg.seed);
  params.output_bound = cfg.output_bound;
  AdamState adam = AdamState::for_params(params, cfg.adam);

  NetworkParams best = params;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  std::vector<double> best_history;
  trace.reserve(static_cast<std::size_t>(cfg.epochs));

  const bool full_batch = n <= cfg.full_batch_max;
  Rng shuffle_rng(derive_seed(cfg.seed, stream::kShuffle));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  ForwardPass pass;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    pass.run(params, inputs);
    ObjectiveEval eval = evaluate_objective(pass.outputs(), y, levels, lambda);
    if (!std::isfinite(eval.value))
      throw TrainingDiverged("training diverged: non-finite objective at epoch " +
                                 std::to_string(epoch),
                             epoch);
    trace.push_back(eval.value * response.scale);
    if (eval.value < best_value) {
      best_value = eval.value;
      best = params;
    }
    best_history.push_back(best_value);
    const auto e = static_cast<std::size_t>(epoch);
    const auto window = static_cast<std::size_t>(cfg.early_stop_window);
    if (e >= window && best_history[e - window] - best_value < cfg.early_stop_tol) break;

    try {
      if (full_batch) {
        adam_step(params, pass.backward(params, eval.sample_grads), adam);
        continue;
      }
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.below(i)]);
      ForwardPass batch_pass;
      for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
        const Eigen::Index len = std::min(cfg.batch_size, n - start);
        Eigen::MatrixXd batch_in(inputs.rows(), len);
        Eigen::VectorXd batch_y(len);
        for (Eigen::Index k = 0; k < len; ++k) {
          const Eigen::Index src = order[static_cast<std::size_t>(start + k)];
          batch_in.col(k) = inputs.col(src);
          batch_y(k) = y(src);
        }
        batch_pass.run(params, batch_in);
        const Eigen::MatrixXd g =
            sample_output_grads(batch_pass.outputs().transpose(), batch_y, levels, lambda)
                .transpose();
        adam_step(params, batch_pass.backward(params, g), adam);
      }
    } catch (const std::domain_error&) {
      throw TrainingDiverged("training diverged: non-finite gradient at epoch " +
                                 std::to_string(epoch),
                             epoch);
    }
  }
  return QuantileModel(std::move(best), levels, scaler, response, std::move(trace));
}

QuantileModel fit_cqr(const Dataset& train, const QuantileLevels& levels, const TrainConfig& cfg) {
  TrainConfig unpenalized = cfg;
  unpenalized.lambda = 0.0;
  return fit_nccqr(train, levels, unpenalized);
}

LinearQuantileFit fit_linear_qr(const Dataset& train, double tau, const TrainConfig& cfg) {
  train.validate();
  cfg.validate();
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("fit_linear_qr: tau must lie in (0, 1)");
  const Eigen::Index n = train.n();
  const Eigen::Index d = train.d();

  // Optimize in standardized coordinates, map back at the end.
  const Eigen::VectorXd mu = train.X.colwise().mean().transpose();
  Eigen::VectorXd sx(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double ss = (train.X.col(j).array() - mu(j)).square().sum();
    const double s = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    sx(j) = s > 0.0 ? s : 1.0;
  }
  const Eigen::MatrixXd Z = (train.X.rowwise() - mu.transpose()).array().rowwise() /
                            sx.transpose().array();
  const double y_shift = train.y.mean();
  const double y_sd = n > 1 ? std::sqrt((train.y.array() - y_shift).square().sum() /
                                        static_cast<double>(n - 1))
                            : 0.0;
  const double y_scale = y_sd > 0.0 ? y_sd : 1.0;
  const Eigen::VectorXd ys = (train.y.array() - y_shift) / y_scale;

  double a = column_quantile(ys, tau);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  double ma = 0.0, va = 0.0;
  Eigen::VectorXd mb = Eigen::VectorXd::Zero(d), vb = Eigen::VectorXd::Zero(d);
  const AdamHyper& h = cfg.adam;

  double best_obj = std::numeric_limits<double>::infinity();
  double best_a = a;
  Eigen::VectorXd best_b = b;
  Eigen::VectorXd resid(n);
  for (int it = 0; it <= cfg.qr_iterations; ++it) {
    resid = ys - Z * b;
    resid.array() -= a;
    double obj = 0.0;
    Eigen::VectorXd w(n);  // d(loss)/d(prediction) per sample
    for (Eigen::Index i = 0; i < n; ++i) {
      obj += check_loss(resid(i), tau);
      w(i) = -check_subgrad(resid(i), tau);
    }
    obj /= static_cast<double>(n);
    if (!std::isfinite(obj))
      throw TrainingDiverged("linear quantile regression diverged at iteration " +
                                 std::to_string(it),
                             it);
    if (obj < best_obj) {
      best_obj = obj;
      best_a = a;
      best_b = b;
    }
    if (it == cfg.qr_iterations) break;

    const double ga = w.mean();
    const Eigen::VectorXd gb = Z.transpose() * w / static_cast<double>(n);
    const double t = it + 1.0;
    const double lr = cfg.qr_learning_rate / std::sqrt(1.0 + t / 100.0);
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    ma = h.beta1 * ma + (1.0 - h.beta1) * ga;
    va = h.beta2 * va + (1.0 - h.beta2) * ga * ga;
    a -= lr * (ma / c1) / (std::sqrt(va / c2) + h.epsilon);
    mb = h.beta1 * mb + (1.0 - h.beta1) * gb;
    vb = h.beta2 * vb + (1.0 - h.beta2) * gb.cwiseAbs2();
    b.array() -= lr * (mb.array() / c1) / ((vb.array() / c2).sqrt() + h.epsilon);
  }

  LinearQuantileFit fit;
  fit.slope = (y_scale * best_b.array() / sx.array()).matrix();
  fit.intercept = y_shift + y_scale * best_a - fit.slope.dot(mu);
  return fit;
}

QuantileModel fit_qr_pair(const Dataset& train, const QuantileLevels& levels, const TrainConfig& cfg) {
  QuantileModel::LinearPair pair{fit_linear_qr(train, levels.tau1(), cfg),
                                 fit_linear_qr(train, levels.tau2(), cfg)};
  return QuantileModel(std::move(pair), levels);
}

Eigen::VectorXd conformity_scores(const QuantileModel& model, const Dataset& calib) {
  if (calib.n() < 1) throw std::invalid_argument("conformity_scores: empty calibration set");
  const Eigen::MatrixXd preds = model.predict(calib.X);
  Eigen::VectorXd scores(calib.n());
  for (Eigen::Index i = 0; i < calib.n(); ++i)
    scores(i) = std::max(preds(i, 0) - calib.y(i), calib.y(i) - preds(i, 1));
  return scores;
}

std::size_t conformal_rank(std::size_t m, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  // The guard absorbs representation error, e.g. 0.9 * 2000 = 1800.0000000000002.
  const double target = (1.0 - alpha) * static_cast<double>(m + 1);
  return static_cast<std::size_t>(std::ceil(target - 1e-9 * std::max(1.0, target)));
}

double empirical_quantile(std::span<const double> scores, double alpha) {
  const std::size_t m = scores.size();
  const std::size_t k = conformal_rank(m, alpha);
  if (k > m || k == 0)
    throw std::invalid_argument("calibration set too small: rank " + std::to_string(k) +
                                " exceeds the " + std::to_string(m) + " conformity scores at alpha " +
                                std::to_string(alpha));
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  return sorted[k - 1];
}

ConformalBand calibrate(QuantileModel model, const Dataset& calib, double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("calibrate: alpha must lie in (0, 0.5)");
  const Eigen::VectorXd scores = conformity_scores(model, calib);
  const double q = empirical_quantile(std::span<const double>(scores.data(), scores.size()), alpha);
  return ConformalBand{std::move(model), q, alpha, static_cast<std::size_t>(calib.n())};
}

Interval predict_interval(const ConformalBand& band, std::span<const double> x) {
  const auto [f1, f2] = band.model.predict(x);
  return Interval{f1 - band.q_hat, f2 + band.q_hat};
}

}  // namespace nccqr

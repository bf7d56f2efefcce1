#include "nccqr/model_selection.hpp"

#include "nccqr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nccqr {

std::vector<double> CvPlan::default_grid(Eigen::Index n) {
  const double l = std::log(static_cast<double>(std::max<Eigen::Index>(n, 2)));
  return {0.0, 0.5 * l, l, 2.0 * l, 4.0 * l};
}

void CvPlan::validate() const {
  if (folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  if (lambda_grid.empty()) throw std::invalid_argument("lambda grid is empty");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] >= 0.0) || !std::isfinite(lambda_grid[i]))
      throw std::invalid_argument("lambda grid entries must be finite and >= 0");
    if (i > 0 && !(lambda_grid[i - 1] < lambda_grid[i]))
      throw std::invalid_argument("lambda grid must be strictly ascending");
  }
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("kfold_partition: need at least 2 folds");
  const auto K = static_cast<std::size_t>(folds);
  if (n < K) throw std::invalid_argument("kfold_partition: fewer rows than folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  std::vector<std::vector<std::size_t>> out(K);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t size = n / K + (k < n % K ? 1 : 0);
    out[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                  perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(out[k].begin(), out[k].end());
    pos += size;
  }
  return out;
}

double alc(const QuantileModel& model, const Dataset& fold) {
  if (fold.n() < 1) throw std::invalid_argument("alc: empty fold");
  const Eigen::MatrixXd f = model.predict(fold.X);
  const double width = (f.col(1) - f.col(0)).cwiseAbs().mean();
  const auto crossings = (f.col(1).array() < f.col(0).array()).count();
  return width + static_cast<double>(crossings);
}

CvResult select_lambda(const Dataset& train, const CvPlan& plan, const QuantileLevels& levels,
                       const TrainConfig& cfg, bool parallel) {
  plan.validate();
  train.validate();
  const auto folds = kfold_partition(static_cast<std::size_t>(train.n()), plan.folds, plan.seed);
  const std::size_t K = folds.size();
  const std::size_t G = plan.lambda_grid.size();

  for (const auto& f : folds)
    if (static_cast<Eigen::Index>(f.size()) == train.n() || f.size() < 1)
      throw std::invalid_argument("fold too small to fit");

  std::vector<double> scores(K * G, 0.0);
  std::vector<std::exception_ptr> errors(K * G);
  const auto jobs = static_cast<long>(K * G);

#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (long job = 0; job < jobs; ++job) {
    const auto j = static_cast<std::size_t>(job);
    const std::size_t k = j / G;
    const std::size_t g = j % G;
    try {
      std::vector<std::size_t> rest;
      for (std::size_t other = 0; other < K; ++other)
        if (other != k) rest.insert(rest.end(), folds[other].begin(), folds[other].end());
      std::sort(rest.begin(), rest.end());
      TrainConfig fold_cfg = cfg;
      fold_cfg.lambda = plan.lambda_grid[g];
      const QuantileModel model = fit_nccqr(train.subset(rest), levels, fold_cfg);
      scores[j] = alc(model, train.subset(folds[k]));
    } catch (...) {
      errors[j] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  CvResult result;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < G; ++g) {
    CvRow row;
    row.lambda = plan.lambda_grid[g];
    for (std::size_t k = 0; k < K; ++k) row.fold_alc.push_back(scores[k * G + g]);
    row.mean_alc = std::accumulate(row.fold_alc.begin(), row.fold_alc.end(), 0.0) /
                   static_cast<double>(K);
    if (row.mean_alc < best) {  // strict: ties keep the smaller lambda
      best = row.mean_alc;
      result.lambda_hat = row.lambda;
    }
    result.table.push_back(std::move(row));
  }
  return result;
}

}  // namespace nccqr

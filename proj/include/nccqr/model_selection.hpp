#pragma once

#include "nccqr/conformal.hpp"
#include "nccqr/datasets.hpp"

#include <cstdint>
#include <vector>

namespace nccqr {

/// K-fold plan over an ascending grid of penalty weights.
struct CvPlan {
  int folds = 5;
  std::vector<double> lambda_grid;
  std::uint64_t seed = 0;

  /// {0, 0.5 ln n, ln n, 2 ln n, 4 ln n}.
  static std::vector<double> default_grid(Eigen::Index n);
  void validate() const;
};

/// Shuffled partition of 0..n-1 into K folds whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int folds, std::uint64_t seed);

/// Average |f2 - f1| over the fold plus the number of points with f2 < f1.
double alc(const QuantileModel& model, const Dataset& fold);

struct CvRow {
  double lambda = 0.0;
  double mean_alc = 0.0;
  std::vector<double> fold_alc;
};

struct CvResult {
  double lambda_hat = 0.0;
  std::vector<CvRow> table;
};

/// Fits one penalized network per (fold, lambda) and returns the lambda with
/// the smallest mean ALC; ties go to the smaller lambda. Fits run in
/// parallel when `parallel` is set, with results independent of scheduling.
CvResult select_lambda(const Dataset& train, const CvPlan& plan, const QuantileLevels& levels,
                       const TrainConfig& cfg, bool parallel = true);

}  // namespace nccqr

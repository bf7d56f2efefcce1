#pragma once

#include "nccqr/conformal.hpp"
#include "nccqr/datasets.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace nccqr {

struct EvalReport {
  double coverage = 0.0;
  double avg_length = 0.0;
  double cr_nn = 0.0;
  double cr_ci = 0.0;
  double q_hat = 0.0;
  std::optional<double> oracle_gap;
  std::size_t n_test = 0;
};

/// Fraction of test responses inside [lo, hi]; crossed intervals cover nothing.
double coverage(const ConformalBand& band, const Dataset& test);

/// Mean of |hi - lo|.
double avg_length(const ConformalBand& band, const Dataset& test);

/// Fraction of test points with f2 < f1.
double crossing_rate_nn(const QuantileModel& model, const Dataset& test);

/// Fraction of test points with hi < lo.
double crossing_rate_ci(const ConformalBand& band, const Dataset& test);

/// ||hi - lo||_2 - ||f_tau2 - f_tau1||_2 with L2 norms taken over the test
/// features (paired Monte Carlo). Levels come from the band's model.
double oracle_gap(const ConformalBand& band, const SyntheticSpec& spec, const Dataset& test);

/// All statistics from a single prediction pass; oracle_gap only when spec is given.
EvalReport evaluate(const ConformalBand& band, const Dataset& test,
                    const SyntheticSpec* spec = nullptr);

enum class Method { NCCQR, CQR, QR };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct CsvSource {
  std::filesystem::path path;
  std::string target;
  std::vector<std::string> drop;
};

/// One split-fit-calibrate-evaluate protocol, repeated over seeds.
/// Synthetic data: n draws split into train/calib by `split`, plus an
/// independent test draw of test_size. CSV data: split three ways by `split`.
struct Experiment {
  std::variant<SyntheticSpec, CsvSource> source;
  Method method = Method::NCCQR;
  double alpha = 0.1;
  /// Defaults to (alpha / 2, 1 - alpha / 2).
  std::optional<QuantileLevels> levels;
  TrainConfig train;
  SplitRatios split{0.5, 0.5, 0.0};
  Eigen::Index test_size = 3000;
  int replications = 1;
  std::uint64_t base_seed = 1;

  QuantileLevels resolved_levels() const;
  void validate() const;
};

/// Train/calibration/test data of a single run.
struct RunData {
  Dataset train;
  Dataset calib;
  Dataset test;
  std::optional<SyntheticSpec> spec;  // with the data seed of this run
};

/// Builds the data of run `seed`. `preloaded` is used for CSV sources when given.
RunData make_run_data(const Experiment& exp, std::uint64_t seed, const Dataset* preloaded = nullptr);

/// Fits the configured method on run data and calibrates it.
ConformalBand fit_band(const Experiment& exp, const RunData& data, std::uint64_t seed);

EvalReport run_once(const Experiment& exp, std::uint64_t seed, const Dataset* preloaded = nullptr);

struct SummaryStat {
  double mean = 0.0;
  double sd = 0.0;
};

struct ReplicationSummary {
  SummaryStat coverage;
  SummaryStat avg_length;
  SummaryStat cr_nn;
  SummaryStat cr_ci;
  SummaryStat q_hat;
  std::optional<SummaryStat> oracle_gap;
  int replications = 0;
  /// False when R = 1; sd fields are then reported as 0.
  bool sd_defined = false;
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> runs;
};

/// Mean and sample sd (n - 1) of per-run statistics.
ReplicationSummary summarize(const std::vector<EvalReport>& runs, std::vector<std::uint64_t> seeds);

/// Runs seeds base_seed .. base_seed + R - 1. With parallel = true, runs are
/// spread over OpenMP threads; results are merged in seed order and do not
/// depend on the schedule.
ReplicationSummary replicate(const Experiment& exp, bool parallel = true);

}  // namespace nccqr

#pragma once

#include "nccqr/evaluation.hpp"
#include "nccqr/model_selection.hpp"
#include "nccqr/serialization.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace nccqr {

/// Thrown for malformed or inconsistent configuration; the message names the key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fully resolved run configuration.
///
/// JSON layout (every key optional unless noted, unknown keys rejected):
///   data:   {source: "synthetic", model, error, n, d, noise_scale}
///         | {source: "csv", path, target, drop: [..]}            (required)
///   method: "nccqr" | "cqr" | "qr"
///   alpha, levels: [tau1, tau2]
///   train:  {lambda, hidden, epochs, learning_rate, beta1, beta2, epsilon,
///            early_stop_tol, early_stop_window, batch_size, full_batch_max,
///            output_bound, standardize_features, standardize_response,
///            qr_iterations, qr_learning_rate}
///   split:  {train, calib, test}
///   test_size, replications, seed, out
///   cv:     {folds, grid}
struct ExperimentConfig {
  Experiment experiment;
  int cv_folds = 5;
  std::optional<std::vector<double>> cv_grid;
  std::filesystem::path out_dir;

  std::uint64_t seed() const { return experiment.base_seed; }
};

/// Default output directory: $NCCQR_OUT_DIR, else "nccqr_out".
std::filesystem::path default_out_dir();

ExperimentConfig parse_config(const json& doc);
json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Command-line overrides applied on top of the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> method;
  std::optional<double> alpha;
};
void apply_overrides(ExperimentConfig& cfg, const Overrides& overrides);

struct SimulateResult {
  std::filesystem::path data_csv;
  std::filesystem::path provenance_json;
  Dataset data;
};
SimulateResult cmd_simulate(const ExperimentConfig& cfg);

struct FitCalibrateResult {
  std::filesystem::path band_json;
  std::filesystem::path trace_csv;
  ConformalBand band;
};
FitCalibrateResult cmd_fit_calibrate(const ExperimentConfig& cfg);

struct EvaluateResult {
  std::filesystem::path report_json;
  std::filesystem::path intervals_csv;
  EvalReport report;
};
/// Evaluates a saved band. Without test_csv, the test draw is rebuilt from the
/// configuration embedded in the band file.
EvaluateResult cmd_evaluate(const std::filesystem::path& band_path,
                            const std::optional<std::filesystem::path>& test_csv,
                            const std::optional<std::string>& target,
                            const std::filesystem::path& out_dir);

struct CvLambdaResult {
  std::filesystem::path table_csv;
  std::filesystem::path result_json;
  CvResult cv;
};
CvLambdaResult cmd_cv_lambda(const ExperimentConfig& cfg);

/// One row of a reproduced table.
struct TableCell {
  std::string setting;  // e.g. "sine/normal", "d=5", "house-sales"
  Experiment experiment;
};

struct TableDataset {
  std::string name;
  CsvSource source;
};

/// Kaggle/UCI file names looked up under data_dir for table S3.
std::vector<TableDataset> default_table_datasets(const std::filesystem::path& data_dir);

/// Replications at scale s: max(2, round(base * s)).
int scaled_replications(int base, double scale);

/// Settings x methods of table "S1", "S2" or "S3".
std::vector<TableCell> table_grid(const std::string& table_id, double scale, std::uint64_t base_seed,
                                  const std::vector<TableDataset>& datasets = {});

struct TableRow {
  TableCell cell;
  ReplicationSummary summary;
};

std::vector<TableRow> run_table(const std::vector<TableCell>& grid, bool parallel = true);

/// Aligned text in the column layout of the table.
void print_table(std::ostream& os, const std::string& table_id, const std::vector<TableRow>& rows);

json table_to_json(const std::string& table_id, double scale, const std::vector<TableRow>& rows);

}  // namespace nccqr

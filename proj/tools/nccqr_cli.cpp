// Command-line front end: simulate, fit-calibrate, evaluate, cv-lambda, reproduce-table.
#include "nccqr/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> method;
  std::optional<double> alpha;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_method) {
  cmd->add_option("--config", f.config, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Override the base seed");
  cmd->add_option("--out", f.out, "Output directory");
  if (with_method) {
    cmd->add_option("--method", f.method, "nccqr, cqr or qr")
        ->check(CLI::IsMember({"nccqr", "cqr", "qr"}));
    cmd->add_option("--alpha", f.alpha, "Miscoverage level in (0, 0.5)");
  }
}

nccqr::ExperimentConfig resolve(const CommonFlags& f) {
  nccqr::ExperimentConfig cfg = nccqr::load_config(f.config);
  nccqr::Overrides o;
  o.seed = f.seed;
  if (f.out) o.out = std::filesystem::path(*f.out);
  o.method = f.method;
  o.alpha = f.alpha;
  nccqr::apply_overrides(cfg, o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-crossing conformalized quantile regression"};
  app.require_subcommand(1);

  CommonFlags sim_flags, fit_flags, cv_flags;
  auto* sim = app.add_subcommand("simulate", "Draw a synthetic dataset");
  add_common(sim, sim_flags, false);

  auto* fit = app.add_subcommand("fit-calibrate", "Train a quantile pair and calibrate the band");
  add_common(fit, fit_flags, true);

  auto* eval = app.add_subcommand("evaluate", "Score a saved band on test data");
  std::string band_path;
  std::optional<std::string> test_csv, target, eval_out;
  eval->add_option("--band", band_path, "band.json written by fit-calibrate")->required();
  eval->add_option("--test", test_csv, "Test CSV; default regenerates the synthetic test draw");
  eval->add_option("--target", target, "Response column of the test CSV");
  eval->add_option("--out", eval_out, "Output directory");

  auto* cv = app.add_subcommand("cv-lambda", "Select the penalty weight by K-fold cross-validation");
  add_common(cv, cv_flags, false);

  auto* table = app.add_subcommand("reproduce-table", "Run a table of the simulation study");
  std::string table_id;
  double scale = 0.2;
  std::uint64_t table_seed = 1;
  std::optional<std::string> table_out;
  std::string data_dir = "data";
  table->add_option("--table", table_id, "S1, S2 or S3")->required();
  table->add_option("--scale", scale, "Fraction of the full replication count")->check(CLI::PositiveNumber);
  table->add_option("--seed", table_seed, "Base seed");
  table->add_option("--out", table_out, "Output directory");
  table->add_option("--data-dir", data_dir, "Directory holding the S3 CSV files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const auto res = nccqr::cmd_simulate(resolve(sim_flags));
      std::cout << "wrote " << res.data_csv.string() << " (" << res.data.n() << " rows)\n";
    } else if (*fit) {
      const auto res = nccqr::cmd_fit_calibrate(resolve(fit_flags));
      std::cout << "wrote " << res.band_json.string() << " q_hat=" << res.band.q_hat << '\n';
    } else if (*eval) {
      std::optional<std::filesystem::path> test;
      if (test_csv) test = *test_csv;
      const std::filesystem::path out = eval_out ? std::filesystem::path(*eval_out)
                                                 : std::filesystem::path(band_path).parent_path();
      const auto res = nccqr::cmd_evaluate(band_path, test, target, out.empty() ? "." : out);
      std::cout << nccqr::report_to_json(res.report).dump(2) << '\n';
    } else if (*cv) {
      const auto res = nccqr::cmd_cv_lambda(resolve(cv_flags));
      std::cout << "selected lambda=" << res.cv.lambda_hat << " (" << res.table_csv.string() << ")\n";
    } else if (*table) {
      const auto grid = nccqr::table_grid(table_id, scale, table_seed, nccqr::default_table_datasets(data_dir));
      const auto rows = nccqr::run_table(grid);
      nccqr::print_table(std::cout, table_id, rows);
      const std::filesystem::path out = table_out ? std::filesystem::path(*table_out) : nccqr::default_out_dir();
      nccqr::write_file_atomic(out / ("table_" + table_id + ".json"),
                               nccqr::table_to_json(table_id, scale, rows).dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "nccqr/experiment.hpp"

#include "nccqr/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <initializer_list>
#include <sstream>

namespace nccqr {

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config key '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

std::string path_of(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

template <typename T>
T get_or(const json& obj, const std::string& where, const std::string& key, T fallback) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  try {
    return obj[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + path_of(where, key) + "' has the wrong type: " + e.what());
  }
}

template <typename T>
T get_required(const json& obj, const std::string& where, const std::string& key) {
  if (!obj.contains(key) || obj[key].is_null())
    throw ConfigError("missing config key '" + path_of(where, key) + "'");
  return get_or<T>(obj, where, key, T{});
}

template <typename Fn>
auto with_key(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string method_label(Method m) {
  switch (m) {
    case Method::NCCQR: return "NC-CQR";
    case Method::CQR: return "CQR";
    case Method::QR: return "QR";
  }
  return "?";
}

std::string fmt(const char* pattern, double a, double b) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

std::string mean_sd(const SummaryStat& s) { return fmt("%.3f(%.3f)", s.mean, s.sd); }
std::string pct_sd(const SummaryStat& s) { return fmt("%.1f%%(%.3f)", 100.0 * s.mean, s.sd); }
std::string pct(const SummaryStat& s) { return fmt("%.1f%%%.0s", 100.0 * s.mean, 0.0); }

json provenance_for(const ExperimentConfig& cfg) {
  const json config = config_to_json(cfg);
  const std::uint64_t seed = cfg.seed();
  return {{"config", config},
          {"config_hash", config_hash(config)},
          {"seed", seed},
          {"seeds",
           {{"data", derive_seed(seed, stream::kData)},
            {"split", derive_seed(seed, stream::kSplit)},
            {"init", derive_seed(seed, stream::kInit)},
            {"test", derive_seed(seed, stream::kTest)},
            {"folds", derive_seed(seed, stream::kFolds)}}}};
}

std::string dataset_csv_text(const Dataset& data, const Eigen::MatrixXd* intervals) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index j = 0; j < data.d(); ++j)
    out << (data.feature_names.empty() ? "x" + std::to_string(j + 1)
                                       : data.feature_names[static_cast<std::size_t>(j)])
        << ',';
  out << 'y';
  if (intervals != nullptr) out << ",lo,hi";
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j) out << data.X(i, j) << ',';
    out << data.y(i);
    if (intervals != nullptr) out << ',' << (*intervals)(i, 0) << ',' << (*intervals)(i, 1);
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("NCCQR_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "nccqr_out";
}

ExperimentConfig parse_config(const json& doc) {
  check_keys(doc, "", {"data", "method", "alpha", "levels", "train", "split", "test_size",
                       "replications", "seed", "out", "cv"});
  ExperimentConfig cfg;
  Experiment& exp = cfg.experiment;

  if (!doc.contains("data")) throw ConfigError("missing config key 'data'");
  const json& data = doc["data"];
  const auto source = get_required<std::string>(data, "data", "source");
  bool csv = false;
  if (source == "synthetic") {
    check_keys(data, "data", {"source", "model", "error", "n", "d", "noise_scale"});
    SyntheticSpec spec;
    spec.model = with_key("data.model", [&] { return parse_model(get_required<std::string>(data, "data", "model")); });
    spec.error = with_key("data.error", [&] { return parse_error_law(get_or<std::string>(data, "data", "error", "normal")); });
    spec.n = get_or<Eigen::Index>(data, "data", "n", 2000);
    spec.d = get_or<Eigen::Index>(data, "data", "d", 1);
    spec.noise_scale = get_or<double>(data, "data", "noise_scale", 1.0);
    with_key("data", [&] { spec.validate(); return 0; });
    exp.source = spec;
  } else if (source == "csv") {
    check_keys(data, "data", {"source", "path", "target", "drop"});
    CsvSource src;
    src.path = get_required<std::string>(data, "data", "path");
    src.target = get_required<std::string>(data, "data", "target");
    src.drop = get_or<std::vector<std::string>>(data, "data", "drop", {});
    exp.source = src;
    csv = true;
  } else {
    throw ConfigError("config key 'data.source' must be 'synthetic' or 'csv', got '" + source + "'");
  }

  exp.method = with_key("method", [&] { return parse_method(get_or<std::string>(doc, "", "method", "nccqr")); });
  exp.alpha = get_or<double>(doc, "", "alpha", 0.1);
  if (doc.contains("levels") && !doc["levels"].is_null()) {
    const auto lv = get_or<std::vector<double>>(doc, "", "levels", {});
    if (lv.size() != 2) throw ConfigError("config key 'levels' must have two entries");
    exp.levels = with_key("levels", [&] { return QuantileLevels(lv[0], lv[1]); });
  }

  TrainConfig& t = exp.train;
  t.standardize_features = csv;
  t.standardize_response = csv;
  if (doc.contains("train")) {
    const json& tr = doc["train"];
    check_keys(tr, "train", {"lambda", "hidden", "epochs", "learning_rate", "beta1", "beta2", "epsilon",
                             "early_stop_tol", "early_stop_window", "batch_size", "full_batch_max",
                             "output_bound", "standardize_features", "standardize_response",
                             "qr_iterations", "qr_learning_rate"});
    if (tr.contains("lambda") && !tr["lambda"].is_null()) t.lambda = get_or<double>(tr, "train", "lambda", 0.0);
    t.hidden_widths = get_or<std::vector<Eigen::Index>>(tr, "train", "hidden", t.hidden_widths);
    t.epochs = get_or<int>(tr, "train", "epochs", t.epochs);
    t.adam.learning_rate = get_or<double>(tr, "train", "learning_rate", t.adam.learning_rate);
    t.adam.beta1 = get_or<double>(tr, "train", "beta1", t.adam.beta1);
    t.adam.beta2 = get_or<double>(tr, "train", "beta2", t.adam.beta2);
    t.adam.epsilon = get_or<double>(tr, "train", "epsilon", t.adam.epsilon);
    t.early_stop_tol = get_or<double>(tr, "train", "early_stop_tol", t.early_stop_tol);
    t.early_stop_window = get_or<int>(tr, "train", "early_stop_window", t.early_stop_window);
    t.batch_size = get_or<Eigen::Index>(tr, "train", "batch_size", t.batch_size);
    t.full_batch_max = get_or<Eigen::Index>(tr, "train", "full_batch_max", t.full_batch_max);
    if (tr.contains("output_bound") && !tr["output_bound"].is_null())
      t.output_bound = get_or<double>(tr, "train", "output_bound", 0.0);
    t.standardize_features = get_or<bool>(tr, "train", "standardize_features", t.standardize_features);
    t.standardize_response = get_or<bool>(tr, "train", "standardize_response", t.standardize_response);
    t.qr_iterations = get_or<int>(tr, "train", "qr_iterations", t.qr_iterations);
    t.qr_learning_rate = get_or<double>(tr, "train", "qr_learning_rate", t.qr_learning_rate);
  }

  exp.split = csv ? SplitRatios{0.3, 0.3, 0.4} : SplitRatios{0.5, 0.5, 0.0};
  if (doc.contains("split")) {
    const json& sp = doc["split"];
    check_keys(sp, "split", {"train", "calib", "test"});
    exp.split.train = get_or<double>(sp, "split", "train", exp.split.train);
    exp.split.calib = get_or<double>(sp, "split", "calib", exp.split.calib);
    exp.split.test = get_or<double>(sp, "split", "test", exp.split.test);
  }
  exp.test_size = get_or<Eigen::Index>(doc, "", "test_size", 3000);
  exp.replications = get_or<int>(doc, "", "replications", 1);
  exp.base_seed = get_or<std::uint64_t>(doc, "", "seed", 1);
  cfg.out_dir = get_or<std::string>(doc, "", "out", default_out_dir().string());

  if (doc.contains("cv")) {
    const json& cv = doc["cv"];
    check_keys(cv, "cv", {"folds", "grid"});
    cfg.cv_folds = get_or<int>(cv, "cv", "folds", 5);
    if (cv.contains("grid") && !cv["grid"].is_null()) cfg.cv_grid = get_or<std::vector<double>>(cv, "cv", "grid", {});
    if (cfg.cv_folds < 2) throw ConfigError("config key 'cv.folds' must be >= 2");
    if (cfg.cv_grid) with_key("cv.grid", [&] { CvPlan{cfg.cv_folds, *cfg.cv_grid, 0}.validate(); return 0; });
  }

  with_key("config", [&] { exp.validate(); return 0; });
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  const Experiment& exp = cfg.experiment;
  json doc;
  if (const auto* spec = std::get_if<SyntheticSpec>(&exp.source)) {
    doc["data"] = {{"source", "synthetic"},
                   {"model", std::string(to_string(spec->model))},
                   {"error", std::string(to_string(spec->error))},
                   {"n", spec->n},
                   {"d", spec->d},
                   {"noise_scale", spec->noise_scale}};
  } else {
    const auto& src = std::get<CsvSource>(exp.source);
    doc["data"] = {{"source", "csv"}, {"path", src.path.string()}, {"target", src.target}, {"drop", src.drop}};
  }
  doc["method"] = std::string(to_string(exp.method));
  doc["alpha"] = exp.alpha;
  doc["levels"] = exp.levels ? json{exp.levels->tau1(), exp.levels->tau2()} : json(nullptr);
  const TrainConfig& t = exp.train;
  doc["train"] = {{"lambda", t.lambda ? json(*t.lambda) : json(nullptr)},
                  {"hidden", t.hidden_widths},
                  {"epochs", t.epochs},
                  {"learning_rate", t.adam.learning_rate},
                  {"beta1", t.adam.beta1},
                  {"beta2", t.adam.beta2},
                  {"epsilon", t.adam.epsilon},
                  {"early_stop_tol", t.early_stop_tol},
                  {"early_stop_window", t.early_stop_window},
                  {"batch_size", t.batch_size},
                  {"full_batch_max", t.full_batch_max},
                  {"output_bound", t.output_bound ? json(*t.output_bound) : json(nullptr)},
                  {"standardize_features", t.standardize_features},
                  {"standardize_response", t.standardize_response},
                  {"qr_iterations", t.qr_iterations},
                  {"qr_learning_rate", t.qr_learning_rate}};
  doc["split"] = {{"train", exp.split.train}, {"calib", exp.split.calib}, {"test", exp.split.test}};
  doc["test_size"] = exp.test_size;
  doc["replications"] = exp.replications;
  doc["seed"] = exp.base_seed;
  doc["out"] = cfg.out_dir.string();
  doc["cv"] = {{"folds", cfg.cv_folds}, {"grid", cfg.cv_grid ? json(*cfg.cv_grid) : json(nullptr)}};
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = read_json_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(doc);
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.experiment.base_seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.method) cfg.experiment.method = with_key("--method", [&] { return parse_method(*o.method); });
  if (o.alpha) cfg.experiment.alpha = *o.alpha;
  with_key("config", [&] { cfg.experiment.validate(); return 0; });
}

SimulateResult cmd_simulate(const ExperimentConfig& cfg) {
  const auto* base = std::get_if<SyntheticSpec>(&cfg.experiment.source);
  if (base == nullptr) throw ConfigError("config key 'data.source': simulate needs a synthetic source");
  SyntheticSpec spec = *base;
  spec.seed = derive_seed(cfg.seed(), stream::kData);
  SimulateResult res{cfg.out_dir / "data.csv", cfg.out_dir / "data.provenance.json", generate(spec)};

  json prov = provenance_for(cfg);
  prov["n"] = res.data.n();
  prov["d"] = res.data.d();
  write_file_atomic(res.data_csv, dataset_csv_text(res.data, nullptr));
  write_file_atomic(res.provenance_json, prov.dump(2) + "\n");
  return res;
}

FitCalibrateResult cmd_fit_calibrate(const ExperimentConfig& cfg) {
  const Experiment& exp = cfg.experiment;
  const RunData data = make_run_data(exp, cfg.seed());
  ConformalBand band = fit_band(exp, data, cfg.seed());

  json prov = provenance_for(cfg);
  prov["split_sizes"] = {{"train", data.train.n()}, {"calib", data.calib.n()}, {"test", data.test.n()}};
  if (exp.method != Method::QR)
    prov["lambda"] = exp.method == Method::CQR ? 0.0 : exp.train.resolved_lambda(data.train.n());
  prov["epochs_run"] = band.model.loss_trace().size();

  std::ostringstream trace;
  trace.precision(17);
  trace << "epoch,objective\n";
  const auto& t = band.model.loss_trace();
  for (std::size_t i = 0; i < t.size(); ++i) trace << i << ',' << t[i] << '\n';

  FitCalibrateResult res{cfg.out_dir / "band.json", cfg.out_dir / "loss_trace.csv", std::move(band)};
  write_file_atomic(res.trace_csv, trace.str());
  write_file_atomic(res.band_json, band_to_json(res.band, prov).dump(2) + "\n");
  return res;
}

EvaluateResult cmd_evaluate(const std::filesystem::path& band_path,
                            const std::optional<std::filesystem::path>& test_csv,
                            const std::optional<std::string>& target,
                            const std::filesystem::path& out_dir) {
  const json doc = read_json_file(band_path);
  const ConformalBand band = band_from_json(doc);
  const json prov = doc.value("provenance", json::object());

  Dataset test;
  std::optional<SyntheticSpec> spec;
  json source;
  if (test_csv) {
    std::string column = target.value_or("y");
    if (!target && prov.contains("config") && prov["config"]["data"].value("source", "") == "csv")
      column = prov["config"]["data"]["target"].get<std::string>();
    std::vector<std::string> drop;
    if (prov.contains("config") && prov["config"]["data"].value("source", "") == "csv")
      drop = prov["config"]["data"].value("drop", std::vector<std::string>{});
    test = load_csv(*test_csv, column, drop);
    source = {{"csv", test_csv->string()}, {"target", column}};
  } else {
    if (!prov.contains("config"))
      throw ConfigError("band file has no embedded config; pass a test CSV");
    const ExperimentConfig cfg = parse_config(prov["config"]);
    const std::uint64_t seed = prov.at("seed").get<std::uint64_t>();
    RunData data = make_run_data(cfg.experiment, seed);
    test = std::move(data.test);
    spec = data.spec;
    source = {{"regenerated", true}, {"seed", seed}};
  }

  EvaluateResult res{out_dir / "report.json", out_dir / "intervals.csv",
                     evaluate(band, test, spec ? &*spec : nullptr)};
  json out;
  out["report"] = report_to_json(res.report);
  out["band_file"] = band_path.string();
  out["test_source"] = source;
  if (prov.contains("config")) out["config"] = prov["config"];
  if (prov.contains("seeds")) out["seeds"] = prov["seeds"];
  const Eigen::MatrixXd intervals = band.predict(test.X);
  write_file_atomic(res.intervals_csv, dataset_csv_text(test, &intervals));
  write_file_atomic(res.report_json, out.dump(2) + "\n");
  return res;
}

CvLambdaResult cmd_cv_lambda(const ExperimentConfig& cfg) {
  const Experiment& exp = cfg.experiment;
  const RunData data = make_run_data(exp, cfg.seed());
  CvPlan plan;
  plan.folds = cfg.cv_folds;
  plan.lambda_grid = cfg.cv_grid ? *cfg.cv_grid : CvPlan::default_grid(data.train.n());
  plan.seed = derive_seed(cfg.seed(), stream::kFolds);
  TrainConfig train = exp.train;
  train.seed = derive_seed(cfg.seed(), stream::kInit);

  CvLambdaResult res{cfg.out_dir / "cv_lambda.csv", cfg.out_dir / "cv_lambda.json",
                     select_lambda(data.train, plan, exp.resolved_levels(), train)};

  std::ostringstream csv;
  csv.precision(17);
  csv << "lambda,mean_alc";
  for (int k = 0; k < plan.folds; ++k) csv << ",fold_" << (k + 1);
  csv << '\n';
  for (const auto& row : res.cv.table) {
    csv << row.lambda << ',' << row.mean_alc;
    for (const double a : row.fold_alc) csv << ',' << a;
    csv << '\n';
  }
  json out = cv_to_json(res.cv);
  out["provenance"] = provenance_for(cfg);
  write_file_atomic(res.table_csv, csv.str());
  write_file_atomic(res.result_json, out.dump(2) + "\n");
  return res;
}

std::vector<TableDataset> default_table_datasets(const std::filesystem::path& data_dir) {
  return {
      {"house-sales", {data_dir / "kc_house_data.csv", "price", {"id", "date", "zipcode"}}},
      {"bike-sharing", {data_dir / "bike_sharing.csv", "count", {"datetime", "casual", "registered"}}},
      {"airfoil", {data_dir / "airfoil.csv", "sound_pressure", {}}},
  };
}

int scaled_replications(int base, double scale) {
  if (!(scale > 0.0)) throw ConfigError("--scale must be > 0");
  return std::max(2, static_cast<int>(std::lround(base * scale)));
}

std::vector<TableCell> table_grid(const std::string& table_id, double scale, std::uint64_t base_seed,
                                  const std::vector<TableDataset>& datasets) {
  std::vector<TableCell> grid;
  if (table_id == "S1") {
    const int R = scaled_replications(50, scale);
    for (const auto error : {ErrorLaw::Normal, ErrorLaw::Exp, ErrorLaw::Sin}) {
      for (const auto model : {SyntheticModel::Sine, SyntheticModel::TwoPhase, SyntheticModel::Triangle,
                               SyntheticModel::Discontinuous}) {
        for (const auto method : {Method::NCCQR, Method::QR}) {
          Experiment exp;
          exp.source = SyntheticSpec{model, error, 2000, 1, 0, 1.0};
          exp.method = method;
          exp.alpha = 0.1;
          exp.replications = R;
          exp.base_seed = base_seed;
          grid.push_back({std::string(to_string(model)) + "/" + std::string(to_string(error)), exp});
        }
      }
    }
  } else if (table_id == "S2") {
    const int R = scaled_replications(10, scale);
    for (const Eigen::Index d : {5, 10, 15, 20, 25}) {
      for (const auto method : {Method::CQR, Method::NCCQR}) {
        Experiment exp;
        exp.source = SyntheticSpec{SyntheticModel::SingleIndex, ErrorLaw::Sin, 2000, d, 0, 1.0};
        exp.method = method;
        exp.alpha = 0.2;
        exp.replications = R;
        exp.base_seed = base_seed;
        grid.push_back({"d=" + std::to_string(d), exp});
      }
    }
  } else if (table_id == "S3") {
    if (datasets.empty()) throw ConfigError("table S3 needs real datasets (see --data-dir)");
    const int R = scaled_replications(10, scale);
    for (const auto& ds : datasets) {
      if (!std::filesystem::exists(ds.source.path))
        throw ConfigError("table S3: dataset '" + ds.name + "' not found at '" + ds.source.path.string() + "'");
      for (const auto method : {Method::NCCQR, Method::CQR, Method::QR}) {
        Experiment exp;
        exp.source = ds.source;
        exp.method = method;
        exp.alpha = 0.2;
        exp.split = {0.3, 0.3, 0.4};
        exp.train.standardize_features = true;
        exp.train.standardize_response = true;
        exp.replications = R;
        exp.base_seed = base_seed;
        grid.push_back({ds.name, exp});
      }
    }
  } else {
    throw ConfigError("unknown table id '" + table_id + "' (expected S1, S2 or S3)");
  }
  return grid;
}

std::vector<TableRow> run_table(const std::vector<TableCell>& grid, bool parallel) {
  std::vector<TableRow> rows;
  rows.reserve(grid.size());
  for (const auto& cell : grid) rows.push_back({cell, replicate(cell.experiment, parallel)});
  return rows;
}

void print_table(std::ostream& os, const std::string& table_id, const std::vector<TableRow>& rows) {
  const auto col = [&os](const std::string& s, int w) { os << std::left << std::setw(w) << s; };
  if (table_id == "S1") {
    col("Setting", 26); col("Method", 8); col("Length", 16); col("Coverage", 16); col("Q", 16);
    os << '\n';
    for (const auto& r : rows) {
      col(r.cell.setting, 26);
      col(method_label(r.cell.experiment.method), 8);
      col(mean_sd(r.summary.avg_length), 16);
      col(pct_sd(r.summary.coverage), 16);
      col(mean_sd(r.summary.q_hat), 16);
      os << '\n';
    }
  } else {
    col(table_id == "S2" ? "d" : "Dataset", 16); col("Method", 8); col("CR-NN", 9); col("CR-CI", 9);
    col("Coverage", 10); col("Length", 10); col("Q", 10);
    os << '\n';
    for (const auto& r : rows) {
      col(r.cell.setting, 16);
      col(method_label(r.cell.experiment.method), 8);
      col(pct(r.summary.cr_nn), 9);
      col(pct(r.summary.cr_ci), 9);
      col(pct(r.summary.coverage), 10);
      col(fmt("%.3f%.0s", r.summary.avg_length.mean, 0.0), 10);
      col(fmt("%.3f%.0s", r.summary.q_hat.mean, 0.0), 10);
      os << '\n';
    }
  }
  if (!rows.empty()) os << "(replications per row: " << rows.front().summary.replications << ")\n";
}

json table_to_json(const std::string& table_id, double scale, const std::vector<TableRow>& rows) {
  json doc;
  doc["table"] = table_id;
  doc["scale"] = scale;
  doc["rows"] = json::array();
  for (const auto& r : rows) {
    ExperimentConfig cfg;
    cfg.experiment = r.cell.experiment;
    json cfg_json = config_to_json(cfg);
    cfg_json.erase("out");
    doc["rows"].push_back({{"setting", r.cell.setting},
                           {"method", method_label(r.cell.experiment.method)},
                           {"config", cfg_json},
                           {"summary", summary_to_json(r.summary)}});
  }
  return doc;
}

}  // namespace nccqr

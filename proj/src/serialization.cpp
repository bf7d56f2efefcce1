#include "nccqr/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nccqr {

namespace {

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_array(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd vector_from(const json& arr) {
  const auto values = arr.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::MatrixXd matrix_from(const json& rows, Eigen::Index expect_rows, Eigen::Index expect_cols) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != expect_rows)
    throw std::invalid_argument("weight matrix has the wrong number of rows");
  Eigen::MatrixXd m(expect_rows, expect_cols);
  for (Eigen::Index r = 0; r < expect_rows; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != expect_cols)
      throw std::invalid_argument("weight matrix has the wrong number of columns");
    for (Eigen::Index c = 0; c < expect_cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json linear_to_json(const LinearQuantileFit& fit) {
  return {{"intercept", fit.intercept}, {"slope", vector_array(fit.slope)}};
}

LinearQuantileFit linear_from_json(const json& doc) {
  return LinearQuantileFit{doc.at("intercept").get<double>(), vector_from(doc.at("slope"))};
}

json stat_to_json(const SummaryStat& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }

}  // namespace

json network_to_json(const NetworkParams& params, const json& metadata) {
  json doc;
  doc["format"] = "nccqr.network";
  doc["version"] = kNetworkFormatVersion;
  doc["widths"] = params.widths;
  doc["weights"] = json::array();
  doc["biases"] = json::array();
  for (std::size_t i = 0; i < params.layer_count(); ++i) {
    doc["weights"].push_back(matrix_rows(params.weights[i]));
    doc["biases"].push_back(vector_array(params.biases[i]));
  }
  doc["output_bound"] = params.output_bound ? json(*params.output_bound) : json(nullptr);
  doc["metadata"] = metadata;
  return doc;
}

NetworkParams network_from_json(const json& doc) {
  if (doc.value("format", std::string{}) != "nccqr.network")
    throw std::invalid_argument("not a network document");
  if (doc.at("version").get<int>() != kNetworkFormatVersion)
    throw std::invalid_argument("unsupported network document version");
  NetworkParams p;
  p.widths = doc.at("widths").get<std::vector<Eigen::Index>>();
  if (p.widths.size() < 2) throw std::invalid_argument("network document has too few widths");
  const auto& weights = doc.at("weights");
  const auto& biases = doc.at("biases");
  if (weights.size() != p.widths.size() - 1 || biases.size() != p.widths.size() - 1)
    throw std::invalid_argument("network document layer count mismatch");
  for (std::size_t i = 0; i + 1 < p.widths.size(); ++i) {
    p.weights.push_back(matrix_from(weights[i], p.widths[i + 1], p.widths[i]));
    p.biases.push_back(vector_from(biases[i]));
  }
  if (doc.contains("output_bound") && !doc["output_bound"].is_null())
    p.output_bound = doc["output_bound"].get<double>();
  p.validate();
  return p;
}

json model_to_json(const QuantileModel& model) {
  json doc;
  doc["levels"] = {model.levels().tau1(), model.levels().tau2()};
  if (const auto* net = model.network()) {
    doc["kind"] = "neural";
    doc["network"] = network_to_json(*net);
    doc["scaler"] = {{"mean", vector_array(model.scaler().mean)},
                     {"sd", vector_array(model.scaler().sd)}};
    doc["response"] = {{"shift", model.response_scale().shift},
                       {"scale", model.response_scale().scale}};
  } else {
    doc["kind"] = "linear";
    doc["lower"] = linear_to_json(model.linear()->lower);
    doc["upper"] = linear_to_json(model.linear()->upper);
  }
  return doc;
}

QuantileModel model_from_json(const json& doc) {
  const auto levels_arr = doc.at("levels").get<std::vector<double>>();
  if (levels_arr.size() != 2) throw std::invalid_argument("model levels must have 2 entries");
  const QuantileLevels levels(levels_arr[0], levels_arr[1]);
  const auto kind = doc.at("kind").get<std::string>();
  if (kind == "linear")
    return QuantileModel(
        QuantileModel::LinearPair{linear_from_json(doc.at("lower")), linear_from_json(doc.at("upper"))},
        levels);
  if (kind != "neural") throw std::invalid_argument("unknown model kind '" + kind + "'");
  Scaler scaler{vector_from(doc.at("scaler").at("mean")), vector_from(doc.at("scaler").at("sd"))};
  ResponseScale response{doc.at("response").at("shift").get<double>(),
                         doc.at("response").at("scale").get<double>()};
  return QuantileModel(network_from_json(doc.at("network")), levels, std::move(scaler), response);
}

json band_to_json(const ConformalBand& band, const json& provenance) {
  json doc;
  doc["format"] = "nccqr.band";
  doc["version"] = kBandFormatVersion;
  doc["q_hat"] = band.q_hat;
  doc["alpha"] = band.alpha;
  doc["calib_size"] = band.calib_size;
  doc["model"] = model_to_json(band.model);
  doc["provenance"] = provenance;
  return doc;
}

ConformalBand band_from_json(const json& doc) {
  if (doc.value("format", std::string{}) != "nccqr.band")
    throw std::invalid_argument("not a band document");
  if (doc.at("version").get<int>() != kBandFormatVersion)
    throw std::invalid_argument("unsupported band document version");
  const double alpha = doc.at("alpha").get<double>();
  if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("band alpha must lie in (0, 0.5)");
  return ConformalBand{model_from_json(doc.at("model")), doc.at("q_hat").get<double>(), alpha,
                       doc.at("calib_size").get<std::size_t>()};
}

json report_to_json(const EvalReport& r) {
  return {{"coverage", r.coverage},
          {"avg_length", r.avg_length},
          {"cr_nn", r.cr_nn},
          {"cr_ci", r.cr_ci},
          {"q_hat", r.q_hat},
          {"oracle_gap", r.oracle_gap ? json(*r.oracle_gap) : json(nullptr)},
          {"n_test", r.n_test}};
}

json summary_to_json(const ReplicationSummary& s) {
  json doc;
  doc["replications"] = s.replications;
  doc["sd_defined"] = s.sd_defined;
  doc["seeds"] = s.seeds;
  doc["coverage"] = stat_to_json(s.coverage);
  doc["avg_length"] = stat_to_json(s.avg_length);
  doc["cr_nn"] = stat_to_json(s.cr_nn);
  doc["cr_ci"] = stat_to_json(s.cr_ci);
  doc["q_hat"] = stat_to_json(s.q_hat);
  doc["oracle_gap"] = s.oracle_gap ? stat_to_json(*s.oracle_gap) : json(nullptr);
  doc["runs"] = json::array();
  for (const auto& r : s.runs) doc["runs"].push_back(report_to_json(r));
  return doc;
}

json dataset_to_json(const Dataset& data) {
  json doc;
  doc["n"] = data.n();
  doc["d"] = data.d();
  doc["feature_names"] = data.feature_names;
  doc["X"] = matrix_rows(data.X);
  doc["y"] = vector_array(data.y);
  return doc;
}

json cv_to_json(const CvResult& result) {
  json doc;
  doc["lambda_hat"] = result.lambda_hat;
  doc["table"] = json::array();
  for (const auto& row : result.table)
    doc["table"].push_back({{"lambda", row.lambda}, {"mean_alc", row.mean_alc}, {"fold_alc", row.fold_alc}});
  return doc;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.close();
    if (!out) throw std::runtime_error("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

}  // namespace nccqr

#include "nccqr/evaluation.hpp"

#include "nccqr/rng.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

namespace nccqr {

namespace {

void require_test(const Dataset& test) {
  if (test.n() < 1) throw std::invalid_argument("evaluation needs a nonempty test set");
}

bool covers(double lo, double hi, double y) { return lo <= y && y <= hi; }

SummaryStat stat_of(const std::vector<double>& v) {
  SummaryStat s;
  const double n = static_cast<double>(v.size());
  for (const double x : v) s.mean += x;
  s.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (const double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

}  // namespace

double coverage(const ConformalBand& band, const Dataset& test) {
  require_test(test);
  const Eigen::MatrixXd iv = band.predict(test.X);
  std::size_t hits = 0;
  for (Eigen::Index t = 0; t < test.n(); ++t) hits += covers(iv(t, 0), iv(t, 1), test.y(t)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(test.n());
}

double avg_length(const ConformalBand& band, const Dataset& test) {
  require_test(test);
  const Eigen::MatrixXd iv = band.predict(test.X);
  return (iv.col(1) - iv.col(0)).cwiseAbs().mean();
}

double crossing_rate_nn(const QuantileModel& model, const Dataset& test) {
  require_test(test);
  const Eigen::MatrixXd f = model.predict(test.X);
  return static_cast<double>((f.col(1).array() < f.col(0).array()).count()) /
         static_cast<double>(test.n());
}

double crossing_rate_ci(const ConformalBand& band, const Dataset& test) {
  require_test(test);
  const Eigen::MatrixXd iv = band.predict(test.X);
  return static_cast<double>((iv.col(1).array() < iv.col(0).array()).count()) /
         static_cast<double>(test.n());
}

double oracle_gap(const ConformalBand& band, const SyntheticSpec& spec, const Dataset& test) {
  require_test(test);
  const Eigen::MatrixXd iv = band.predict(test.X);
  const auto& levels = band.model.levels();
  double band_sq = 0.0;
  double oracle_sq = 0.0;
  std::vector<double> x(static_cast<std::size_t>(test.d()));
  for (Eigen::Index t = 0; t < test.n(); ++t) {
    for (Eigen::Index j = 0; j < test.d(); ++j) x[static_cast<std::size_t>(j)] = test.X(t, j);
    const double width = iv(t, 1) - iv(t, 0);
    const double oracle_width =
        oracle_quantile(spec, x, levels.tau2()) - oracle_quantile(spec, x, levels.tau1());
    band_sq += width * width;
    oracle_sq += oracle_width * oracle_width;
  }
  const double n = static_cast<double>(test.n());
  return std::sqrt(band_sq / n) - std::sqrt(oracle_sq / n);
}

EvalReport evaluate(const ConformalBand& band, const Dataset& test, const SyntheticSpec* spec) {
  require_test(test);
  const Eigen::MatrixXd f = band.model.predict(test.X);
  EvalReport r;
  r.n_test = static_cast<std::size_t>(test.n());
  r.q_hat = band.q_hat;
  std::size_t hits = 0, nn_cross = 0, ci_cross = 0;
  double length = 0.0;
  for (Eigen::Index t = 0; t < test.n(); ++t) {
    const double lo = f(t, 0) - band.q_hat;
    const double hi = f(t, 1) + band.q_hat;
    hits += covers(lo, hi, test.y(t)) ? 1 : 0;
    nn_cross += f(t, 1) < f(t, 0) ? 1 : 0;
    ci_cross += hi < lo ? 1 : 0;
    length += std::abs(hi - lo);
  }
  const double n = static_cast<double>(test.n());
  r.coverage = static_cast<double>(hits) / n;
  r.avg_length = length / n;
  r.cr_nn = static_cast<double>(nn_cross) / n;
  r.cr_ci = static_cast<double>(ci_cross) / n;
  if (spec != nullptr) r.oracle_gap = oracle_gap(band, *spec, test);
  return r;
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::NCCQR: return "nccqr";
    case Method::CQR: return "cqr";
    case Method::QR: return "qr";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "nccqr" || name == "NC-CQR") return Method::NCCQR;
  if (name == "cqr" || name == "CQR") return Method::CQR;
  if (name == "qr" || name == "QR") return Method::QR;
  throw std::invalid_argument("unknown method '" + std::string(name) + "' (expected nccqr, cqr or qr)");
}

QuantileLevels Experiment::resolved_levels() const {
  return levels ? *levels : QuantileLevels::for_miscoverage(alpha);
}

void Experiment::validate() const {
  if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("alpha must lie in (0, 0.5)");
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  train.validate();
  if (const auto* spec = std::get_if<SyntheticSpec>(&source)) {
    spec->validate();
    if (test_size < 1) throw std::invalid_argument("test size must be >= 1");
  } else if (!(split.test > 0.0)) {
    throw std::invalid_argument("CSV experiments need a positive test split ratio");
  }
  if (!(split.train > 0.0) || !(split.calib > 0.0) || split.test < 0.0 ||
      split.train + split.calib + split.test > 1.0 + 1e-12)
    throw std::invalid_argument("invalid split ratios");
}

RunData make_run_data(const Experiment& exp, std::uint64_t seed, const Dataset* preloaded) {
  RunData out;
  if (const auto* base = std::get_if<SyntheticSpec>(&exp.source)) {
    SyntheticSpec spec = *base;
    spec.seed = derive_seed(seed, stream::kData);
    const Dataset all = generate(spec);
    const SplitIndices parts = split(static_cast<std::size_t>(all.n()),
                                     SplitRatios{exp.split.train, exp.split.calib, 0.0},
                                     derive_seed(seed, stream::kSplit));
    out.train = all.subset(parts.train);
    out.calib = all.subset(parts.calib);
    SyntheticSpec test_spec = spec;
    test_spec.n = exp.test_size;
    test_spec.seed = derive_seed(seed, stream::kTest);
    out.test = generate(test_spec);
    out.spec = spec;
    return out;
  }
  const auto& csv = std::get<CsvSource>(exp.source);
  Dataset loaded;
  if (preloaded == nullptr) loaded = load_csv(csv.path, csv.target, csv.drop);
  const Dataset& all = preloaded != nullptr ? *preloaded : loaded;
  const SplitIndices parts =
      split(static_cast<std::size_t>(all.n()), exp.split, derive_seed(seed, stream::kSplit));
  out.train = all.subset(parts.train);
  out.calib = all.subset(parts.calib);
  out.test = all.subset(parts.test);
  return out;
}

ConformalBand fit_band(const Experiment& exp, const RunData& data, std::uint64_t seed) {
  const QuantileLevels levels = exp.resolved_levels();
  TrainConfig cfg = exp.train;
  cfg.seed = derive_seed(seed, stream::kInit);
  switch (exp.method) {
    case Method::NCCQR: return calibrate(fit_nccqr(data.train, levels, cfg), data.calib, exp.alpha);
    case Method::CQR: return calibrate(fit_cqr(data.train, levels, cfg), data.calib, exp.alpha);
    case Method::QR: return calibrate(fit_qr_pair(data.train, levels, cfg), data.calib, exp.alpha);
  }
  throw std::logic_error("unhandled method");
}

EvalReport run_once(const Experiment& exp, std::uint64_t seed, const Dataset* preloaded) {
  const RunData data = make_run_data(exp, seed, preloaded);
  const ConformalBand band = fit_band(exp, data, seed);
  return evaluate(band, data.test, data.spec ? &*data.spec : nullptr);
}

ReplicationSummary summarize(const std::vector<EvalReport>& runs, std::vector<std::uint64_t> seeds) {
  if (runs.empty()) throw std::invalid_argument("summarize: no runs");
  std::vector<double> cov, len, crnn, crci, q, gap;
  for (const auto& r : runs) {
    cov.push_back(r.coverage);
    len.push_back(r.avg_length);
    crnn.push_back(r.cr_nn);
    crci.push_back(r.cr_ci);
    q.push_back(r.q_hat);
    if (r.oracle_gap) gap.push_back(*r.oracle_gap);
  }
  ReplicationSummary s;
  s.coverage = stat_of(cov);
  s.avg_length = stat_of(len);
  s.cr_nn = stat_of(crnn);
  s.cr_ci = stat_of(crci);
  s.q_hat = stat_of(q);
  if (gap.size() == runs.size()) s.oracle_gap = stat_of(gap);
  s.replications = static_cast<int>(runs.size());
  s.sd_defined = runs.size() > 1;
  s.seeds = std::move(seeds);
  s.runs = runs;
  return s;
}

ReplicationSummary replicate(const Experiment& exp, bool parallel) {
  exp.validate();
  const int R = exp.replications;
  Dataset preloaded;
  const Dataset* shared = nullptr;
  if (const auto* csv = std::get_if<CsvSource>(&exp.source)) {
    preloaded = load_csv(csv->path, csv->target, csv->drop);
    shared = &preloaded;
  }

  std::vector<EvalReport> runs(static_cast<std::size_t>(R));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(R));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(R));
  for (int r = 0; r < R; ++r) seeds[static_cast<std::size_t>(r)] = exp.base_seed + static_cast<std::uint64_t>(r);

#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (int r = 0; r < R; ++r) {
    const auto i = static_cast<std::size_t>(r);
    try {
      runs[i] = run_once(exp, seeds[i], shared);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("replication with seed " + std::to_string(seeds[i]) +
                               " failed: " + e.what());
    }
  }
  return summarize(runs, std::move(seeds));
}

}  // namespace nccqr

#include "nccqr/datasets.hpp"

#include "nccqr/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nccqr {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSingleIndexVarianceFloor = 1e-6;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

// Upper tail of the equal mixture of N(-m, sd^2) and N(m, sd^2).
double mixture_sf(double q, double m, double sd) {
  const auto sf = [](double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); };
  return 0.5 * sf((q - m) / sd) + 0.5 * sf((q + m) / sd);
}

}  // namespace

void Dataset::validate() const {
  if (y.size() < 1) throw std::invalid_argument("dataset is empty");
  if (X.rows() != y.size())
    throw std::invalid_argument("feature rows (" + std::to_string(X.rows()) +
                                ") do not match responses (" + std::to_string(y.size()) + ")");
  if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != X.cols())
    throw std::invalid_argument("feature name count does not match columns");
  if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("dataset has non-finite values");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    if (r >= n()) throw std::out_of_range("subset row index out of range");
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(r);
    out.y(static_cast<Eigen::Index>(i)) = y(r);
  }
  out.feature_names = feature_names;
  return out;
}

std::string_view to_string(SyntheticModel model) {
  switch (model) {
    case SyntheticModel::Sine: return "sine";
    case SyntheticModel::TwoPhase: return "two-phase";
    case SyntheticModel::Triangle: return "triangle";
    case SyntheticModel::Discontinuous: return "discontinuous";
    case SyntheticModel::DoubleSine: return "double-sine";
    case SyntheticModel::SingleIndex: return "single-index";
  }
  return "unknown";
}

std::string_view to_string(ErrorLaw law) {
  switch (law) {
    case ErrorLaw::Normal: return "normal";
    case ErrorLaw::Exp: return "exp";
    case ErrorLaw::Sin: return "sin";
  }
  return "unknown";
}

SyntheticModel parse_model(std::string_view name) {
  if (name == "sine" || name == "1") return SyntheticModel::Sine;
  if (name == "two-phase" || name == "2-phase" || name == "2") return SyntheticModel::TwoPhase;
  if (name == "triangle" || name == "3") return SyntheticModel::Triangle;
  if (name == "discontinuous" || name == "4") return SyntheticModel::Discontinuous;
  if (name == "double-sine" || name == "5") return SyntheticModel::DoubleSine;
  if (name == "single-index" || name == "6") return SyntheticModel::SingleIndex;
  throw std::invalid_argument("unknown synthetic model '" + std::string(name) + "'");
}

ErrorLaw parse_error_law(std::string_view name) {
  if (name == "normal") return ErrorLaw::Normal;
  if (name == "exp") return ErrorLaw::Exp;
  if (name == "sin") return ErrorLaw::Sin;
  throw std::invalid_argument("unknown error law '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
  if (n < 1) throw std::invalid_argument("synthetic n must be >= 1");
  if (model == SyntheticModel::SingleIndex) {
    if (d < 1 || d > static_cast<Eigen::Index>(kSingleIndexTheta.size()))
      throw std::invalid_argument("single-index model needs 1 <= d <= 25");
  } else if (d != 1) {
    throw std::invalid_argument("model '" + std::string(to_string(model)) + "' is univariate (d = 1)");
  }
  if ((model == SyntheticModel::DoubleSine || model == SyntheticModel::SingleIndex) &&
      error != ErrorLaw::Sin)
    throw std::invalid_argument("model '" + std::string(to_string(model)) +
                                "' only supports the sin error law");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
    throw std::invalid_argument("noise scale must be finite and >= 0");
}

double regression_function(const SyntheticSpec& spec, std::span<const double> x, bool upper_branch) {
  const double x1 = x[0];
  switch (spec.model) {
    case SyntheticModel::Sine: return 2.0 * std::sin(4.0 * kPi * x1);
    case SyntheticModel::TwoPhase: return 10.0 * x1;
    case SyntheticModel::Triangle: return 4.0 - 3.0 * std::abs(x1 - 0.5);
    case SyntheticModel::Discontinuous: return x1 <= 0.5 ? 5.0 * x1 : 5.0 * (x1 - 1.0);
    case SyntheticModel::DoubleSine: {
      const double s = 5.0 * std::sin(2.0 * kPi * x1);
      return upper_branch ? s : -s;
    }
    case SyntheticModel::SingleIndex: {
      double dot = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) dot += kSingleIndexTheta[j] * x[j];
      return std::exp(dot);
    }
  }
  return 0.0;
}

double noise_sd(const SyntheticSpec& spec, std::span<const double> x) {
  const double x1 = x[0];
  if (spec.model == SyntheticModel::SingleIndex)
    return std::sqrt(std::max(std::sin(kPi * x1), kSingleIndexVarianceFloor));
  double sd = 1.0;
  switch (spec.error) {
    case ErrorLaw::Normal: sd = 1.0; break;
    case ErrorLaw::Exp: sd = std::sqrt(std::exp((x1 - 0.5) * (x1 - 0.5))); break;
    case ErrorLaw::Sin: sd = std::sqrt(std::max(std::sin(kPi * x1), 0.0) / 4.0); break;
  }
  if (spec.model == SyntheticModel::TwoPhase && x1 > 0.5) sd *= 5.0;
  return sd;
}

double conditional_mean(const SyntheticSpec& spec, std::span<const double> x) {
  if (spec.model == SyntheticModel::DoubleSine) return 0.0;
  return regression_function(spec, x);
}

double conditional_variance(const SyntheticSpec& spec, std::span<const double> x) {
  const double s = spec.noise_scale * noise_sd(spec, x);
  double var = s * s;
  if (spec.model == SyntheticModel::DoubleSine) {
    const double m = regression_function(spec, x);
    var += m * m;
  }
  return var;
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset data;
  data.X.resize(spec.n, spec.d);
  data.y.resize(spec.n);
  std::vector<double> x(static_cast<std::size_t>(spec.d));
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    for (Eigen::Index j = 0; j < spec.d; ++j) {
      x[static_cast<std::size_t>(j)] = rng.uniform();
      data.X(i, j) = x[static_cast<std::size_t>(j)];
    }
    const bool upper = spec.model == SyntheticModel::DoubleSine ? rng.bernoulli(0.5) : true;
    const double eps = spec.noise_scale * noise_sd(spec, x) * rng.normal();
    data.y(i) = regression_function(spec, x, upper) + eps;
  }
  return data;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_inv_cdf: p must lie in (0, 1), got " + std::to_string(p));
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double z = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  const double e = normal_cdf(z) - p;
  const double u = e * std::sqrt(2.0 * kPi) * std::exp(z * z / 2.0);
  return z - u / (1.0 + z * u / 2.0);
}

double oracle_quantile(const SyntheticSpec& spec, std::span<const double> x, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("oracle_quantile: tau must lie in (0, 1)");
  if (static_cast<Eigen::Index>(x.size()) != spec.d)
    throw std::invalid_argument("oracle_quantile: x has the wrong dimension");
  const double sd = spec.noise_scale * noise_sd(spec, x);
  if (spec.model != SyntheticModel::DoubleSine)
    return regression_function(spec, x) + sd * normal_inv_cdf(tau);

  const double m = std::abs(regression_function(spec, x));
  if (sd <= 0.0) {
    // Two point masses at -m and +m; left-continuous inverse.
    return tau <= 0.5 ? -m : m;
  }
  // The mixture is symmetric about 0 and may be flat around it, so solve in
  // the upper tail and reflect.
  if (tau == 0.5) return 0.0;
  const double tail = tau > 0.5 ? 1.0 - tau : tau;
  double lo = 0.0;
  double hi = m + 10.0 * sd + 1.0;
  while (mixture_sf(hi, m, sd) > tail) hi += 10.0 * sd + 1.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (mixture_sf(mid, m, sd) > tail) lo = mid;
    else hi = mid;
  }
  const double q = 0.5 * (lo + hi);
  return tau > 0.5 ? q : -q;
}

Dataset load_csv(const std::filesystem::path& path, std::string_view target_column,
                 std::span<const std::string> drop_columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("CSV file '" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  const auto find_column = [&](std::string_view name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::invalid_argument("CSV file '" + path.string() + "' has no column '" +
                                  std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t target = find_column(target_column);
  std::vector<bool> dropped(header.size(), false);
  for (const auto& name : drop_columns) dropped[find_column(name)] = true;

  std::vector<std::size_t> feature_cols;
  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == target || dropped[c]) continue;
    feature_cols.push_back(c);
    data.feature_names.push_back(header[c]);
  }

  std::vector<double> values;
  std::vector<double> targets;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("CSV row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
    const auto numeric = [&](std::size_t c) {
      const std::string cell = trim(fields[c]);
      if (cell.empty())
        throw std::invalid_argument("CSV row " + std::to_string(row) + ", column '" + header[c] +
                                    "': missing value");
      double v = 0.0;
      if (!parse_double(cell, v))
        throw std::invalid_argument("CSV row " + std::to_string(row) + ", column '" + header[c] +
                                    "': non-numeric value '" + cell + "'");
      return v;
    };
    for (const auto c : feature_cols) values.push_back(numeric(c));
    targets.push_back(numeric(target));
  }
  if (targets.empty()) throw std::invalid_argument("CSV file '" + path.string() + "' has no data rows");

  const auto n = static_cast<Eigen::Index>(targets.size());
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  data.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, d);
  data.y = Eigen::Map<const Eigen::VectorXd>(targets.data(), n);
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path,
               std::string_view target_column) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV file '" + path.string() + "'");
  out.precision(17);
  for (Eigen::Index j = 0; j < data.d(); ++j) {
    if (!data.feature_names.empty()) out << data.feature_names[static_cast<std::size_t>(j)];
    else out << 'x' << (j + 1);
    out << ',';
  }
  out << target_column << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j) out << data.X(i, j) << ',';
    out << data.y(i) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing CSV file '" + path.string() + "'");
}

Scaler Scaler::identity(Eigen::Index d) {
  return Scaler{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d)};
}

bool Scaler::is_identity() const {
  return (mean.array() == 0.0).all() && (sd.array() == 1.0).all();
}

Eigen::MatrixXd Scaler::transform(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean.size()) throw std::invalid_argument("scaler dimension mismatch");
  return (X.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
}

Dataset Scaler::apply(const Dataset& data) const {
  Dataset out = data;
  out.X = transform(data.X);
  return out;
}

Scaler standardize(const Dataset& train) {
  if (train.n() < 2) throw std::invalid_argument("standardize needs at least 2 rows");
  Scaler s;
  s.mean = train.X.colwise().mean().transpose();
  s.sd.resize(train.d());
  for (Eigen::Index j = 0; j < train.d(); ++j) {
    const double ss = (train.X.col(j).array() - s.mean(j)).square().sum();
    s.sd(j) = std::sqrt(ss / static_cast<double>(train.n() - 1));
    if (!(s.sd(j) > 0.0)) {
      const std::string name = train.feature_names.empty()
                                   ? "x" + std::to_string(j + 1)
                                   : train.feature_names[static_cast<std::size_t>(j)];
      throw std::invalid_argument("feature '" + name + "' is constant and cannot be standardized");
    }
  }
  return s;
}

SplitIndices split_counts(std::size_t n, std::size_t n_train, std::size_t n_calib,
                          std::size_t n_test, std::uint64_t seed) {
  if (n_train == 0 || n_calib == 0)
    throw std::invalid_argument("split: training and calibration parts must be nonempty");
  if (n_train + n_calib + n_test > n)
    throw std::invalid_argument("split: part sizes exceed the number of observations");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  SplitIndices out;
  auto take = [&](std::size_t from, std::size_t count) {
    std::vector<std::size_t> part(perm.begin() + static_cast<std::ptrdiff_t>(from),
                                  perm.begin() + static_cast<std::ptrdiff_t>(from + count));
    std::sort(part.begin(), part.end());
    return part;
  };
  out.train = take(0, n_train);
  out.calib = take(n_train, n_calib);
  out.test = take(n_train + n_calib, n_test);
  return out;
}

SplitIndices split(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
  if (!(ratios.train > 0.0) || !(ratios.calib > 0.0) || !(ratios.test >= 0.0))
    throw std::invalid_argument("split: train and calibration ratios must be positive");
  if (ratios.train + ratios.calib + ratios.test > 1.0 + 1e-12)
    throw std::invalid_argument("split: ratios sum to more than 1");
  const auto count = [n](double r) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
  };
  const std::size_t n_test = count(ratios.test);
  if (ratios.test > 0.0 && n_test == 0) throw std::invalid_argument("split: test part is empty");
  return split_counts(n, count(ratios.train), count(ratios.calib), n_test, seed);
}

}  // namespace nccqr

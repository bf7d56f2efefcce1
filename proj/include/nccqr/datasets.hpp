#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nccqr {

/// Feature matrix (n x d) with its response vector.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;  // empty or d entries

  Eigen::Index n() const { return y.size(); }
  Eigen::Index d() const { return X.cols(); }

  /// Throws std::invalid_argument unless n >= 1, rows agree and all entries are finite.
  void validate() const;

  Dataset subset(std::span<const std::size_t> rows) const;
};

enum class SyntheticModel { Sine, TwoPhase, Triangle, Discontinuous, DoubleSine, SingleIndex };
enum class ErrorLaw { Normal, Exp, Sin };

std::string_view to_string(SyntheticModel model);
std::string_view to_string(ErrorLaw law);
SyntheticModel parse_model(std::string_view name);
ErrorLaw parse_error_law(std::string_view name);

/// Coefficients of the single-index model; the first d are used.
inline constexpr std::array<double, 25> kSingleIndexTheta = {
    0.29, 0.15,  -0.34, -0.62, -1.56, -1.51, -0.94, 0.01,  0.08,  1.02, 1.95,  -2.35, 2.44,
    0.35, -0.01, -1.09, -0.49, 2.11,  1.44,  -0.51, -0.33, 3.14,  0.95, 0.39,  -0.16};

/// Synthetic design. X ~ Uniform[0,1]^d and Y = f0(X) + eps with
///   Sine          2 sin(4 pi x)
///   TwoPhase      10 x, noise scaled by 5 where x > 0.5
///   Triangle      4 - 3 |x - 0.5|
///   Discontinuous 5 x for x <= 0.5, 5 (x - 1) otherwise
///   DoubleSine    +-5 sin(2 pi x), sign drawn per sample with p = 0.5
///   SingleIndex   exp(theta^T x)
/// Error laws (conditional on x): Normal N(0, 1), Exp N(0, exp((x - 0.5)^2)),
/// Sin N(0, sin(pi x) / 4). DoubleSine requires Sin. SingleIndex requires Sin
/// and uses variance max(sin(pi x_1), 1e-6), driven by the first coordinate.
struct SyntheticSpec {
  SyntheticModel model = SyntheticModel::Sine;
  ErrorLaw error = ErrorLaw::Normal;
  Eigen::Index n = 2000;
  Eigen::Index d = 1;
  std::uint64_t seed = 0;
  /// Multiplies every noise draw; 0 gives the noiseless response.
  double noise_scale = 1.0;

  void validate() const;
};

/// Noiseless response at x. For DoubleSine, upper_branch selects +5 sin(2 pi x).
double regression_function(const SyntheticSpec& spec, std::span<const double> x,
                           bool upper_branch = true);

/// Conditional standard deviation of eps at x (before noise_scale).
double noise_sd(const SyntheticSpec& spec, std::span<const double> x);

/// Var(Y | X = x), including the branch spread of DoubleSine.
double conditional_variance(const SyntheticSpec& spec, std::span<const double> x);

/// E[Y | X = x].
double conditional_mean(const SyntheticSpec& spec, std::span<const double> x);

Dataset generate(const SyntheticSpec& spec);

/// True tau-quantile of Y given X = x.
double oracle_quantile(const SyntheticSpec& spec, std::span<const double> x, double tau);

double normal_cdf(double z);

/// Inverse standard normal CDF: rational approximation refined by one Halley
/// step against the erfc-based CDF.
double normal_inv_cdf(double p);

/// Reads a comma-separated file with a header row. Features keep file column
/// order, minus the target and the dropped columns.
Dataset load_csv(const std::filesystem::path& path, std::string_view target_column,
                 std::span<const std::string> drop_columns = {});

/// Writes features then the response, full round-trip precision.
void write_csv(const Dataset& data, const std::filesystem::path& path,
               std::string_view target_column = "y");

/// Per-feature centring and scaling fitted on training data (sample sd, n - 1).
struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  static Scaler identity(Eigen::Index d);
  bool is_identity() const;

  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
  Dataset apply(const Dataset& data) const;
};

/// Fits a Scaler on train. Throws std::invalid_argument on constant features.
Scaler standardize(const Dataset& train);

struct SplitRatios {
  double train = 0.5;
  double calib = 0.5;
  /// May be 0 when the test set comes from elsewhere.
  double test = 0.0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calib;
  std::vector<std::size_t> test;
};

/// Uniformly random disjoint parts of sizes floor(n * ratio); the remainder
/// is discarded. Each part with a positive ratio must end up nonempty.
SplitIndices split(std::size_t n, const SplitRatios& ratios, std::uint64_t seed);

/// Same as above with exact part sizes.
SplitIndices split_counts(std::size_t n, std::size_t n_train, std::size_t n_calib,
                          std::size_t n_test, std::uint64_t seed);

}  // namespace nccqr

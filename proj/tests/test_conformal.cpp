#include "nccqr/conformal.hpp"
#include "nccqr/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace nccqr;

namespace {

const QuantileLevels kLevels(0.05, 0.95);

// f1(x) = a1 + b1 x, f2(x) = a2 + b2 x on one feature.
QuantileModel line_pair(double a1, double b1, double a2, double b2) {
  QuantileModel::LinearPair pair;
  pair.lower.intercept = a1;
  pair.lower.slope = Eigen::VectorXd::Constant(1, b1);
  pair.upper.intercept = a2;
  pair.upper.slope = Eigen::VectorXd::Constant(1, b2);
  return QuantileModel(pair, kLevels);
}

Dataset points(std::initializer_list<std::pair<double, double>> xy) {
  Dataset d;
  d.X.resize(static_cast<Eigen::Index>(xy.size()), 1);
  d.y.resize(static_cast<Eigen::Index>(xy.size()));
  Eigen::Index i = 0;
  for (const auto& [x, y] : xy) {
    d.X(i, 0) = x;
    d.y(i++) = y;
  }
  return d;
}

// Smallest score q with #{E_i <= q} >= k, k computed in integer arithmetic
// from alpha expressed in percent: k = ceil((100 - a)(m + 1) / 100).
double brute_force_quantile(const std::vector<double>& scores, int alpha_percent) {
  const std::size_t m = scores.size();
  const std::size_t num = static_cast<std::size_t>(100 - alpha_percent) * (m + 1);
  const std::size_t k = (num + 99) / 100;
  double best = INFINITY;
  for (const double q : scores) {
    std::size_t count = 0;
    for (const double e : scores) count += e <= q;
    if (count >= k) best = std::min(best, q);
  }
  return best;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden_widths = {32, 32};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("conformity score examples") {
  const QuantileModel model = line_pair(0.0, 0.0, 1.0, 0.0);
  const Dataset calib = points({{0.0, 0.5}, {0.0, 1.5}, {0.0, -0.25}});
  const Eigen::VectorXd e = conformity_scores(model, calib);
  CHECK(e(0) == doctest::Approx(-0.5));
  CHECK(e(1) == doctest::Approx(0.5));
  CHECK(e(2) == doctest::Approx(0.25));
}

TEST_CASE("non-positive score iff the response lies between the quantiles") {
  Rng rng(8);
  const QuantileModel model = line_pair(-1.0, 0.5, 1.0, 2.0);
  Dataset d;
  d.X.resize(2000, 1);
  d.y.resize(2000);
  for (Eigen::Index i = 0; i < 2000; ++i) {
    d.X(i, 0) = 4 * rng.uniform() - 2;
    d.y(i) = 3 * rng.normal();
  }
  const Eigen::VectorXd e = conformity_scores(model, d);
  const Eigen::MatrixXd f = model.predict(d.X);
  for (Eigen::Index i = 0; i < 2000; ++i) {
    const bool inside = f(i, 0) <= d.y(i) && d.y(i) <= f(i, 1);
    CHECK((e(i) <= 0.0) == inside);
  }
}

TEST_CASE("empirical_quantile examples") {
  std::vector<double> s(99);
  for (int i = 0; i < 99; ++i) s[static_cast<std::size_t>(i)] = i + 1;
  CHECK(conformal_rank(99, 0.1) == 90);
  CHECK(empirical_quantile(s, 0.1) == 90.0);
  const std::vector<double> one{5.0};
  CHECK_THROWS_AS(empirical_quantile(one, 0.4), std::invalid_argument);
  CHECK(conformal_rank(1999, 0.1) == 1800);
  CHECK(conformal_rank(1000, 0.2) == 801);
}

TEST_CASE("empirical_quantile matches the brute-force order statistic") {
  Rng rng(12);
  for (std::size_t m = 1; m <= 50; ++m) {
    for (const int a : {5, 10, 20, 50}) {
      for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(m);
        for (auto& v : s) v = rng.bernoulli(0.2) ? std::floor(4 * rng.normal()) : rng.normal();
        const std::size_t k = (static_cast<std::size_t>(100 - a) * (m + 1) + 99) / 100;
        if (k > m) {
          CHECK_THROWS_AS(empirical_quantile(s, a / 100.0), std::invalid_argument);
        } else {
          CHECK(empirical_quantile(s, a / 100.0) == brute_force_quantile(s, a));
        }
      }
    }
  }
}

TEST_CASE("empirical_quantile is permutation invariant and monotone in alpha") {
  Rng rng(44);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(60);
    for (auto& v : s) v = rng.normal();
    std::vector<double> shuffled = s;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    double prev = INFINITY;
    for (const double a : {0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8}) {
      const double q = empirical_quantile(s, a);
      CHECK(q == empirical_quantile(shuffled, a));
      CHECK(q <= prev);
      prev = q;
    }
  }
}

TEST_CASE("calibrate shrinks the band when every point is well inside") {
  const QuantileModel model = line_pair(-10.0, 0.0, 10.0, 0.0);
  Rng rng(2);
  Dataset calib;
  calib.X = Eigen::MatrixXd::Zero(50, 1);
  calib.y.resize(50);
  for (Eigen::Index i = 0; i < 50; ++i) calib.y(i) = 2 * rng.uniform() - 1;  // margin >= 9
  const ConformalBand band = calibrate(model, calib, 0.1);
  CHECK(band.q_hat <= -9.0);
  CHECK(band.calib_size == 50);
  CHECK_THROWS_AS(calibrate(model, calib, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(calibrate(model, calib, 0.0), std::invalid_argument);
}

TEST_CASE("perfect model on noiseless data calibrates to q_hat <= 0") {
  const Dataset calib = generate({SyntheticModel::Triangle, ErrorLaw::Normal, 100, 1, 9, 0.0});
  // Triangle with zero noise: lower = upper = 4 - 3|x - 0.5|, nonlinear, so fit a line pair
  // that brackets it instead: 2.5 <= f0 <= 4.
  const ConformalBand band = calibrate(line_pair(2.5, 0.0, 4.0, 0.0), calib, 0.1);
  CHECK(band.q_hat <= 0.0);
}

TEST_CASE("predict_interval examples") {
  const double x = 0.0;
  SUBCASE("q_hat = 0 returns the raw pair") {
    const ConformalBand band{line_pair(-1.0, 0.0, 2.0, 0.0), 0.0, 0.1, 10};
    const Interval iv = predict_interval(band, std::span<const double>(&x, 1));
    CHECK(iv.lo == -1.0);
    CHECK(iv.hi == 2.0);
  }
  SUBCASE("equal heads widen symmetrically") {
    const ConformalBand band{line_pair(3.0, 0.0, 3.0, 0.0), 0.5, 0.1, 10};
    const Interval iv = predict_interval(band, std::span<const double>(&x, 1));
    CHECK(iv.lo == 2.5);
    CHECK(iv.hi == 3.5);
  }
  SUBCASE("crossed heads stay crossed") {
    const ConformalBand band{line_pair(1.0, 0.0, 0.0, 0.0), 0.2, 0.1, 10};
    const Interval iv = predict_interval(band, std::span<const double>(&x, 1));
    CHECK(iv.lo == doctest::Approx(0.8));
    CHECK(iv.hi == doctest::Approx(0.2));
    CHECK(iv.crossed());
  }
  SUBCASE("dimension mismatch") {
    const ConformalBand band{line_pair(0.0, 0.0, 1.0, 0.0), 0.0, 0.1, 10};
    const double two[2] = {0.0, 1.0};
    CHECK_THROWS_AS(predict_interval(band, two), std::invalid_argument);
  }
}

TEST_CASE("frozen model: split-conformal coverage lands in the finite-sample bracket") {
  // Deliberately poor model: too narrow and shifted.
  const QuantileModel model = line_pair(-0.5, 1.0, 0.2, 1.0);
  Rng rng(2718);
  const auto draw = [&rng](Eigen::Index m) {
    Dataset d;
    d.X.resize(m, 1);
    d.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      d.X(i, 0) = rng.uniform();
      d.y(i) = 2 * d.X(i, 0) + (0.5 + d.X(i, 0)) * rng.normal();
    }
    return d;
  };
  int covered = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const ConformalBand band = calibrate(model, draw(99), 0.1);
    const Dataset test = draw(1);
    const double x = test.X(0, 0);
    const Interval iv = predict_interval(band, std::span<const double>(&x, 1));
    covered += iv.lo <= test.y(0) && test.y(0) <= iv.hi;
  }
  const double rate = covered / double(trials);
  CHECK(rate >= 0.87);
  CHECK(rate <= 0.94);
}

TEST_CASE("fit_linear_qr recovers affine quantiles") {
  Rng rng(77);
  const Eigen::Index n = 5000;
  Dataset d;
  d.X.resize(n, 1);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.X(i, 0) = rng.normal();
    d.y(i) = 3 * d.X(i, 0) + rng.normal();
  }
  TrainConfig cfg;
  const LinearQuantileFit med = fit_linear_qr(d, 0.5, cfg);
  CHECK(std::abs(med.intercept) < 0.1);
  CHECK(std::abs(med.slope(0) - 3.0) < 0.1);

  Dataset noise = d;
  for (Eigen::Index i = 0; i < n; ++i) noise.y(i) = rng.normal();
  const LinearQuantileFit upper = fit_linear_qr(noise, 0.9, cfg);
  CHECK(std::abs(upper.intercept - normal_inv_cdf(0.9)) < 0.05);

  Dataset flat = d;
  flat.y.setConstant(4.0);
  const LinearQuantileFit c = fit_linear_qr(flat, 0.3, cfg);
  CHECK(std::abs(c.intercept - 4.0) < 0.05);
  CHECK(std::abs(c.slope(0)) < 0.05);
}

TEST_CASE("fit_nccqr on a constant response converges to the constant") {
  Dataset d = generate({SyntheticModel::Sine, ErrorLaw::Normal, 200, 1, 3, 1.0});
  d.y.setConstant(3.0);
  TrainConfig cfg = small_config(5);
  cfg.lambda = 0.0;
  // Run to convergence: the default early-stop window fires while Adam still
  // oscillates around the kink of the pinball loss.
  cfg.epochs = 20000;
  cfg.early_stop_window = cfg.epochs;
  const QuantileModel model = fit_nccqr(d, kLevels, cfg);
  const Eigen::MatrixXd f = model.predict(d.X);
  CHECK((f.array() - 3.0).abs().maxCoeff() < 0.05);
}

TEST_CASE("fit_nccqr returns a model no worse than its starting point") {
  const Dataset d = generate({SyntheticModel::Sine, ErrorLaw::Normal, 300, 1, 4, 1.0});
  TrainConfig cfg = small_config(6);
  cfg.epochs = 300;
  const QuantileModel model = fit_nccqr(d, kLevels, cfg);
  const auto& trace = model.loss_trace();
  REQUIRE(!trace.empty());
  const double final_value = penalized_objective(model.predict(d.X), d.y, kLevels,
                                                 PenaltyWeight(cfg.resolved_lambda(d.n())));
  CHECK(final_value <= trace.front() + 1e-12);
  CHECK(final_value == doctest::Approx(*std::min_element(trace.begin(), trace.end())));
}

TEST_CASE("fit_cqr equals fit_nccqr with lambda 0 and is deterministic") {
  const Dataset d = generate({SyntheticModel::DoubleSine, ErrorLaw::Sin, 300, 1, 4, 1.0});
  TrainConfig cfg = small_config(6);
  cfg.epochs = 100;
  const QuantileModel a = fit_cqr(d, kLevels, cfg);
  cfg.lambda = 0.0;
  const QuantileModel b = fit_nccqr(d, kLevels, cfg);
  const QuantileModel c = fit_nccqr(d, kLevels, cfg);
  for (std::size_t l = 0; l < a.network()->weights.size(); ++l) {
    CHECK(a.network()->weights[l] == b.network()->weights[l]);
    CHECK(b.network()->weights[l] == c.network()->weights[l]);
  }
  CHECK(a.loss_trace() == b.loss_trace());
}

TEST_CASE("mini-batch training path runs and improves the objective") {
  const Dataset d = generate({SyntheticModel::TwoPhase, ErrorLaw::Normal, 600, 1, 8, 1.0});
  TrainConfig cfg = small_config(2);
  cfg.full_batch_max = 100;
  cfg.batch_size = 128;
  cfg.epochs = 50;
  const QuantileModel model = fit_nccqr(d, kLevels, cfg);
  CHECK(model.loss_trace().back() < model.loss_trace().front());
}

TEST_CASE("standardized features and response map back to raw units") {
  Dataset d = generate({SyntheticModel::TwoPhase, ErrorLaw::Normal, 400, 1, 8, 1.0});
  d.X = (d.X.array() * 1000.0 + 50.0).matrix();
  d.y = (d.y.array() * 100.0 + 7000.0).matrix();
  TrainConfig cfg = small_config(1);
  cfg.standardize_features = true;
  cfg.standardize_response = true;
  cfg.epochs = 400;
  const QuantileModel model = fit_nccqr(d, kLevels, cfg);
  const Eigen::MatrixXd f = model.predict(d.X);
  // Empirical coverage of the raw (uncalibrated) pair should be roughly 90%.
  int inside = 0;
  for (Eigen::Index i = 0; i < d.n(); ++i) inside += f(i, 0) <= d.y(i) && d.y(i) <= f(i, 1);
  CHECK(inside / double(d.n()) > 0.75);
}

TEST_CASE("marginal coverage over independent fit-calibrate-test draws") {
  // alpha = 0.1, R = 200: fraction covered must be at least 1 - alpha - 0.06.
  int covered = 0;
  const int R = 200;
  for (int r = 0; r < R; ++r) {
    const Dataset all = generate({SyntheticModel::Sine, ErrorLaw::Exp, 301, 1, 10000u + r, 1.0});
    const SplitIndices s = split_counts(301, 150, 150, 1, static_cast<std::uint64_t>(r));
    TrainConfig cfg = small_config(static_cast<std::uint64_t>(r));
    cfg.hidden_widths = {16, 16};
    cfg.epochs = 150;
    const QuantileModel model = fit_nccqr(all.subset(s.train), kLevels, cfg);
    const ConformalBand band = calibrate(model, all.subset(s.calib), 0.1);
    const Dataset test = all.subset(s.test);
    const double x = test.X(0, 0);
    const Interval iv = predict_interval(band, std::span<const double>(&x, 1));
    covered += iv.lo <= test.y(0) && test.y(0) <= iv.hi;
  }
  CHECK(covered / double(R) >= 0.84);
}

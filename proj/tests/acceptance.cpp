// Acceptance checks. Prints one [PASS] or [FAIL] line per criterion and exits
// nonzero if any criterion fails. Pass criterion numbers as arguments to run a
// subset, e.g. `acceptance 3 4 5`.

#include "nccqr/conformal.hpp"
#include "nccqr/datasets.hpp"
#include "nccqr/evaluation.hpp"
#include "nccqr/losses.hpp"
#include "nccqr/model_selection.hpp"
#include "nccqr/nn.hpp"
#include "nccqr/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace nccqr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

Experiment synthetic_experiment(SyntheticModel model, ErrorLaw law, Eigen::Index n, Eigen::Index d,
                                Method method, double alpha, int replications) {
  Experiment exp;
  SyntheticSpec spec;
  spec.model = model;
  spec.error = law;
  spec.n = n;
  spec.d = d;
  exp.source = spec;
  exp.method = method;
  exp.alpha = alpha;
  exp.replications = replications;
  exp.base_seed = 1;
  return exp;
}

// S1 cell: Sine / Normal, n = 2000, alpha = 0.1, R = 10.
Outcome table_s1() {
  const auto nc = replicate(synthetic_experiment(SyntheticModel::Sine, ErrorLaw::Normal, 2000, 1,
                                                 Method::NCCQR, 0.1, 10));
  const auto qr = replicate(synthetic_experiment(SyntheticModel::Sine, ErrorLaw::Normal, 2000, 1,
                                                 Method::QR, 0.1, 10));
  const bool ok = within(nc.coverage.mean, 0.87, 0.93) && within(qr.coverage.mean, 0.87, 0.93) &&
                  within(nc.avg_length.mean, 3.0, 4.0) && within(qr.avg_length.mean, 5.0, 6.0) &&
                  nc.avg_length.mean < qr.avg_length.mean;
  return {ok, "NC-CQR coverage " + fmt(nc.coverage.mean) + " length " + fmt(nc.avg_length.mean) +
                  ", QR coverage " + fmt(qr.coverage.mean) + " length " + fmt(qr.avg_length.mean) +
                  " (coverage in [0.87, 0.93], NC length in [3, 4], QR length in [5, 6], NC < QR)"};
}

// S2 trend: single-index model at d = 5 and d = 25.
Outcome table_s2() {
  bool ok = true;
  std::string detail;
  for (const Eigen::Index d : {Eigen::Index{5}, Eigen::Index{25}}) {
    const auto cqr = replicate(synthetic_experiment(SyntheticModel::SingleIndex, ErrorLaw::Sin, 2000, d,
                                                    Method::CQR, 0.2, 5));
    const auto nc = replicate(synthetic_experiment(SyntheticModel::SingleIndex, ErrorLaw::Sin, 2000, d,
                                                   Method::NCCQR, 0.2, 5));
    double nc_ci_max = 0.0;
    for (const auto& r : nc.runs) nc_ci_max = std::max(nc_ci_max, r.cr_ci);
    ok = ok && within(cqr.coverage.mean, 0.74, 0.86) && within(nc.coverage.mean, 0.74, 0.86) &&
         nc.cr_nn.mean <= cqr.cr_nn.mean && nc_ci_max == 0.0;
    detail += "d=" + std::to_string(d) + ": coverage CQR " + fmt(cqr.coverage.mean) + " NC " +
              fmt(nc.coverage.mean) + ", CR-NN CQR " + fmt(cqr.cr_nn.mean) + " NC " + fmt(nc.cr_nn.mean) +
              ", NC CR-CI " + fmt(nc.cr_ci.mean) + "; ";
  }
  return {ok, detail + "(coverage in [0.74, 0.86], CR-NN NC <= CQR, NC CR-CI = 0)"};
}

// Frozen linear pair, m = 99 calibration draws per trial.
Outcome frozen_coverage() {
  QuantileModel::LinearPair pair;
  pair.lower.intercept = -0.3;
  pair.lower.slope = Eigen::VectorXd::Constant(1, 1.5);
  pair.upper.intercept = 0.4;
  pair.upper.slope = Eigen::VectorXd::Constant(1, 1.2);
  const QuantileModel model(pair, QuantileLevels::for_miscoverage(0.1));
  Rng rng(31415);
  const auto draw = [&rng](Eigen::Index m) {
    Dataset d;
    d.X.resize(m, 1);
    d.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      d.X(i, 0) = rng.uniform();
      d.y(i) = std::sin(3 * d.X(i, 0)) + (0.2 + d.X(i, 0)) * rng.normal();
    }
    return d;
  };
  const int trials = 10000;
  int covered = 0;
  for (int t = 0; t < trials; ++t) {
    const ConformalBand band = calibrate(model, draw(99), 0.1);
    const Dataset test = draw(1);
    const double x = test.X(0, 0);
    const Interval iv = predict_interval(band, std::span<const double>(&x, 1));
    covered += iv.lo <= test.y(0) && test.y(0) <= iv.hi;
  }
  const double rate = covered / double(trials);
  return {within(rate, 0.87, 0.94), "coverage " + fmt(rate) + " over 10000 trials (in [0.87, 0.94])"};
}

// Order statistic k = ceil((100 - p)(m + 1) / 100) computed in integers.
Outcome quantile_oracle() {
  Rng rng(2718);
  int checked = 0, mismatches = 0;
  for (const int percent : {5, 10, 20, 50}) {
    const double alpha = percent / 100.0;
    for (std::size_t m = 1; m <= 50; ++m) {
      const std::size_t k = ((100 - percent) * (m + 1) + 99) / 100;
      for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> s(m);
        for (auto& v : s) v = rng.normal() * 3.0;
        if (rep % 4 == 0)
          for (auto& v : s) v = std::round(v);  // ties
        std::vector<double> sorted = s;
        std::sort(sorted.begin(), sorted.end());
        ++checked;
        if (k > m) {
          bool threw = false;
          try {
            (void)empirical_quantile(s, alpha);
          } catch (const std::invalid_argument&) {
            threw = true;
          }
          mismatches += !threw;
        } else {
          mismatches += empirical_quantile(s, alpha) != sorted[k - 1];
        }
      }
    }
  }
  return {mismatches == 0, std::to_string(checked) + " vectors, " + std::to_string(mismatches) + " mismatches"};
}

double linear_functional(const NetworkParams& p, const Eigen::MatrixXd& X, const Eigen::MatrixXd& G) {
  return (forward_batch(p, X).array() * G.array()).sum() / static_cast<double>(X.rows());
}

double min_abs_preactivation(const NetworkParams& p, const Eigen::MatrixXd& X) {
  double smallest = INFINITY;
  Eigen::MatrixXd a = X.transpose();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    Eigen::MatrixXd pre = (p.weights[l] * a).colwise() + p.biases[l];
    smallest = std::min(smallest, pre.cwiseAbs().minCoeff());
    a = pre.cwiseMax(0.0);
  }
  return smallest;
}

Outcome gradcheck() {
  Rng rng(99);
  int nets = 0;
  double worst = 0.0;
  const double h = 1e-6;
  const auto rel = [](double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale < 1e-12 ? 0.0 : std::abs(a - b) / scale;
  };
  while (nets < 50) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
    const std::vector<Eigen::Index> hidden{1 + static_cast<Eigen::Index>(rng.below(8)),
                                           1 + static_cast<Eigen::Index>(rng.below(8))};
    NetworkParams p = init_network(d, hidden, rng.next());
    for (auto& b : p.biases)
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.3 * rng.normal();
    Eigen::MatrixXd X(5, d), G(5, 2);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = rng.normal();
    if (min_abs_preactivation(p, X) <= 1e-3) continue;
    ++nets;
    const Gradients g = backward(p, X, G);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      for (Eigen::Index k = 0; k < p.weights[l].size(); ++k) {
        NetworkParams plus = p, minus = p;
        plus.weights[l].data()[k] += h;
        minus.weights[l].data()[k] -= h;
        const double fd = (linear_functional(plus, X, G) - linear_functional(minus, X, G)) / (2 * h);
        worst = std::max(worst, rel(g.weights[l].data()[k], fd));
      }
      for (Eigen::Index k = 0; k < p.biases[l].size(); ++k) {
        NetworkParams plus = p, minus = p;
        plus.biases[l](k) += h;
        minus.biases[l](k) -= h;
        const double fd = (linear_functional(plus, X, G) - linear_functional(minus, X, G)) / (2 * h);
        worst = std::max(worst, rel(g.biases[l](k), fd));
      }
    }
  }
  return {worst < 1e-5, "50 networks, worst relative error " + fmt(worst * 1e6, 3) + "e-6 (< 1e-5)"};
}

// Empirical check loss on a 1e-3 grid over [-3, 3], evaluated through prefix sums.
Outcome check_loss_grid() {
  Rng rng(4242);
  const std::size_t n = 100000;
  std::vector<double> z(n);
  for (auto& v : z) v = rng.normal();
  std::sort(z.begin(), z.end());
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + z[i];
  bool ok = true;
  std::string detail;
  for (const double tau : {0.05, 0.5, 0.95}) {
    double best = INFINITY, best_t = 0.0;
    for (int k = 0; k <= 6000; ++k) {
      const double t = -3.0 + k * 1e-3;
      const auto c = static_cast<std::size_t>(std::upper_bound(z.begin(), z.end(), t) - z.begin());
      const double above = prefix[n] - prefix[c] - static_cast<double>(n - c) * t;
      const double below = static_cast<double>(c) * t - prefix[c];
      const double loss = tau * above + (1 - tau) * below;
      if (loss < best) best = loss, best_t = t;
    }
    const double sample_q = z[static_cast<std::size_t>(std::ceil(tau * n)) - 1];
    const double diff = std::abs(best_t - sample_q);
    ok = ok && diff < 2e-3;
    detail += "tau=" + fmt(tau, 2) + " |diff| " + fmt(diff, 5) + "; ";
  }
  return {ok, detail + "(< 2e-3)"};
}

Outcome penalty_unbiased() {
  Rng rng(8080);
  int mismatches = 0;
  for (int set = 0; set < 100; ++set) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(200));
    Eigen::MatrixXd preds(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      preds(i, 0) = 5 * rng.normal();
      preds(i, 1) = rng.bernoulli(0.2) ? preds(i, 0) : preds(i, 0) + std::abs(rng.normal());
      y(i) = 5 * rng.normal();
    }
    const QuantileLevels levels(0.01 + 0.48 * rng.uniform(), 0.51 + 0.48 * rng.uniform());
    const double lambda = 1000 * rng.uniform();
    const double a = penalized_objective(preds, y, levels, PenaltyWeight(lambda));
    const double b = penalized_objective(preds, y, levels, PenaltyWeight(0.0));
    mismatches += std::memcmp(&a, &b, sizeof a) != 0;
  }
  return {mismatches == 0, "100 prediction sets, " + std::to_string(mismatches) + " bitwise mismatches"};
}

Outcome oracle_calibration() {
  struct Combo {
    SyntheticModel model;
    ErrorLaw law;
    Eigen::Index d;
  };
  std::vector<Combo> combos;
  for (const auto m : {SyntheticModel::Sine, SyntheticModel::TwoPhase, SyntheticModel::Triangle,
                       SyntheticModel::Discontinuous})
    for (const auto l : {ErrorLaw::Normal, ErrorLaw::Exp, ErrorLaw::Sin}) combos.push_back({m, l, 1});
  combos.push_back({SyntheticModel::DoubleSine, ErrorLaw::Sin, 1});
  for (const Eigen::Index d : {1, 5, 25}) combos.push_back({SyntheticModel::SingleIndex, ErrorLaw::Sin, d});

  double worst = 0.0;
  std::string worst_at;
  std::uint64_t seed = 5150;
  for (const auto& c : combos) {
    SyntheticSpec spec;
    spec.model = c.model;
    spec.error = c.law;
    spec.n = 100000;
    spec.d = c.d;
    spec.seed = seed++;
    const Dataset data = generate(spec);
    for (const double tau : {0.05, 0.1, 0.9, 0.95}) {
      Eigen::Index below = 0;
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        const Eigen::RowVectorXd row = data.X.row(i);
        below += data.y(i) <= oracle_quantile(spec, std::span<const double>(row.data(), row.size()), tau);
      }
      const double err = std::abs(below / double(data.n()) - tau);
      if (err > worst) {
        worst = err;
        worst_at = std::string(to_string(c.model)) + "/" + std::string(to_string(c.law)) + " d=" +
                   std::to_string(c.d) + " tau=" + fmt(tau, 2);
      }
    }
  }
  return {worst < 0.01, std::to_string(combos.size()) + " combinations, worst |P - tau| " + fmt(worst, 5) +
                            " at " + worst_at + " (< 0.01)"};
}

// Ten seeded trials on DoubleSine, n = 1000, alpha = 0.1, 5 folds, grid
// {0, ln n}. Networks use two hidden layers of 64 units. After selection,
// the selected and the lambda = 0 networks are refitted on the full training
// draw and their crossing rates compared on 3000 fresh test points.
Outcome lambda_selection() {
  const Eigen::Index n = 1000;
  const double ln_n = std::log(static_cast<double>(n));
  const QuantileLevels levels = QuantileLevels::for_miscoverage(0.1);
  int picks = 0;
  bool never_worse = true;
  std::string detail;
  for (std::uint64_t trial = 1; trial <= 10; ++trial) {
    SyntheticSpec spec;
    spec.model = SyntheticModel::DoubleSine;
    spec.error = ErrorLaw::Sin;
    spec.n = n;
    spec.seed = derive_seed(trial, stream::kData);
    const Dataset train = generate(spec);
    SyntheticSpec test_spec = spec;
    test_spec.n = 3000;
    test_spec.seed = derive_seed(trial, stream::kTest);
    const Dataset test = generate(test_spec);

    TrainConfig cfg;
    cfg.hidden_widths = {64, 64};
    cfg.seed = derive_seed(trial, stream::kInit);
    CvPlan plan;
    plan.folds = 5;
    plan.lambda_grid = {0.0, ln_n};
    plan.seed = derive_seed(trial, stream::kFolds);
    const CvResult cv = select_lambda(train, plan, levels, cfg);
    picks += cv.lambda_hat == ln_n;

    TrainConfig selected = cfg, unpenalized = cfg;
    selected.lambda = cv.lambda_hat;
    unpenalized.lambda = 0.0;
    const double cr_sel = crossing_rate_nn(fit_nccqr(train, levels, selected), test);
    const double cr_zero =
        cv.lambda_hat == 0.0 ? cr_sel : crossing_rate_nn(fit_nccqr(train, levels, unpenalized), test);
    never_worse = never_worse && cr_sel <= cr_zero;
    detail += (cv.lambda_hat == ln_n ? "ln n" : "0") + std::string("(") + fmt(cr_sel) + "/" + fmt(cr_zero) + ") ";
  }
  return {picks >= 8 && never_worse, "selected ln n in " + std::to_string(picks) +
                                         "/10 trials (>= 8), CR-NN selected/lambda=0 per trial: " + detail};
}

Outcome oracle_gap_trend() {
  std::vector<double> means;
  std::string detail;
  for (const Eigen::Index n : {500, 2000, 8000}) {
    const auto s = replicate(synthetic_experiment(SyntheticModel::Sine, ErrorLaw::Normal, n, 1,
                                                  Method::NCCQR, 0.1, 5));
    means.push_back(s.oracle_gap->mean);
    detail += "n=" + std::to_string(n) + " gap " + fmt(s.oracle_gap->mean) + "; ";
  }
  const bool ok = means[0] > means[1] && means[1] > means[2];
  return {ok, detail + "(strictly decreasing)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"S1 Sine/Normal reproduction", table_s1},
      {"S2 single-index crossing trend", table_s2},
      {"split-conformal coverage with a frozen model", frozen_coverage},
      {"empirical_quantile vs order-statistic oracle", quantile_oracle},
      {"backward vs central finite differences", gradcheck},
      {"check-loss grid minimizer vs sample quantile", check_loss_grid},
      {"penalty leaves non-crossing objectives bitwise unchanged", penalty_unbiased},
      {"oracle quantile calibration", oracle_calibration},
      {"cross-validated lambda on DoubleSine", lambda_selection},
      {"oracle gap decreases with n", oracle_gap_trend},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !out.pass;
    std::cout << (out.pass ? "[PASS] " : "[FAIL] ") << id << ". " << criteria[i].first << ": " << out.detail
              << " [" << fmt(secs, 1) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

#include "simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csv.hpp"
#include "rng.hpp"

namespace mscluster {

void SimulationConfig::validate() const {
  require(n >= 2 && p >= 1 && K >= 1 && C >= 1, errc::validation,
          "simulation needs n >= 2, p >= 1, K >= 1, C >= 1");
  if (!pi.empty()) {
    require(static_cast<int>(pi.size()) == C, errc::validation, "pi must have C entries");
    double sum = std::accumulate(pi.begin(), pi.end(), 0.0);
    require(std::abs(sum - 1.0) < 1e-9, errc::validation, "pi must sum to 1");
    for (double v : pi) require(v >= 0.0, errc::validation, "pi entries must be nonnegative");
  }
  require(tau >= 0.0, errc::validation, "tau must be nonnegative");
  require(rho >= 0.0 && rho < 1.0, errc::validation, "rho must be in [0, 1)");
  require(s > 0.0 && s <= 1.0, errc::validation, "signal fraction s must be in (0, 1]");
  for (double v : effective_scale()) require(v > 0.0, errc::validation, "weibull scale must be positive");
  for (double v : effective_shape()) require(v > 0.0, errc::validation, "weibull shape must be positive");
  require(target_censoring >= 0.0 && target_censoring < 1.0, errc::validation,
          "target censoring must be in [0, 1)");
}

std::vector<double> SimulationConfig::effective_pi() const {
  if (!pi.empty()) return pi;
  return std::vector<double>(C, 1.0 / C);
}

std::vector<double> SimulationConfig::effective_sigma_diag() const {
  if (!sigma_diag.empty()) {
    require(static_cast<int>(sigma_diag.size()) == p, errc::validation,
            "sigma_diag must have p entries");
    return sigma_diag;
  }
  return std::vector<double>(p, 1.0);
}

std::vector<double> SimulationConfig::effective_scale() const {
  if (!weibull_scale.empty()) {
    require(static_cast<int>(weibull_scale.size()) == K, errc::validation,
            "weibull_scale must have K entries");
    return weibull_scale;
  }
  return std::vector<double>(K, 1.0);
}

std::vector<double> SimulationConfig::effective_shape() const {
  if (!weibull_shape.empty()) {
    require(static_cast<int>(weibull_shape.size()) == K, errc::validation,
            "weibull_shape must have K entries");
    return weibull_shape;
  }
  return std::vector<double>(K, 1.0);
}

double calibrate_censoring(const std::vector<double>& terminal_times, double target) {
  require(!terminal_times.empty(), errc::validation, "calibration needs nonempty times");
  require(target >= 0.0 && target <= 0.9, errc::validation, "target rate must be in [0, 0.9]");
  double tmin = *std::min_element(terminal_times.begin(), terminal_times.end());
  double tmax = *std::max_element(terminal_times.begin(), terminal_times.end());
  require(tmax > 0.0, errc::calibration, "all terminal times are zero");

  auto rate = [&](double q) {
    double acc = 0.0;
    for (double t : terminal_times) acc += std::min(t, q) / q;
    return acc / terminal_times.size();
  };

  double lo = std::max(tmin / 10.0, 1e-12 * tmax);
  double hi = 10.0 * tmax;
  // rate() decreases from ~1 toward 0; widen the bracket when the target sits
  // below the rate at the nominal upper end.
  int widenings = 0;
  while (rate(hi) > target && widenings < 40) {
    hi *= 2.0;
    ++widenings;
  }
  require(rate(lo) >= target - 0.01, errc::calibration,
          "target censoring rate unreachable from below in bracket");
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (rate(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  double q = 0.5 * (lo + hi);
  double achieved = rate(q);
  require(std::abs(achieved - target) <= 0.01, errc::calibration,
          "calibration missed target by " + csv::format_double(std::abs(achieved - target)));
  return q;
}

Matrix ground_truth_similarity(const Matrix& X, const std::vector<Vector>& true_beta,
                               double sigma_x, double sigma_lambda) {
  require(sigma_x >= 0.0 && sigma_lambda >= 0.0, errc::validation,
          "bandwidths must be nonnegative");
  int n = static_cast<int>(X.rows());
  Matrix logits = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double v = -sigma_x * (X.row(i) - X.row(j)).squaredNorm();
      logits(i, j) = v;
      logits(j, i) = v;
    }
  for (const auto& beta : true_beta) {
    Vector z = X * beta;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double v = -sigma_lambda * std::abs(z(i) - z(j));
        logits(i, j) += v;
        logits(j, i) += v;
      }
  }
  Matrix s = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) m = std::max(m, logits(i, j));
    double denom = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) denom += std::exp(logits(i, j) - m);
    for (int j = 0; j < n; ++j)
      if (j != i) s(i, j) = std::exp(logits(i, j) - m) / denom;
  }
  return s;
}

double similarity_gap(const Matrix& s_star, const std::vector<int>& clusters) {
  int n = static_cast<int>(s_star.rows());
  double within = 0.0, between = 0.0;
  long n_within = 0, n_between = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (clusters[i] == clusters[j]) {
        within += s_star(i, j);
        ++n_within;
      } else {
        between += s_star(i, j);
        ++n_between;
      }
    }
  require(n_within > 0, errc::validation, "similarity gap needs at least one within pair");
  require(n_between > 0, errc::validation, "similarity gap needs at least two clusters");
  return within / n_within - between / n_between;
}

BandwidthTuning tune_kernel_bandwidths(const Matrix& X, const std::vector<Vector>& true_beta,
                                       const std::vector<int>& clusters, double target_gap) {
  require(target_gap >= 0.0, errc::validation, "target gap must be nonnegative");
  {
    std::vector<int> sorted = clusters;
    std::sort(sorted.begin(), sorted.end());
    require(sorted.front() != sorted.back(), errc::validation,
            "bandwidth tuning needs at least two clusters");
  }

  // Precompute both distance components once; every candidate pair is then a
  // softmax over -sx*A - sl*B.
  int n = static_cast<int>(X.rows());
  Matrix A(n, n), B = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      double v = (X.row(i) - X.row(j)).squaredNorm();
      A(i, j) = v;
      A(j, i) = v;
    }
  }
  for (const auto& beta : true_beta) {
    Vector z = X * beta;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double v = std::abs(z(i) - z(j));
        B(i, j) += v;
        B(j, i) += v;
      }
  }
  double mean_d2 = std::max(A.sum() / (static_cast<double>(n) * (n - 1)), 1e-12);
  double mean_dz = std::max(B.sum() / (static_cast<double>(n) * (n - 1)), 1e-12);

  auto gap_for = [&](double sx, double sl) {
    double within = 0.0, between = 0.0;
    long n_within = 0, n_between = 0;
    Vector row(n);
    for (int i = 0; i < n; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j)
        if (j != i) m = std::max(m, -sx * A(i, j) - sl * B(i, j));
      double denom = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        row(j) = std::exp(-sx * A(i, j) - sl * B(i, j) - m);
        denom += row(j);
      }
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        double v = row(j) / denom;
        if (clusters[i] == clusters[j]) {
          within += v;
          ++n_within;
        } else {
          between += v;
          ++n_between;
        }
      }
    }
    return within / n_within - between / n_between;
  };

  auto log_grid = [](double center, int half_points, double step) {
    std::vector<double> g;
    for (int t = -half_points; t <= half_points; ++t) g.push_back(center * std::pow(10.0, step * t));
    g.insert(g.begin(), 0.0);
    return g;
  };
  std::vector<double> grid_x = log_grid(1.0 / mean_d2, 6, 0.5);
  std::vector<double> grid_l = log_grid(1.0 / mean_dz, 6, 0.5);

  BandwidthTuning best;
  double best_err = std::numeric_limits<double>::infinity();
  double max_gap = -std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < 2; ++pass) {
    for (double sx : grid_x)
      for (double sl : grid_l) {
        double gap = gap_for(sx, sl);
        max_gap = std::max(max_gap, gap);
        double err = std::abs(gap - target_gap);
        if (err < best_err) {
          best_err = err;
          best = {sx, sl, gap, false};
        }
      }
    // refine once around the best pair
    if (pass == 0) {
      grid_x.clear();
      grid_l.clear();
      double cx = best.sigma_x > 0.0 ? best.sigma_x : 1.0 / mean_d2;
      double cl = best.sigma_lambda > 0.0 ? best.sigma_lambda : 1.0 / mean_dz;
      for (int t = -4; t <= 4; ++t) {
        grid_x.push_back(cx * std::pow(10.0, 0.125 * t));
        grid_l.push_back(cl * std::pow(10.0, 0.125 * t));
      }
      grid_x.insert(grid_x.begin(), 0.0);
      grid_l.insert(grid_l.begin(), 0.0);
    }
  }
  best.flagged = max_gap < target_gap / 2.0;
  return best;
}

SimulatedCohort generate(const SimulationConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SimulatedCohort cohort;
  int n = cfg.n, p = cfg.p, K = cfg.K, C = cfg.C;

  // (1) cluster sizes and memberships
  auto sizes = rng.multinomial(n, cfg.effective_pi());
  cohort.true_clusters.reserve(n);
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < sizes[c]; ++t) cohort.true_clusters.push_back(c);

  // (2) cluster means and covariates
  Matrix mu(C, p);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < p; ++j) mu(c, j) = cfg.tau * rng.normal();
  auto sds = cfg.effective_sigma_diag();
  Matrix chol;  // lower Cholesky of Sigma, or empty when rho == 0
  if (cfg.rho > 0.0) {
    Matrix sigma(p, p);
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) sigma(a, b) = std::pow(cfg.rho, std::abs(a - b)) * sds[a] * sds[b];
    Eigen::LLT<Matrix> llt(sigma);
    require(llt.info() == Eigen::Success, errc::numeric, "covariance Cholesky failed");
    chol = llt.matrixL();
  }
  Matrix X(n, p);
  for (int i = 0; i < n; ++i) {
    Vector zvec(p);
    for (int j = 0; j < p; ++j) zvec(j) = rng.normal();
    if (cfg.rho > 0.0) {
      X.row(i) = mu.row(cohort.true_clusters[i]) + (chol * zvec).transpose();
    } else {
      for (int j = 0; j < p; ++j) X(i, j) = mu(cohort.true_clusters[i], j) + sds[j] * zvec(j);
    }
  }

  // (3) true effects: shared dense part plus a sparse transition deviation
  Vector beta_shared(p);
  for (int j = 0; j < p; ++j) beta_shared(j) = rng.normal();
  int nnz = std::max(1, static_cast<int>(std::lround(cfg.s * p)));
  for (int k = 0; k < K; ++k) {
    Vector delta = Vector::Zero(p);
    auto coords = rng.sample_without_replacement(p, nnz);
    for (int j : coords) delta(j) = rng.normal();
    cohort.true_beta.push_back(beta_shared + delta);
  }

  // (4) Weibull sojourns by inverse transform, cumulated along the chain
  auto scale = cfg.effective_scale();
  auto shape = cfg.effective_shape();
  Matrix sojourn(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) {
      double u = rng.uniform01_open();
      double lin = cohort.true_beta[k].dot(X.row(i));
      sojourn(i, k) = std::pow(-std::log(u) / (scale[k] * std::exp(lin)), 1.0 / shape[k]);
    }
  std::vector<double> terminal(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < K; ++k) acc += sojourn(i, k);
    terminal[i] = acc;
  }

  // (5) censoring horizon, then per-patient censor draws on the cumulative clock
  cohort.q_used = calibrate_censoring(terminal, cfg.target_censoring);
  std::vector<double> censor(n);
  for (int i = 0; i < n; ++i) censor[i] = rng.uniform(0.0, cohort.q_used);

  // (6) clock-reset observed sojourns
  MultiStateDataset& ds = cohort.ds;
  ds.spec = TransitionSpec::chain(K);
  ds.feature_names.reserve(p);
  for (int j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
  ds.patient_ids.reserve(n);
  for (int i = 0; i < n; ++i) ds.patient_ids.push_back("p" + std::to_string(i + 1));
  ds.X = X;
  ds.transition_cols.assign(K, {});
  for (int k = 0; k < K; ++k) {
    ds.transition_cols[k].resize(p);
    std::iota(ds.transition_cols[k].begin(), ds.transition_cols[k].end(), 0);
  }
  ds.time.assign(K, Vector::Zero(n));
  ds.event.assign(K, Vector::Zero(n));
  for (int i = 0; i < n; ++i) {
    double entry = 0.0;
    bool entered = true;
    for (int k = 0; k < K; ++k) {
      if (!entered || censor[i] <= entry) break;
      double window = censor[i] - entry;
      if (sojourn(i, k) <= window) {
        ds.time[k](i) = sojourn(i, k);
        ds.event[k](i) = 1.0;
        entry += sojourn(i, k);
      } else {
        ds.time[k](i) = window;
        ds.event[k](i) = 0.0;
        entered = false;
      }
    }
  }
  infer_at_risk(ds);
  ds.validate();

  // (7) ground-truth similarity
  cohort.sigma_x = cfg.sigma_x;
  cohort.sigma_lambda = cfg.sigma_lambda;
  if (cfg.sigma_x < 0.0 || cfg.sigma_lambda < 0.0) {
    if (C >= 2) {
      auto tuned = tune_kernel_bandwidths(X, cohort.true_beta, cohort.true_clusters, cfg.target_gap);
      cohort.sigma_x = tuned.sigma_x;
      cohort.sigma_lambda = tuned.sigma_lambda;
      cohort.achieved_gap = tuned.gap;
      if (tuned.flagged)
        cohort.warnings.push_back("bandwidth tuning: achieved gap " +
                                  csv::format_double(tuned.gap) + " below half the target");
    } else {
      cohort.sigma_x = 1.0;
      cohort.sigma_lambda = 1.0;
      cohort.warnings.push_back("single cluster: default bandwidths, gap undefined");
    }
  }
  cohort.s_star = ground_truth_similarity(X, cohort.true_beta, cohort.sigma_x, cohort.sigma_lambda);
  if (C >= 2 && cfg.sigma_x >= 0.0 && cfg.sigma_lambda >= 0.0)
    cohort.achieved_gap = similarity_gap(cohort.s_star, cohort.true_clusters);
  return cohort;
}

}  // namespace mscluster

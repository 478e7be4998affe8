#include "optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "evaluation.hpp"

namespace mscluster {

namespace {

double joint_objective(const MultiStateDataset& ds, const CoxCoefficients& beta,
                       const SimilarityMatrix& sim, const Matrix& U, const Hyperparams& hp,
                       const DistanceMatrix& dist, double lambda_bar) {
  double value = cox_neg_log_partial_likelihood(ds, beta) + hp.eta * beta.l1_norm();
  value += hp.gamma * (dist.d.array() * sim.S.array()).sum();
  value += lambda_bar * sim.S.squaredNorm();
  if (hp.alpha_spec > 0.0) {
    GraphLaplacian lap = build_laplacian(sim);
    value += hp.alpha_spec * (U.transpose() * lap.L * U).trace();
  }
  return value;
}

DistanceMatrix current_distance(const MultiStateDataset& ds, const Matrix& d_cov,
                                const CoxCoefficients& beta, const TransitionWeights& weights,
                                double mu) {
  return combine_distance(d_cov, msm_distance(ds, beta, weights), mu);
}

}  // namespace

double objective(const MultiStateDataset& ds, const CoxCoefficients& beta,
                 const TransitionWeights& weights, const SimilarityMatrix& S, const Matrix& U,
                 const Hyperparams& hp) {
  DistanceMatrix dist = current_distance(ds, covariate_distance(ds.X), beta, weights, hp.mu);
  return joint_objective(ds, beta, S, U, hp, dist, S.lambda_bar());
}

Vector risk_scores(const MultiStateDataset& ds, const CoxCoefficients& beta, int k) {
  require(k >= 0 && k < ds.num_transitions(), errc::validation, "transition index out of range");
  return ds.transition_matrix(k) * beta.beta[k];
}

FitResult fit(const MultiStateDataset& ds, const Hyperparams& hp,
              const CoxCoefficients* warm_start) {
  hp.validate(ds.n());
  FitResult res;
  res.beta = warm_start ? *warm_start : CoxCoefficients::zeros(ds);
  res.weights = estimate_weights(ds, res.beta);

  Matrix d_cov = covariate_distance(ds.X);
  DistanceMatrix dist = current_distance(ds, d_cov, res.beta, res.weights, hp.mu);
  res.S = update_similarity(dist, hp, &res.warnings);
  res.U = smallest_eigs(build_laplacian(res.S), hp.c);

  // The adaptive per-row lambdas make the quadratic term heterogeneous; for a
  // trace comparable within an iteration, lambda_bar is frozen at the top of
  // each outer cycle together with the weights.
  double lambda_bar = res.S.lambda_bar();
  double obj = joint_objective(ds, res.beta, res.S, res.U.U, hp, dist, lambda_bar);
  require(std::isfinite(obj), errc::divergence, "non-finite objective at initialization");
  res.step_trace.push_back({0, 0, obj});

  double prev = obj;
  for (int iter = 1; iter <= hp.max_outer; ++iter) {
    res.iterations = iter;
    res.weights = estimate_weights(ds, res.beta);
    lambda_bar = res.S.lambda_bar();
    dist = current_distance(ds, d_cov, res.beta, res.weights, hp.mu);
    obj = joint_objective(ds, res.beta, res.S, res.U.U, hp, dist, lambda_bar);
    res.step_trace.push_back({iter, 0, obj});

    res.beta = prox_gradient_update(ds, res.beta, res.S.S, hp, res.weights);
    dist = current_distance(ds, d_cov, res.beta, res.weights, hp.mu);
    obj = joint_objective(ds, res.beta, res.S, res.U.U, hp, dist, lambda_bar);
    res.step_trace.push_back({iter, 1, obj});

    res.S = update_similarity(dist, hp, &res.warnings);
    obj = joint_objective(ds, res.beta, res.S, res.U.U, hp, dist, lambda_bar);
    res.step_trace.push_back({iter, 2, obj});

    res.U = smallest_eigs(build_laplacian(res.S), hp.c);
    obj = joint_objective(ds, res.beta, res.S, res.U.U, hp, dist, lambda_bar);
    res.step_trace.push_back({iter, 3, obj});

    require(std::isfinite(obj), errc::divergence, "non-finite objective during fit");
    res.objective_trace.push_back(obj);
    double rel = std::abs(obj - prev) / std::max(1.0, std::abs(prev));
    prev = obj;
    if (rel < hp.outer_tol) {
      res.converged = true;
      break;
    }
  }

  res.clusters = extract_clusters(res.S, res.U.U, hp.c, hp.edge_tol);
  return res;
}

SimilarityMatrix rbf_similarity(const Matrix& X) {
  int n = static_cast<int>(X.rows());
  Matrix d2 = covariate_distance(X);
  std::vector<double> pairwise;
  pairwise.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairwise.push_back(std::sqrt(d2(i, j)));
  std::sort(pairwise.begin(), pairwise.end());
  double sigma = pairwise.empty() ? 1.0
                 : pairwise.size() % 2 == 1
                     ? pairwise[pairwise.size() / 2]
                     : 0.5 * (pairwise[pairwise.size() / 2 - 1] + pairwise[pairwise.size() / 2]);
  if (sigma <= 0.0) sigma = 1.0;

  SimilarityMatrix sim;
  sim.S = (-d2 / (2.0 * sigma * sigma)).array().exp();
  sim.S.diagonal().setZero();
  for (int i = 0; i < n; ++i) {
    double s = sim.S.row(i).sum();
    require(s > 0.0, errc::numeric, "rbf row collapsed to zero");
    sim.S.row(i) /= s;
  }
  sim.row_lambda = Vector::Zero(n);
  sim.row_fallback.assign(n, 0);
  sim.adaptive = false;
  return sim;
}

SimilarityMatrix knn_similarity(const Matrix& X, int kappa) {
  int n = static_cast<int>(X.rows());
  require(kappa >= 1 && kappa <= n - 1, errc::validation, "kappa must be in [1, n-1]");
  Matrix d2 = covariate_distance(X);
  SimilarityMatrix sim;
  sim.S = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> off;
    for (int j = 0; j < n; ++j)
      if (j != i) off.emplace_back(d2(i, j), j);
    std::partial_sort(off.begin(), off.begin() + kappa, off.end());
    for (int t = 0; t < kappa; ++t) sim.S(i, off[t].second) = 1.0 / kappa;
  }
  sim.row_lambda = Vector::Zero(n);
  sim.row_fallback.assign(n, 0);
  sim.adaptive = false;
  return sim;
}

FitResult baseline_fit(const MultiStateDataset& ds, BaselineVariant variant, const Hyperparams& hp) {
  Hyperparams local = hp;
  if (variant == BaselineVariant::cox_only) local.gamma = 0.0;
  local.validate(ds.n());

  FitResult res;
  res.beta = CoxCoefficients::zeros(ds);
  res.weights = estimate_weights(ds, res.beta);

  switch (variant) {
    case BaselineVariant::cox_only:
      res.S = SimilarityMatrix::uniform(ds.n());
      break;
    case BaselineVariant::fixed_rbf_graph:
      res.S = rbf_similarity(ds.X);
      break;
    case BaselineVariant::knn_graph:
      res.S = knn_similarity(ds.X, local.kappa);
      break;
  }
  res.U = smallest_eigs(build_laplacian(res.S), local.c);

  Matrix d_cov = covariate_distance(ds.X);
  DistanceMatrix dist = current_distance(ds, d_cov, res.beta, res.weights, local.mu);
  double prev = joint_objective(ds, res.beta, res.S, res.U.U, local, dist, res.S.lambda_bar());
  res.step_trace.push_back({0, 0, prev});

  for (int iter = 1; iter <= local.max_outer; ++iter) {
    res.iterations = iter;
    res.weights = estimate_weights(ds, res.beta);
    res.beta = prox_gradient_update(ds, res.beta, res.S.S, local, res.weights);
    dist = current_distance(ds, d_cov, res.beta, res.weights, local.mu);
    double obj = joint_objective(ds, res.beta, res.S, res.U.U, local, dist, res.S.lambda_bar());
    require(std::isfinite(obj), errc::divergence, "non-finite objective during baseline fit");
    res.step_trace.push_back({iter, 1, obj});
    res.objective_trace.push_back(obj);
    double rel = std::abs(obj - prev) / std::max(1.0, std::abs(prev));
    prev = obj;
    if (rel < local.outer_tol) {
      res.converged = true;
      break;
    }
  }

  if (variant == BaselineVariant::cox_only) {
    res.clusters.labels.assign(ds.n(), 0);
    res.clusters.method = ClusterAssignment::Method::components;
    res.clusters_valid = false;
    res.warnings.push_back("cox_only baseline defines no clusters");
  } else {
    res.clusters = extract_clusters(res.S, res.U.U, local.c, local.edge_tol);
  }
  return res;
}

GridSearchResult grid_search(const MultiStateDataset& ds, const std::vector<Hyperparams>& grid,
                             int transition_for_c_index) {
  require(!grid.empty(), errc::validation, "grid must be nonempty");
  require(transition_for_c_index >= 0 && transition_for_c_index < ds.num_transitions(),
          errc::validation, "transition index out of range");
  GridSearchResult out;
  int k = transition_for_c_index;

  for (const auto& hp : grid) {
    GridCandidate cand;
    cand.hp = hp;
    FitResult res = fit(ds, hp);
    cand.converged = res.converged;
    cand.iterations = res.iterations;
    cand.beta_l0 = res.beta.l0_norm();
    cand.final_objective = res.objective_trace.empty() ? 0.0 : res.objective_trace.back();

    std::vector<int> rows;
    for (int i = 0; i < ds.n(); ++i)
      if (ds.at_risk[k](i) == 1.0) rows.push_back(i);
    Vector risk_all = risk_scores(ds, res.beta, k);
    Vector risk(rows.size()), times(rows.size()), events(rows.size());
    std::vector<int> groups(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      risk(t) = risk_all(rows[t]);
      times(t) = ds.time[k](rows[t]);
      events(t) = ds.event[k](rows[t]);
      groups[t] = res.clusters.labels[rows[t]];
    }
    try {
      cand.c_index = c_index(risk, times, events);
      cand.logrank_p = logrank_test(times, events, groups).p;
      cand.passed_gate = cand.logrank_p < 0.05;
    } catch (const Error&) {
      cand.c_index = std::numeric_limits<double>::quiet_NaN();
      cand.logrank_p = std::numeric_limits<double>::quiet_NaN();
      cand.passed_gate = false;
    }
    out.candidates.push_back(std::move(cand));
  }

  for (std::size_t i = 0; i < out.candidates.size(); ++i) {
    const auto& c = out.candidates[i];
    if (!c.passed_gate) continue;
    if (out.selected < 0) {
      out.selected = static_cast<int>(i);
      continue;
    }
    const auto& best = out.candidates[out.selected];
    if (c.c_index > best.c_index ||
        (c.c_index == best.c_index && c.beta_l0 < best.beta_l0)) {
      out.selected = static_cast<int>(i);
    }
  }
  return out;
}

}  // namespace mscluster

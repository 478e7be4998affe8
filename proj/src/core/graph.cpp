#include "graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mscluster {

double SimilarityMatrix::lambda_bar() const {
  if (row_lambda.size() == 0) return 0.0;
  double m = row_lambda.mean();
  return m > 0.0 ? m : 0.0;
}

SimilarityMatrix SimilarityMatrix::uniform(int n) {
  SimilarityMatrix sim;
  sim.S = Matrix::Constant(n, n, n > 1 ? 1.0 / (n - 1) : 0.0);
  sim.S.diagonal().setZero();
  sim.row_lambda = Vector::Zero(n);
  sim.row_fallback.assign(n, 1);
  sim.adaptive = false;
  return sim;
}

Matrix covariate_distance(const Matrix& X) {
  int n = static_cast<int>(X.rows());
  Matrix d(n, n);
  for (int i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      double v = (X.row(i) - X.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Matrix msm_distance(const MultiStateDataset& ds, const CoxCoefficients& beta,
                    const TransitionWeights& weights) {
  require(static_cast<int>(weights.w.size()) == ds.num_transitions(), errc::validation,
          "weight count does not match K");
  for (double w : weights.w)
    require(w > 0.0 && std::isfinite(w), errc::validation, "weights must be positive");
  int n = ds.n();
  Matrix d = Matrix::Zero(n, n);
  for (int k = 0; k < ds.num_transitions(); ++k) {
    Vector z = ds.transition_matrix(k) * beta.beta[k];
    double w = weights.w[k];
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double diff = z(i) - z(j);
        double v = w * diff * diff;
        d(i, j) += v;
        d(j, i) += v;
      }
  }
  return d;
}

DistanceMatrix combine_distance(Matrix d_cov, Matrix d_msm, double mu) {
  require(d_cov.rows() == d_msm.rows() && d_cov.cols() == d_msm.cols(), errc::validation,
          "distance component shapes differ");
  DistanceMatrix out;
  out.mu = mu;
  out.d = mu * d_cov + d_msm;
  out.d_cov = std::move(d_cov);
  out.d_msm = std::move(d_msm);
  return out;
}

namespace {

// Indices of the m smallest values, ties broken by index.
std::vector<int> smallest_indices(const std::vector<std::pair<double, int>>& vals, int m) {
  std::vector<std::pair<double, int>> v = vals;
  std::partial_sort(v.begin(), v.begin() + m, v.end());
  std::vector<int> idx(m);
  for (int t = 0; t < m; ++t) idx[t] = v[t].second;
  return idx;
}

}  // namespace

SimilarityMatrix update_similarity(const DistanceMatrix& dist, const Hyperparams& hp,
                                   std::vector<std::string>* warnings) {
  int n = static_cast<int>(dist.d.rows());
  require(n >= 2, errc::validation, "similarity needs at least 2 patients");
  SimilarityMatrix sim;
  sim.S = Matrix::Zero(n, n);
  sim.row_lambda = Vector::Zero(n);
  sim.row_fallback.assign(n, 0);
  sim.adaptive = hp.adaptive;
  double gamma = hp.gamma > 0.0 ? hp.gamma : 1.0;  // only the ratio to lambda matters per row

  if (hp.adaptive) {
    int kappa = hp.kappa;
    require(kappa >= 1 && kappa <= n - 1, errc::validation, "kappa must be in [1, n-1]");
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<double, int>> off;
      off.reserve(n - 1);
      for (int j = 0; j < n; ++j)
        if (j != i) off.emplace_back(dist.d(i, j), j);
      int m = std::min(kappa + 1, n - 1);
      auto nearest = smallest_indices(off, m);
      double sum_k = 0.0;
      for (int t = 0; t < kappa; ++t) sum_k += dist.d(i, nearest[t]);
      // The boundary distance is the (kappa+1)-th nearest; when kappa = n-1
      // there is none and the kappa-th stands in (its weight becomes 0).
      double d_next = dist.d(i, nearest[m - 1]);
      double lambda_i = 0.5 * gamma * (kappa * d_next - sum_k);
      double eta_i = (2.0 * lambda_i + gamma * sum_k) / kappa;
      sim.row_lambda(i) = lambda_i;
      if (lambda_i <= 0.0) {
        for (int t = 0; t < kappa; ++t) sim.S(i, nearest[t]) = 1.0 / kappa;
        sim.row_fallback[i] = 1;
        if (warnings)
          warnings->push_back("row " + std::to_string(i) +
                              ": degenerate adaptive lambda, used uniform neighbor weights");
        continue;
      }
      double row_sum = 0.0;
      for (int t = 0; t < kappa; ++t) {
        double v = (eta_i - gamma * dist.d(i, nearest[t])) / (2.0 * lambda_i);
        v = std::max(v, 0.0);
        sim.S(i, nearest[t]) = v;
        row_sum += v;
      }
      // The closed form sums to 1 analytically; renormalize the float residue.
      sim.S.row(i) /= row_sum;
    }
  } else {
    require(hp.lambda > 0.0, errc::validation, "global lambda must be positive");
    sim.row_lambda.setConstant(hp.lambda);
    Vector d_off(n - 1);
    std::vector<int> cols(n - 1);
    for (int i = 0; i < n; ++i) {
      int t = 0;
      for (int j = 0; j < n; ++j)
        if (j != i) {
          d_off(t) = gamma * dist.d(i, j);
          cols[t++] = j;
        }
      auto row_sum = [&](double eta) {
        return (d_off.array() < eta).select(eta - d_off.array(), 0.0).sum() / (2.0 * hp.lambda);
      };
      double lo = d_off.minCoeff();
      double hi = d_off.maxCoeff() + 2.0 * hp.lambda;
      while (row_sum(hi) < 1.0) hi += 2.0 * hp.lambda + 1.0;
      for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        if (row_sum(mid) < 1.0)
          lo = mid;
        else
          hi = mid;
      }
      double eta = 0.5 * (lo + hi);
      double total = 0.0;
      for (int q = 0; q < n - 1; ++q) {
        double v = std::max(eta - d_off(q), 0.0) / (2.0 * hp.lambda);
        sim.S(i, cols[q]) = v;
        total += v;
      }
      require(total > 0.0, errc::numeric, "global-lambda row collapsed to zero");
      sim.S.row(i) /= total;
    }
  }
  return sim;
}

GraphLaplacian build_laplacian(const SimilarityMatrix& sim) {
  Matrix W = 0.5 * (sim.S + sim.S.transpose());
  GraphLaplacian g;
  g.degrees = W.rowwise().sum();
  g.L = -W;
  g.L.diagonal() += g.degrees;
  return g;
}

std::pair<int, std::vector<int>> connected_components(const SimilarityMatrix& sim, double edge_tol) {
  require(edge_tol >= 0.0, errc::validation, "edge_tol must be nonnegative");
  int n = sim.n();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (0.5 * (sim.S(i, j) + sim.S(j, i)) > edge_tol) {
        int a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
  std::vector<int> labels(n, -1);
  int count = 0;
  for (int i = 0; i < n; ++i) {
    int root = find(i);
    if (labels[root] == -1) labels[root] = count++;
    labels[i] = labels[root];
  }
  return {count, labels};
}

}  // namespace mscluster

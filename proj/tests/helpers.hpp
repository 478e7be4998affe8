#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "core/dataset.hpp"
#include "core/rng.hpp"
#include "core/survival.hpp"

namespace mscluster::testing {

// Small random clock-reset chain cohort; events thin out along the chain so
// downstream at-risk sets are genuine subsets.
inline MultiStateDataset random_dataset(Rng& rng, int n, int p, int K) {
  MultiStateDataset ds;
  ds.spec = TransitionSpec::chain(K);
  ds.X.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) ds.X(i, j) = rng.normal();
  for (int j = 0; j < p; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  for (int i = 0; i < n; ++i) ds.patient_ids.push_back("p" + std::to_string(i));
  ds.transition_cols.assign(K, {});
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < p; ++j) ds.transition_cols[k].push_back(j);
  ds.time.assign(K, Vector::Zero(n));
  ds.event.assign(K, Vector::Zero(n));
  for (int i = 0; i < n; ++i) {
    bool alive = true;
    for (int k = 0; k < K; ++k) {
      if (!alive) break;
      ds.time[k](i) = 0.05 + rng.uniform01();
      bool evt = rng.uniform01() < 0.75;
      ds.event[k](i) = evt ? 1.0 : 0.0;
      alive = evt;
    }
  }
  infer_at_risk(ds);
  ds.validate();
  return ds;
}

inline Matrix random_row_stochastic(Rng& rng, int n) {
  Matrix S(n, n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      S(i, j) = i == j ? 0.0 : std::abs(rng.normal()) + 1e-3;
      sum += S(i, j);
    }
    S.row(i) /= sum;
  }
  return S;
}

// Central finite differences of a scalar function of one coefficient vector.
inline Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& x,
                                double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi(i) += h;
    lo(i) -= h;
    g(i) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

// Euclidean projection onto the probability simplex (sort-based).
inline Vector project_simplex(const Vector& v) {
  int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (int i = 0; i < n; ++i) {
    css += u[i];
    double t = (css - 1.0) / (i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      theta = t;
    }
  }
  (void)rho;
  Vector out(n);
  for (int i = 0; i < n; ++i) out(i) = std::max(v(i) - theta, 0.0);
  return out;
}

// Projected-gradient oracle for min gamma*d's + lambda*||s||^2 over the
// simplex. Step 1/(2 lambda) makes each iteration an exact projection of the
// unconstrained minimizer; a few iterations polish numerics.
inline Vector simplex_qp_oracle(const Vector& d, double gamma, double lambda, int iters = 200) {
  int n = static_cast<int>(d.size());
  Vector s = Vector::Constant(n, 1.0 / n);
  double step = 1.0 / (2.0 * lambda);
  for (int it = 0; it < iters; ++it)
    s = project_simplex(s - step * (gamma * d + 2.0 * lambda * s));
  return s;
}

// Newton iteration on the stratified Cox partial likelihood (no penalty).
inline CoxCoefficients newton_cox_mle(const MultiStateDataset& ds, int iters = 100) {
  CoxCoefficients beta = CoxCoefficients::zeros(ds);
  TransitionWeights unit;
  unit.w.assign(ds.num_transitions(), 1.0);
  Matrix S0 = Matrix::Zero(ds.n(), ds.n());
  for (int it = 0; it < iters; ++it) {
    auto g = smooth_gradient(ds, beta, S0, 0.0, unit);
    bool done = true;
    for (int k = 0; k < ds.num_transitions(); ++k) {
      // numeric Hessian via finite differences of the analytic gradient
      int p = ds.p_k(k);
      Matrix H(p, p);
      double h = 1e-6;
      for (int j = 0; j < p; ++j) {
        CoxCoefficients bp = beta, bm = beta;
        bp.beta[k](j) += h;
        bm.beta[k](j) -= h;
        Vector gp = smooth_gradient(ds, bp, S0, 0.0, unit)[k];
        Vector gm = smooth_gradient(ds, bm, S0, 0.0, unit)[k];
        H.col(j) = (gp - gm) / (2.0 * h);
      }
      H = 0.5 * (H + H.transpose());
      H.diagonal().array() += 1e-10;
      Vector delta = H.ldlt().solve(g[k]);
      beta.beta[k] -= delta;
      if (g[k].lpNorm<Eigen::Infinity>() > 1e-9) done = false;
    }
    if (done) break;
  }
  return beta;
}

}  // namespace mscluster::testing

#include "survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mscluster {

CoxCoefficients CoxCoefficients::zeros(const MultiStateDataset& ds) {
  CoxCoefficients b;
  for (int k = 0; k < ds.num_transitions(); ++k) b.beta.push_back(Vector::Zero(ds.p_k(k)));
  return b;
}

double CoxCoefficients::l1_norm() const {
  double s = 0.0;
  for (auto& b : beta) s += b.cwiseAbs().sum();
  return s;
}

int CoxCoefficients::l0_norm(double zero_tol) const {
  int c = 0;
  for (auto& b : beta)
    for (Eigen::Index i = 0; i < b.size(); ++i)
      if (std::abs(b(i)) > zero_tol) ++c;
  return c;
}

namespace {

// Per-transition scaffolding for the Breslow partial likelihood: at-risk rows
// sorted by descending time and grouped into tie blocks.
struct Stratum {
  Matrix Xk;                                 // n x p_k, all patients
  std::vector<int> order;                    // at-risk rows, descending time
  std::vector<std::pair<int, int>> groups;   // [begin, end) tie blocks in `order`
  int n_events = 0;
};

Stratum build_stratum(const MultiStateDataset& ds, int k) {
  Stratum s;
  s.Xk = ds.transition_matrix(k);
  for (int i = 0; i < ds.n(); ++i)
    if (ds.at_risk[k](i) == 1.0) s.order.push_back(i);
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](int a, int b) { return ds.time[k](a) > ds.time[k](b); });
  std::size_t i = 0;
  while (i < s.order.size()) {
    std::size_t j = i;
    while (j + 1 < s.order.size() && ds.time[k](s.order[j + 1]) == ds.time[k](s.order[i])) ++j;
    s.groups.emplace_back(static_cast<int>(i), static_cast<int>(j + 1));
    i = j + 1;
  }
  for (int idx : s.order)
    if (ds.event[k](idx) == 1.0) s.n_events++;
  return s;
}

// Streaming risk-set accumulator with a running max so every exp() argument
// stays nonpositive regardless of the spread of the linear predictors.
struct RiskSetSums {
  double ref = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  Vector sum_x;
  Matrix sum_xx;
  bool with_x = false, with_xx = false;

  void init(int p, bool x, bool xx) {
    with_x = x;
    with_xx = xx;
    if (x) sum_x = Vector::Zero(p);
    if (xx) sum_xx = Matrix::Zero(p, p);
  }
  void add(double eta, const Eigen::Ref<const Vector>& x) {
    if (eta > ref) {
      double scale = std::isfinite(ref) ? std::exp(ref - eta) : 0.0;
      sum *= scale;
      if (with_x) sum_x *= scale;
      if (with_xx) sum_xx *= scale;
      ref = eta;
    }
    double w = std::exp(eta - ref);
    sum += w;
    if (with_x) sum_x += w * x;
    if (with_xx) sum_xx += w * (x * x.transpose());
  }
  double lse() const { return ref + std::log(sum); }
};

double stratum_nll(const MultiStateDataset& ds, int k, const Stratum& s, const Vector& beta_k) {
  if (s.n_events == 0) return 0.0;
  Vector eta = s.Xk * beta_k;
  require(eta.allFinite(), errc::numeric, "non-finite linear predictor in Cox loss");
  RiskSetSums acc;
  acc.init(0, false, false);
  double nll = 0.0;
  Vector dummy;
  for (auto [b, e] : s.groups) {
    for (int t = b; t < e; ++t) acc.add(eta(s.order[t]), dummy);
    double lse = acc.lse();
    for (int t = b; t < e; ++t) {
      int idx = s.order[t];
      if (ds.event[k](idx) == 1.0) nll -= eta(idx) - lse;
    }
  }
  require(std::isfinite(nll), errc::numeric, "overflow in Cox partial likelihood");
  return nll;
}

Vector stratum_gradient(const MultiStateDataset& ds, int k, const Stratum& s, const Vector& beta_k) {
  int p = static_cast<int>(beta_k.size());
  Vector g = Vector::Zero(p);
  if (s.n_events == 0) return g;
  Vector eta = s.Xk * beta_k;
  require(eta.allFinite(), errc::numeric, "non-finite linear predictor in Cox gradient");
  RiskSetSums acc;
  acc.init(p, true, false);
  for (auto [b, e] : s.groups) {
    for (int t = b; t < e; ++t) {
      int idx = s.order[t];
      acc.add(eta(idx), s.Xk.row(idx).transpose());
    }
    for (int t = b; t < e; ++t) {
      int idx = s.order[t];
      if (ds.event[k](idx) == 1.0)
        g -= s.Xk.row(idx).transpose() - acc.sum_x / acc.sum;
    }
  }
  return g;
}

Matrix stratum_hessian(const MultiStateDataset& ds, int k, const Stratum& s, const Vector& beta_k) {
  int p = static_cast<int>(beta_k.size());
  Matrix h = Matrix::Zero(p, p);
  if (s.n_events == 0) return h;
  Vector eta = s.Xk * beta_k;
  require(eta.allFinite(), errc::numeric, "non-finite linear predictor in Cox hessian");
  RiskSetSums acc;
  acc.init(p, true, true);
  for (auto [b, e] : s.groups) {
    for (int t = b; t < e; ++t) {
      int idx = s.order[t];
      acc.add(eta(idx), s.Xk.row(idx).transpose());
    }
    for (int t = b; t < e; ++t) {
      int idx = s.order[t];
      if (ds.event[k](idx) == 1.0) {
        Vector xbar = acc.sum_x / acc.sum;
        h += acc.sum_xx / acc.sum - xbar * xbar.transpose();
      }
    }
  }
  return h;
}

// A_k = X_k' M X_k with M = diag(r + c) - S - S'; the coupling penalty is then
// w_k * beta' A_k beta and its gradient 2 w_k A_k beta.
Matrix coupling_matrix(const Matrix& Xk, const Matrix& S) {
  Vector rc = S.rowwise().sum() + S.colwise().sum().transpose();
  Matrix MX = rc.asDiagonal() * Xk - S * Xk - S.transpose() * Xk;
  return Xk.transpose() * MX;
}

void check_dims(const MultiStateDataset& ds, const CoxCoefficients& beta) {
  require(static_cast<int>(beta.beta.size()) == ds.num_transitions(), errc::validation,
          "coefficient count does not match K");
  for (int k = 0; k < ds.num_transitions(); ++k)
    require(static_cast<int>(beta.beta[k].size()) == ds.p_k(k), errc::validation,
            "coefficient length does not match p_k");
}

}  // namespace

double cox_neg_log_partial_likelihood(const MultiStateDataset& ds, const CoxCoefficients& beta,
                                      std::vector<std::string>* warnings) {
  check_dims(ds, beta);
  double nll = 0.0;
  for (int k = 0; k < ds.num_transitions(); ++k) {
    Stratum s = build_stratum(ds, k);
    if (s.n_events == 0) {
      if (warnings)
        warnings->push_back("transition " + std::to_string(k + 1) +
                            " has no events; stratum contributes 0");
      continue;
    }
    nll += stratum_nll(ds, k, s, beta.beta[k]);
  }
  return nll;
}

std::vector<Vector> smooth_gradient(const MultiStateDataset& ds, const CoxCoefficients& beta,
                                    const Matrix& S, double gamma, const TransitionWeights& weights) {
  check_dims(ds, beta);
  require(static_cast<int>(weights.w.size()) == ds.num_transitions(), errc::validation,
          "weight count does not match K");
  std::vector<Vector> g;
  for (int k = 0; k < ds.num_transitions(); ++k) {
    Stratum s = build_stratum(ds, k);
    Vector gk = stratum_gradient(ds, k, s, beta.beta[k]);
    if (gamma > 0.0) {
      Matrix A = coupling_matrix(s.Xk, S);
      gk += 2.0 * gamma * weights.w[k] * (A * beta.beta[k]);
    }
    require(gk.allFinite(), errc::numeric, "non-finite gradient");
    g.push_back(std::move(gk));
  }
  return g;
}

Vector soft_threshold(const Vector& v, double t) {
  require(t >= 0.0, errc::validation, "soft threshold requires t >= 0");
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double a = std::abs(v(i)) - t;
    out(i) = a > 0.0 ? (v(i) > 0.0 ? a : -a) : 0.0;
  }
  return out;
}

double coupling_penalty(const MultiStateDataset& ds, const CoxCoefficients& beta, const Matrix& S,
                        const TransitionWeights& weights) {
  check_dims(ds, beta);
  double total = 0.0;
  for (int k = 0; k < ds.num_transitions(); ++k) {
    Matrix Xk = ds.transition_matrix(k);
    Vector z = Xk * beta.beta[k];
    Vector rc = S.rowwise().sum() + S.colwise().sum().transpose();
    double quad = z.dot(rc.cwiseProduct(z)) - z.dot(S * z) - z.dot(S.transpose() * z);
    total += weights.w[k] * quad;
  }
  return total;
}

double step1_objective(const MultiStateDataset& ds, const CoxCoefficients& beta, const Matrix& S,
                       const Hyperparams& hp, const TransitionWeights& weights) {
  return cox_neg_log_partial_likelihood(ds, beta) +
         hp.gamma * coupling_penalty(ds, beta, S, weights) + hp.eta * beta.l1_norm();
}

CoxCoefficients prox_gradient_update(const MultiStateDataset& ds, const CoxCoefficients& beta0,
                                     const Matrix& S, const Hyperparams& hp,
                                     const TransitionWeights& weights, ProxStats* stats) {
  check_dims(ds, beta0);
  CoxCoefficients beta = beta0;
  int total_iters = 0;
  double obj_start = 0.0, obj_end = 0.0;

  for (int k = 0; k < ds.num_transitions(); ++k) {
    Stratum s = build_stratum(ds, k);
    Matrix A;
    double coef = 0.0;
    if (hp.gamma > 0.0) {
      A = coupling_matrix(s.Xk, S);
      coef = hp.gamma * weights.w[k];
    }
    auto smooth = [&](const Vector& b) {
      double v = stratum_nll(ds, k, s, b);
      if (coef > 0.0) v += coef * b.dot(A * b);
      return v;
    };
    auto grad = [&](const Vector& b) {
      Vector g = stratum_gradient(ds, k, s, b);
      if (coef > 0.0) g += 2.0 * coef * (A * b);
      return g;
    };

    Vector b = beta.beta[k];
    double f = smooth(b);
    double F = f + hp.eta * b.cwiseAbs().sum();
    obj_start += F;
    double alpha = 1.0;
    for (int it = 0; it < hp.max_inner; ++it) {
      Vector g = grad(b);
      require(g.allFinite(), errc::numeric, "non-finite gradient in proximal update");
      Vector b_next;
      double f_next = 0.0;
      bool ok = false;
      for (int halvings = 0; halvings <= 50; ++halvings) {
        b_next = soft_threshold(b - alpha * g, alpha * hp.eta);
        Vector d = b_next - b;
        f_next = smooth(b_next);
        double bound = f + g.dot(d) + d.squaredNorm() / (2.0 * alpha);
        if (f_next <= bound + 1e-12 * (1.0 + std::abs(f))) {
          ok = true;
          break;
        }
        alpha *= 0.5;
      }
      require(ok, errc::step_size, "line search failed after 50 halvings");
      double F_next = f_next + hp.eta * b_next.cwiseAbs().sum();
      b = b_next;
      f = f_next;
      ++total_iters;
      double rel = std::abs(F_next - F) / std::max(1.0, std::abs(F));
      F = F_next;
      if (rel < hp.inner_tol) break;
      alpha = std::min(alpha * 2.0, 1e2);
    }
    obj_end += F;
    beta.beta[k] = b;
  }

  if (stats) {
    stats->iterations = total_iters;
    stats->objective_start = obj_start;
    stats->objective_end = obj_end;
  }
  return beta;
}

TransitionWeights estimate_weights(const MultiStateDataset& ds, const CoxCoefficients& beta) {
  check_dims(ds, beta);
  TransitionWeights tw;
  for (int k = 0; k < ds.num_transitions(); ++k) {
    Stratum s = build_stratum(ds, k);
    int p = ds.p_k(k);
    Matrix h = stratum_hessian(ds, k, s, beta.beta[k]);
    h.diagonal().array() += kHessianRidge;
    Eigen::LDLT<Matrix> ldlt(h);
    require(ldlt.info() == Eigen::Success, errc::conditioning,
            "information matrix factorization failed for transition " + std::to_string(k + 1));
    Matrix inv = ldlt.solve(Matrix::Identity(p, p));
    double var = inv.diagonal().mean();
    require(std::isfinite(var) && var > 0.0, errc::conditioning,
            "singular information matrix for transition " + std::to_string(k + 1));
    tw.w.push_back(std::max(1.0 / var, kWeightFloor));
  }
  return tw;
}

}  // namespace mscluster

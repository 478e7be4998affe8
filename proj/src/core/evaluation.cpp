#include "evaluation.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "rng.hpp"

namespace mscluster {

double chi_squared_upper_tail(double x, int df) {
  if (x <= 0.0) return 1.0;
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, x));
}

double c_index(const Vector& risk, const Vector& times, const Vector& events) {
  int n = static_cast<int>(times.size());
  require(risk.size() == n && events.size() == n, errc::validation, "c_index: length mismatch");
  double concordant = 0.0;
  long total = 0;
  for (int i = 0; i < n; ++i) {
    if (events(i) != 1.0) continue;
    for (int j = 0; j < n; ++j) {
      if (j == i || !(times(i) < times(j))) continue;
      ++total;
      if (risk(i) > risk(j))
        concordant += 1.0;
      else if (risk(i) == risk(j))
        concordant += 0.5;
    }
  }
  require(total > 0, errc::undefined_metric, "c_index: no comparable pairs");
  return concordant / total;
}

double rank_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), errc::validation, "rank_auc: length mismatch");
  int n = static_cast<int>(scores.size());
  long n_pos = std::count(labels.begin(), labels.end(), 1);
  long n_neg = n - n_pos;
  require(n_pos > 0 && n_neg > 0, errc::undefined_metric, "rank_auc: single-class labels");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double avg = 0.5 * (i + j) + 1.0;
    for (int m = i; m <= j; ++m) rank[idx[m]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (int t = 0; t < n; ++t)
    if (labels[t] == 1) rank_sum_pos += rank[t];
  double u = rank_sum_pos - 0.5 * n_pos * (n_pos + 1.0);
  return u / (static_cast<double>(n_pos) * n_neg);
}

double time_dependent_auroc(const Vector& risk, const Vector& times, const Vector& events,
                            std::vector<double> eval_times) {
  int n = static_cast<int>(times.size());
  require(risk.size() == n && events.size() == n, errc::validation, "auroc: length mismatch");
  if (eval_times.empty()) {
    std::vector<double> ev;
    for (int i = 0; i < n; ++i)
      if (events(i) == 1.0) ev.push_back(times(i));
    require(!ev.empty(), errc::undefined_metric, "auroc: no events");
    std::sort(ev.begin(), ev.end());
    for (int d = 1; d <= 9; ++d) {
      double q = 0.1 * d * (ev.size() - 1);
      int lo = static_cast<int>(q);
      double frac = q - lo;
      double t = lo + 1 < static_cast<int>(ev.size()) ? (1 - frac) * ev[lo] + frac * ev[lo + 1]
                                                      : ev[lo];
      eval_times.push_back(t);
    }
  }
  double sum = 0.0;
  int used = 0;
  for (double t : eval_times) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      if (events(i) == 1.0 && times(i) <= t) {
        scores.push_back(risk(i));
        labels.push_back(1);
      } else if (times(i) > t) {
        scores.push_back(risk(i));
        labels.push_back(0);
      }
    }
    long n_pos = std::count(labels.begin(), labels.end(), 1);
    if (n_pos == 0 || n_pos == static_cast<long>(labels.size())) continue;
    sum += rank_auc(scores, labels);
    ++used;
  }
  require(used > 0, errc::undefined_metric, "auroc: no evaluation time with cases and controls");
  return sum / used;
}

namespace {

struct Contingency {
  std::vector<std::vector<long>> table;
  std::vector<long> a_sizes, b_sizes;
  long n = 0;
};

Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
  require(a.size() == b.size() && a.size() >= 2, errc::validation,
          "label vectors must have equal length >= 2");
  std::map<int, int> amap, bmap;
  for (int v : a)
    if (!amap.count(v)) amap[v] = static_cast<int>(amap.size());
  for (int v : b)
    if (!bmap.count(v)) bmap[v] = static_cast<int>(bmap.size());
  Contingency c;
  c.table.assign(amap.size(), std::vector<long>(bmap.size(), 0));
  c.a_sizes.assign(amap.size(), 0);
  c.b_sizes.assign(bmap.size(), 0);
  c.n = static_cast<long>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.table[amap[a[i]]][bmap[b[i]]]++;
    c.a_sizes[amap[a[i]]]++;
    c.b_sizes[bmap[b[i]]]++;
  }
  return c;
}

double choose2(double m) { return 0.5 * m * (m - 1.0); }

}  // namespace

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  Contingency c = contingency(a, b);
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (std::size_t i = 0; i < c.table.size(); ++i)
    for (std::size_t j = 0; j < c.table[i].size(); ++j) sum_ij += choose2(c.table[i][j]);
  for (long ai : c.a_sizes) sum_a += choose2(ai);
  for (long bj : c.b_sizes) sum_b += choose2(bj);
  double total = choose2(static_cast<double>(c.n));
  double expected = sum_a * sum_b / total;
  double max_index = 0.5 * (sum_a + sum_b);
  double denom = max_index - expected;
  if (denom == 0.0) return 1.0;  // both partitions trivial and identical
  return (sum_ij - expected) / denom;
}

namespace {

double entropy(const std::vector<long>& sizes, long n) {
  double h = 0.0;
  for (long s : sizes)
    if (s > 0) h -= (static_cast<double>(s) / n) * std::log(static_cast<double>(s) / n);
  return h;
}

double mutual_information(const Contingency& c) {
  double mi = 0.0;
  for (std::size_t i = 0; i < c.table.size(); ++i)
    for (std::size_t j = 0; j < c.table[i].size(); ++j) {
      long nij = c.table[i][j];
      if (nij == 0) continue;
      double pij = static_cast<double>(nij) / c.n;
      mi += pij * std::log(static_cast<double>(nij) * c.n /
                           (static_cast<double>(c.a_sizes[i]) * c.b_sizes[j]));
    }
  return mi;
}

// Expected mutual information under the hypergeometric model of random
// labelings with fixed marginals.
double expected_mutual_information(const Contingency& c) {
  long n = c.n;
  std::vector<double> lgam(2 * n + 2);
  for (long i = 0; i < static_cast<long>(lgam.size()); ++i) lgam[i] = std::lgamma(i + 1.0);
  auto logfact = [&](long m) { return lgam[m]; };
  double emi = 0.0;
  for (long ai : c.a_sizes)
    for (long bj : c.b_sizes) {
      long lo = std::max(1L, ai + bj - n);
      long hi = std::min(ai, bj);
      for (long nij = lo; nij <= hi; ++nij) {
        double term1 = static_cast<double>(nij) / n;
        double term2 = std::log(static_cast<double>(n) * nij / (static_cast<double>(ai) * bj));
        double log_hyper = logfact(ai) + logfact(bj) + logfact(n - ai) + logfact(n - bj) -
                           logfact(n) - logfact(nij) - logfact(ai - nij) - logfact(bj - nij) -
                           logfact(n - ai - bj + nij);
        emi += term1 * term2 * std::exp(log_hyper);
      }
    }
  return emi;
}

}  // namespace

double adjusted_mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  Contingency c = contingency(a, b);
  if (c.a_sizes.size() == 1 && c.b_sizes.size() == 1) return 1.0;
  double mi = mutual_information(c);
  double emi = expected_mutual_information(c);
  double normalizer = std::max(entropy(c.a_sizes, c.n), entropy(c.b_sizes, c.n));
  double denom = normalizer - emi;
  constexpr double eps = 2.220446049250313e-16;
  if (denom < 0.0)
    denom = std::min(denom, -eps);
  else
    denom = std::max(denom, eps);
  return (mi - emi) / denom;
}

double edge_auc(const Matrix& s_learned, const Matrix& s_star, const Matrix& within_mask) {
  int n = static_cast<int>(s_learned.rows());
  require(s_star.rows() == n && s_star.cols() == n && within_mask.rows() == n &&
              within_mask.cols() == n && s_learned.cols() == n,
          errc::validation, "edge_auc: shape mismatch");
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      scores.push_back(s_learned(i, j));
      labels.push_back(within_mask(i, j) != 0.0 ? 1 : 0);
    }
  return rank_auc(scores, labels);
}

SurvivalCurve kaplan_meier(const Vector& times, const Vector& events) {
  int n = static_cast<int>(times.size());
  require(n > 0, errc::validation, "kaplan_meier: empty input");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return times(a) < times(b); });
  SurvivalCurve curve;
  double s = 1.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && times(idx[j + 1]) == times(idx[i])) ++j;
    int at_risk = n - i;
    int d = 0;
    for (int m = i; m <= j; ++m)
      if (events(idx[m]) == 1.0) ++d;
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / at_risk;
      curve.times.push_back(times(idx[i]));
      curve.survival.push_back(s);
      curve.at_risk.push_back(at_risk);
    }
    i = j + 1;
  }
  return curve;
}

LogRankResult logrank_test(const Vector& times, const Vector& events,
                           const std::vector<int>& groups) {
  int n = static_cast<int>(times.size());
  require(static_cast<int>(groups.size()) == n && events.size() == n, errc::validation,
          "logrank: length mismatch");
  std::map<int, int> gmap;
  for (int g : groups)
    if (!gmap.count(g)) gmap[g] = static_cast<int>(gmap.size());
  int G = static_cast<int>(gmap.size());
  require(G >= 2, errc::validation, "logrank needs at least 2 groups");
  long n_events = 0;
  for (int i = 0; i < n; ++i)
    if (events(i) == 1.0) ++n_events;
  require(n_events >= 1, errc::validation, "logrank needs at least one event");

  std::set<double> event_times;
  for (int i = 0; i < n; ++i)
    if (events(i) == 1.0) event_times.insert(times(i));

  Vector observed = Vector::Zero(G);
  Vector expected = Vector::Zero(G);
  Matrix v = Matrix::Zero(G, G);
  for (double t : event_times) {
    Vector n_g = Vector::Zero(G);
    Vector d_g = Vector::Zero(G);
    for (int i = 0; i < n; ++i) {
      int g = gmap[groups[i]];
      if (times(i) >= t) n_g(g) += 1.0;
      if (times(i) == t && events(i) == 1.0) d_g(g) += 1.0;
    }
    double nt = n_g.sum();
    double dt = d_g.sum();
    if (nt <= 0.0) continue;
    observed += d_g;
    expected += dt * n_g / nt;
    if (nt > 1.0) {
      double factor = dt * (nt - dt) / (nt - 1.0);
      for (int g = 0; g < G; ++g)
        for (int h = 0; h < G; ++h) {
          double delta = g == h ? 1.0 : 0.0;
          v(g, h) += factor * (delta * n_g(g) / nt - n_g(g) * n_g(h) / (nt * nt));
        }
    }
  }

  Vector diff = (observed - expected).head(G - 1);
  Matrix vsub = v.topLeftCorner(G - 1, G - 1);
  // pseudo-inverse keeps degenerate designs (identical groups) at chi2 ~ 0
  Eigen::JacobiSVD<Matrix> svd(vsub, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double tol = 1e-12 * std::max(1.0, svd.singularValues().maxCoeff());
  Vector inv_sv = svd.singularValues();
  for (int i = 0; i < inv_sv.size(); ++i) inv_sv(i) = inv_sv(i) > tol ? 1.0 / inv_sv(i) : 0.0;
  Vector solved = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose() * diff;
  LogRankResult res;
  res.chi2 = std::max(0.0, diff.dot(solved));
  res.df = G - 1;
  res.p = chi_squared_upper_tail(res.chi2, res.df);
  return res;
}

std::vector<double> sparsity_ratio(const CoxCoefficients& beta, double zero_tol) {
  require(zero_tol >= 0.0, errc::validation, "zero_tol must be nonnegative");
  std::vector<double> out;
  for (auto& b : beta.beta) {
    int active = 0;
    for (Eigen::Index i = 0; i < b.size(); ++i)
      if (std::abs(b(i)) > zero_tol) ++active;
    out.push_back(b.size() == 0 ? 0.0 : static_cast<double>(active) / b.size());
  }
  return out;
}

namespace {

// L1-penalized logistic regression fit by ISTA with backtracking; returns the
// coefficient vector (no intercept penalty).
struct LogisticFit {
  Vector beta;
  double intercept = 0.0;
};

LogisticFit logistic_lasso(const Matrix& X, const std::vector<int>& y, double lambda,
                           int max_iter = 500) {
  int n = static_cast<int>(X.rows());
  int p = static_cast<int>(X.cols());
  Vector beta = Vector::Zero(p);
  double b0 = 0.0;
  Vector yv(n);
  for (int i = 0; i < n; ++i) yv(i) = y[i];
  auto loss = [&](const Vector& b, double c0) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      double eta = X.row(i).dot(b) + c0;
      v += std::log1p(std::exp(-std::abs(eta))) + std::max(eta, 0.0) - yv(i) * eta;
    }
    return v / n;
  };
  double alpha = 1.0;
  double f = loss(beta, b0);
  for (int it = 0; it < max_iter; ++it) {
    Vector eta = (X * beta).array() + b0;
    Vector prob(n);
    for (int i = 0; i < n; ++i) prob(i) = 1.0 / (1.0 + std::exp(-eta(i)));
    Vector g = X.transpose() * (prob - yv) / n;
    double g0 = (prob - yv).mean();
    bool ok = false;
    Vector beta_next;
    double b0_next = 0.0, f_next = 0.0;
    for (int h = 0; h <= 60; ++h) {
      beta_next = soft_threshold(beta - alpha * g, alpha * lambda);
      b0_next = b0 - alpha * g0;
      Vector d = beta_next - beta;
      double d0 = b0_next - b0;
      f_next = loss(beta_next, b0_next);
      double bound = f + g.dot(d) + g0 * d0 + (d.squaredNorm() + d0 * d0) / (2.0 * alpha);
      if (f_next <= bound + 1e-12) {
        ok = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!ok) break;
    double change = (beta_next - beta).cwiseAbs().maxCoeff() + std::abs(b0_next - b0);
    beta = beta_next;
    b0 = b0_next;
    f = f_next;
    if (change < 1e-7) break;
    alpha = std::min(alpha * 2.0, 1e2);
  }
  return {beta, b0};
}

std::vector<int> stratified_fold_ids(const std::vector<int>& y, int folds, Rng& rng) {
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(static_cast<int>(i));
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<int> fold(y.size(), 0);
  for (std::size_t t = 0; t < pos.size(); ++t) fold[pos[t]] = static_cast<int>(t % folds);
  for (std::size_t t = 0; t < neg.size(); ++t) fold[neg[t]] = static_cast<int>(t % folds);
  return fold;
}

double welch_t_pvalue(const std::vector<double>& g0, const std::vector<double>& g1) {
  auto mean_var = [](const std::vector<double>& v) {
    double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= (v.size() - 1);
    return std::make_pair(m, s2);
  };
  auto [m0, v0] = mean_var(g0);
  auto [m1, v1] = mean_var(g1);
  double se2 = v0 / g0.size() + v1 / g1.size();
  if (se2 <= 0.0) return 1.0;
  double t = (m1 - m0) / std::sqrt(se2);
  double df = se2 * se2 /
              (v0 * v0 / (g0.size() * g0.size() * (g0.size() - 1.0)) +
               v1 * v1 / (g1.size() * g1.size() * (g1.size() - 1.0)));
  if (!(df > 0.0)) return 1.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

FeatureAudit cluster_feature_audit(const MultiStateDataset& ds, const std::vector<int>& labels,
                                   int folds) {
  require(static_cast<int>(labels.size()) == ds.n(), errc::validation,
          "audit: label count differs from n");
  require(folds >= 2, errc::validation, "audit needs folds >= 2");
  std::set<int> distinct(labels.begin(), labels.end());
  require(distinct.size() >= 2, errc::validation, "audit needs at least 2 clusters");

  FeatureAudit audit;
  std::vector<int> usable;
  for (int j = 0; j < ds.p(); ++j) {
    double mean = ds.X.col(j).mean();
    double sd = std::sqrt((ds.X.col(j).array() - mean).square().sum() / (ds.n() - 1));
    if (sd <= 1e-12)
      audit.excluded.push_back(ds.feature_names[j]);
    else
      usable.push_back(j);
  }
  require(!usable.empty(), errc::empty_feature, "audit: every feature constant");
  Matrix X(ds.n(), usable.size());
  for (std::size_t j = 0; j < usable.size(); ++j) X.col(j) = ds.X.col(usable[j]);

  double auc_sum = 0.0;
  int audits = 0;
  std::set<std::string> significant_names;
  for (int cl : distinct) {
    std::vector<int> y(ds.n());
    for (int i = 0; i < ds.n(); ++i) y[i] = labels[i] == cl ? 1 : 0;
    long n_pos = std::count(y.begin(), y.end(), 1);
    long n_neg = ds.n() - n_pos;
    require(n_pos >= 2 && n_neg >= 2, errc::validation,
            "audit: cluster too small for cross-validation");
    int eff_folds = static_cast<int>(std::min<long>(folds, std::min(n_pos, n_neg)));

    Rng rng(0x0a0d17u + static_cast<unsigned>(cl));
    auto fold = stratified_fold_ids(y, eff_folds, rng);

    double lambda_max = (X.transpose() * (Eigen::Map<const Eigen::VectorXi>(y.data(), y.size())
                                              .cast<double>()
                                              .array() -
                                          static_cast<double>(n_pos) / ds.n())
                                             .matrix())
                            .cwiseAbs()
                            .maxCoeff() /
                        ds.n();
    std::vector<double> lambdas;
    for (int t = 0; t < 8; ++t) lambdas.push_back(lambda_max * std::pow(10.0, -0.4 * t));

    double best_auc = -1.0;
    for (double lam : lambdas) {
      double fold_auc = 0.0;
      int fold_used = 0;
      for (int f = 0; f < eff_folds; ++f) {
        std::vector<int> train, test;
        for (int i = 0; i < ds.n(); ++i) (fold[i] == f ? test : train).push_back(i);
        Matrix Xtr(train.size(), X.cols());
        std::vector<int> ytr(train.size());
        for (std::size_t t = 0; t < train.size(); ++t) {
          Xtr.row(t) = X.row(train[t]);
          ytr[t] = y[train[t]];
        }
        auto fitted = logistic_lasso(Xtr, ytr, lam);
        std::vector<double> scores;
        std::vector<int> lab;
        for (int i : test) {
          scores.push_back(X.row(i).dot(fitted.beta) + fitted.intercept);
          lab.push_back(y[i]);
        }
        long pos = std::count(lab.begin(), lab.end(), 1);
        if (pos == 0 || pos == static_cast<long>(lab.size())) continue;
        fold_auc += rank_auc(scores, lab);
        ++fold_used;
      }
      require(fold_used > 0, errc::validation, "audit: no usable validation fold");
      fold_auc /= fold_used;
      if (fold_auc > best_auc) best_auc = fold_auc;
    }
    auc_sum += best_auc;
    ++audits;

    for (std::size_t j = 0; j < usable.size(); ++j) {
      std::vector<double> g0, g1;
      for (int i = 0; i < ds.n(); ++i) (y[i] == 1 ? g1 : g0).push_back(X(i, j));
      if (g0.size() < 2 || g1.size() < 2) continue;
      double p = welch_t_pvalue(g0, g1);
      if (p <= 0.05) significant_names.insert(ds.feature_names[usable[j]] + "\t" +
                                              std::to_string(p));
    }
  }
  audit.auc = auc_sum / audits;
  for (auto& s : significant_names) {
    auto tab = s.find('\t');
    audit.significant.push_back({s.substr(0, tab), std::stod(s.substr(tab + 1))});
  }
  return audit;
}

}  // namespace mscluster

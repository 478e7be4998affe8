#pragma once

#include <string>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "survival.hpp"

namespace mscluster {

// Harrell's concordance: among pairs where i has an event and T_i < T_j, the
// fraction with risk_i > risk_j; risk ties score 0.5.
double c_index(const Vector& risk_scores, const Vector& times, const Vector& events);

// Cumulative/dynamic AUROC averaged over evaluation times; cases have an event
// by t, controls are still event-free past t. Empty eval_times selects the
// inner deciles of the observed event times.
double time_dependent_auroc(const Vector& risk_scores, const Vector& times, const Vector& events,
                            std::vector<double> eval_times = {});

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);
double adjusted_mutual_information(const std::vector<int>& a, const std::vector<int>& b);

// AUROC of off-diagonal similarity scores against the same-cluster mask.
double edge_auc(const Matrix& s_learned, const Matrix& s_star, const Matrix& within_mask);

struct SurvivalCurve {
  std::vector<double> times;     // distinct event times, ascending
  std::vector<double> survival;  // product-limit value after each time
  std::vector<int> at_risk;      // risk-set size at each time
  std::string group;
};

SurvivalCurve kaplan_meier(const Vector& times, const Vector& events);

struct LogRankResult {
  double chi2 = 0.0;
  int df = 0;
  double p = 1.0;
};

LogRankResult logrank_test(const Vector& times, const Vector& events, const std::vector<int>& groups);

std::vector<double> sparsity_ratio(const CoxCoefficients& beta, double zero_tol = 1e-8);

struct FeatureAudit {
  double auc = 0.0;  // cross-validated AUC, mean over one-vs-rest audits
  struct Feature {
    std::string name;
    double p_value;
  };
  std::vector<Feature> significant;  // p <= 0.05 by two-sample t-test
  std::vector<std::string> excluded; // constant features left out
};

FeatureAudit cluster_feature_audit(const MultiStateDataset& ds, const std::vector<int>& labels,
                                   int folds = 5);

// Mann-Whitney AUROC of scores against binary labels (average ranks on ties).
double rank_auc(const std::vector<double>& scores, const std::vector<int>& labels);

double chi_squared_upper_tail(double x, int df);

}  // namespace mscluster

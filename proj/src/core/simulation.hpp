#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"

namespace mscluster {

struct SimulationConfig {
  int n = 500;
  int p = 30;
  int K = 2;  // transitions along the chain 0 -> 1 -> ... -> K
  int C = 4;
  std::vector<double> pi;          // cluster prior; empty = uniform
  double tau = 1.0;                // sd of cluster mean entries
  double rho = 0.0;                // AR(1) feature correlation, 0 disables
  std::vector<double> sigma_diag;  // per-feature sd; empty = all ones
  double s = 0.2;                  // fraction of nonzero coordinates in delta_k
  std::vector<double> weibull_scale;  // alpha_k; empty = all ones
  std::vector<double> weibull_shape;  // nu_k; empty = all ones
  double target_censoring = 0.25;
  double sigma_x = -1.0;       // S* covariate bandwidth; negative = tune
  double sigma_lambda = -1.0;  // S* risk bandwidth; negative = tune
  double target_gap = 0.05;    // within-minus-between similarity target for tuning
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<double> effective_pi() const;
  std::vector<double> effective_sigma_diag() const;
  std::vector<double> effective_scale() const;
  std::vector<double> effective_shape() const;
};

struct SimulatedCohort {
  MultiStateDataset ds;
  std::vector<int> true_clusters;
  std::vector<Vector> true_beta;  // per transition
  Matrix s_star;                  // row-stochastic, zero diagonal
  double q_used = 0.0;            // censoring horizon
  double sigma_x = 0.0;
  double sigma_lambda = 0.0;
  double achieved_gap = 0.0;
  std::vector<std::string> warnings;
};

SimulatedCohort generate(const SimulationConfig& cfg);

// Censoring horizon for C ~ U(0, q): the expected censoring rate given the
// realized terminal times is mean_i min(T_i, q) / q; bisection drives it to
// the target (tolerance 0.01).
double calibrate_censoring(const std::vector<double>& terminal_times, double target);

// Softmax kernel over covariate and projected-risk distances; the self term is
// excluded from support and normalization.
Matrix ground_truth_similarity(const Matrix& X, const std::vector<Vector>& true_beta,
                               double sigma_x, double sigma_lambda);

// Grid search over log-spaced bandwidth pairs for the within-vs-between mean
// similarity gap closest to target_gap.
struct BandwidthTuning {
  double sigma_x = 0.0;
  double sigma_lambda = 0.0;
  double gap = 0.0;
  bool flagged = false;  // every candidate gap fell below target/2
};

BandwidthTuning tune_kernel_bandwidths(const Matrix& X, const std::vector<Vector>& true_beta,
                                       const std::vector<int>& clusters, double target_gap);

double similarity_gap(const Matrix& s_star, const std::vector<int>& clusters);

}  // namespace mscluster

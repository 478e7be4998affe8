#pragma once

#include <string>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "hyperparams.hpp"

namespace mscluster {

struct CoxCoefficients {
  std::vector<Vector> beta;  // per transition, length p_k

  static CoxCoefficients zeros(const MultiStateDataset& ds);
  double l1_norm() const;
  int l0_norm(double zero_tol = 1e-8) const;
};

struct TransitionWeights {
  std::vector<double> w;  // per transition, > 0
};

// Negative Breslow log partial likelihood summed over transitions. Tied event
// times share the risk set. Strata with zero events contribute zero and add a
// warning.
double cox_neg_log_partial_likelihood(const MultiStateDataset& ds, const CoxCoefficients& beta,
                                      std::vector<std::string>* warnings = nullptr);

// Gradient of the smooth part of the Step-1 objective: the Cox term plus the
// similarity coupling 2*gamma*w_k * X' M z with M = diag(r+c) - S - S' and
// z = X^k beta_k.
std::vector<Vector> smooth_gradient(const MultiStateDataset& ds, const CoxCoefficients& beta,
                                    const Matrix& S, double gamma, const TransitionWeights& weights);

Vector soft_threshold(const Vector& v, double t);

struct ProxStats {
  int iterations = 0;
  double objective_start = 0.0;
  double objective_end = 0.0;
};

// ISTA on the Step-1 objective with backtracking (halving) line search against
// the quadratic majorizer; the returned coefficients never increase the
// objective relative to the input.
CoxCoefficients prox_gradient_update(const MultiStateDataset& ds, const CoxCoefficients& beta,
                                     const Matrix& S, const Hyperparams& hp,
                                     const TransitionWeights& weights, ProxStats* stats = nullptr);

// Step-1 objective value: Cox nll + coupling penalty + eta * ||beta||_1.
double step1_objective(const MultiStateDataset& ds, const CoxCoefficients& beta, const Matrix& S,
                       const Hyperparams& hp, const TransitionWeights& weights);

// Coupling penalty sum_k w_k sum_{ij} S_ij (beta_k'(X_i^k - X_j^k))^2.
double coupling_penalty(const MultiStateDataset& ds, const CoxCoefficients& beta, const Matrix& S,
                        const TransitionWeights& weights);

// w_k = 1 / mean(diag((H_k + ridge I)^-1)) from the observed information of
// the Breslow partial likelihood; zero-event strata get the floor weight.
TransitionWeights estimate_weights(const MultiStateDataset& ds, const CoxCoefficients& beta);

constexpr double kWeightFloor = 1e-6;
constexpr double kHessianRidge = 1e-8;

}  // namespace mscluster

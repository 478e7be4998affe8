#pragma once

#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "hyperparams.hpp"
#include "survival.hpp"

namespace mscluster {

// Pairwise patient distances split into the covariate and the hazard-ratio
// components; d = mu * d_cov + d_msm entrywise.
struct DistanceMatrix {
  Matrix d;
  Matrix d_cov;
  Matrix d_msm;
  double mu = 0.0;
};

struct SimilarityMatrix {
  Matrix S;                          // n x n, rows sum to 1, zero diagonal
  Vector row_lambda;                 // per-row lambda (adaptive mode); global lambda otherwise
  std::vector<uint8_t> row_fallback; // rows solved by the uniform fallback
  bool adaptive = true;

  int n() const { return static_cast<int>(S.rows()); }
  double lambda_bar() const;  // row mean, clamped at zero

  static SimilarityMatrix uniform(int n);
};

struct GraphLaplacian {
  Matrix L;        // D - (S + S')/2
  Vector degrees;  // diagonal of D
};

Matrix covariate_distance(const Matrix& X);

Matrix msm_distance(const MultiStateDataset& ds, const CoxCoefficients& beta,
                    const TransitionWeights& weights);

DistanceMatrix combine_distance(Matrix d_cov, Matrix d_msm, double mu);

// Row-wise closed-form minimizer of gamma * d's + lambda * ||s||^2 over the
// probability simplex. Adaptive mode picks lambda_i so each row keeps exactly
// kappa neighbors; rows whose lambda_i degenerates to <= 0 fall back to
// uniform weights over the kappa nearest and record a warning.
SimilarityMatrix update_similarity(const DistanceMatrix& dist, const Hyperparams& hp,
                                   std::vector<std::string>* warnings = nullptr);

GraphLaplacian build_laplacian(const SimilarityMatrix& S);

// Union-find components over edges with (S_ij + S_ji)/2 > edge_tol; labels in
// order of smallest member index.
std::pair<int, std::vector<int>> connected_components(const SimilarityMatrix& S, double edge_tol);

}  // namespace mscluster

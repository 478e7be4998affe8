#pragma once

#include <string>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "graph.hpp"
#include "hyperparams.hpp"
#include "spectral.hpp"
#include "survival.hpp"

namespace mscluster {

struct StepRecord {
  int iteration;  // 1-based outer iteration; 0 for initialization
  int step;       // 0 = iteration start (weights refreshed), 1..3 = after that step
  double objective;
};

struct FitResult {
  CoxCoefficients beta;
  TransitionWeights weights;
  SimilarityMatrix S;
  SpectralEmbedding U;
  ClusterAssignment clusters;
  bool clusters_valid = true;
  std::vector<double> objective_trace;  // end-of-iteration objective values
  std::vector<StepRecord> step_trace;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

// Joint objective: Cox nll + eta * ||beta||_1 + gamma * <d, S> + lambda_bar *
// ||S||_F^2 + alpha * Tr(U' L U), with d the combined distance under the given
// beta and weights.
double objective(const MultiStateDataset& ds, const CoxCoefficients& beta,
                 const TransitionWeights& weights, const SimilarityMatrix& S, const Matrix& U,
                 const Hyperparams& hp);

// Alternating minimization over beta (proximal gradient), S (closed-form rows)
// and U (smallest eigenvectors); weights refresh at the top of each outer
// iteration from the previous beta.
FitResult fit(const MultiStateDataset& ds, const Hyperparams& hp,
              const CoxCoefficients* warm_start = nullptr);

enum class BaselineVariant { cox_only, fixed_rbf_graph, knn_graph };

FitResult baseline_fit(const MultiStateDataset& ds, BaselineVariant variant, const Hyperparams& hp);

// Frozen baseline graphs, exposed for tests.
SimilarityMatrix rbf_similarity(const Matrix& X);
SimilarityMatrix knn_similarity(const Matrix& X, int kappa);

struct GridCandidate {
  Hyperparams hp;
  double c_index = 0.0;
  double logrank_p = 1.0;
  bool passed_gate = false;
  bool converged = false;
  int iterations = 0;
  int beta_l0 = 0;
  double final_objective = 0.0;
};

struct GridSearchResult {
  std::vector<GridCandidate> candidates;
  int selected = -1;  // index into candidates, or -1 when nothing passes the gate
};

// Fits each configuration, gates on cluster log-rank p < 0.05 for the chosen
// transition, then selects the highest c-index; ties break on smaller ||beta||_0
// then grid order.
GridSearchResult grid_search(const MultiStateDataset& ds, const std::vector<Hyperparams>& grid,
                             int transition_for_c_index);

// Risk scores beta_k' X_i^k for one transition.
Vector risk_scores(const MultiStateDataset& ds, const CoxCoefficients& beta, int k);

}  // namespace mscluster

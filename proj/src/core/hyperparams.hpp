#pragma once

#include "common.hpp"

namespace mscluster {

struct Hyperparams {
  double eta = 0.01;     // L1 strength on the transition coefficients
  double gamma = 0.001;  // similarity coupling strength
  double mu = 0.1;       // covariate-distance weight inside d(i,j)

  // Graph regularization: adaptive per-row lambda targeting kappa neighbors,
  // or one global lambda with the row normalizer found by bisection. Global
  // mode is the default: with a single lambda the S update is an exact
  // descent step on the recorded objective.
  bool adaptive = false;
  int kappa = 15;
  double lambda = 0.5;

  double alpha_spec = 1.0;  // spectral penalty on Tr(U' L U)
  int c = 4;                // target connected components / clusters

  double outer_tol = 1e-5;
  int max_outer = 50;
  double inner_tol = 1e-6;
  int max_inner = 200;
  double edge_tol = 1e-8;

  void validate(int n) const {
    require(eta >= 0 && gamma >= 0 && mu >= 0 && alpha_spec >= 0, errc::validation,
            "penalty weights must be nonnegative");
    if (adaptive)
      require(kappa >= 1 && kappa <= n - 1, errc::validation, "kappa must be in [1, n-1]");
    else
      require(lambda > 0, errc::validation, "global lambda must be positive");
    require(c >= 2 && c <= n - 1, errc::validation, "c must be in [2, n-1]");
    require(outer_tol > 0 && inner_tol > 0, errc::validation, "tolerances must be positive");
    require(max_outer >= 1 && max_inner >= 1, errc::validation, "iteration caps must be >= 1");
    require(edge_tol >= 0, errc::validation, "edge_tol must be nonnegative");
  }
};

}  // namespace mscluster

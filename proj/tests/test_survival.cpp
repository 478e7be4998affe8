#include <doctest.h>

#include <cmath>

#include "core/rng.hpp"
#include "core/survival.hpp"
#include "helpers.hpp"

using namespace mscluster;
using namespace mscluster::testing;

namespace {

MultiStateDataset one_transition(const std::vector<double>& x, const std::vector<double>& t,
                                 const std::vector<double>& e) {
  int n = static_cast<int>(x.size());
  MultiStateDataset ds;
  ds.spec = TransitionSpec::chain(1);
  ds.X.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    ds.X(i, 0) = x[i];
    ds.patient_ids.push_back("p" + std::to_string(i));
  }
  ds.feature_names = {"x"};
  ds.transition_cols = {{0}};
  ds.time = {Eigen::Map<const Vector>(t.data(), n)};
  ds.event = {Eigen::Map<const Vector>(e.data(), n)};
  ds.at_risk = {Vector::Ones(n)};
  ds.validate();
  return ds;
}

// Direct evaluation of the Breslow formula by scanning risk sets, independent
// of the production accumulation order.
double brute_force_nll(const MultiStateDataset& ds, const CoxCoefficients& beta) {
  double nll = 0.0;
  for (int k = 0; k < ds.num_transitions(); ++k) {
    Matrix Xk = ds.transition_matrix(k);
    Vector eta = Xk * beta.beta[k];
    for (int i = 0; i < ds.n(); ++i) {
      if (ds.event[k](i) != 1.0) continue;
      double denom = 0.0;
      for (int j = 0; j < ds.n(); ++j)
        if (ds.at_risk[k](j) == 1.0 && ds.time[k](j) >= ds.time[k](i)) denom += std::exp(eta(j));
      nll -= eta(i) - std::log(denom);
    }
  }
  return nll;
}

}  // namespace

TEST_CASE("cox nll trivial values") {
  SUBCASE("2 patients, event at earlier time, beta=0 gives log 2") {
    auto ds = one_transition({0.3, -0.2}, {1.0, 2.0}, {1, 0});
    auto beta = CoxCoefficients::zeros(ds);
    CHECK(cox_neg_log_partial_likelihood(ds, beta) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("n all-event distinct times at beta=0 gives sum of log m") {
    int n = 7;
    std::vector<double> x(n), t(n), e(n, 1.0);
    for (int i = 0; i < n; ++i) {
      x[i] = 0.1 * i;
      t[i] = i + 1.0;
    }
    auto ds = one_transition(x, t, e);
    auto beta = CoxCoefficients::zeros(ds);
    double expect = 0.0;
    for (int m = 1; m <= n; ++m) expect += std::log(static_cast<double>(m));
    CHECK(cox_neg_log_partial_likelihood(ds, beta) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("5-patient fixture at beta=0.5 matches independent evaluation") {
    auto ds = one_transition({1.2, -0.7, 0.4, 2.0, -1.5}, {3.0, 1.0, 4.0, 2.0, 5.0},
                             {1, 1, 0, 1, 1});
    CoxCoefficients beta;
    beta.beta.push_back(Vector::Constant(1, 0.5));
    CHECK(cox_neg_log_partial_likelihood(ds, beta) ==
          doctest::Approx(brute_force_nll(ds, beta)).epsilon(1e-12));
  }
  SUBCASE("zero-event stratum contributes zero and warns") {
    auto ds = one_transition({1.0, 2.0}, {1.0, 2.0}, {0, 0});
    auto beta = CoxCoefficients::zeros(ds);
    std::vector<std::string> warnings;
    CHECK(cox_neg_log_partial_likelihood(ds, beta, &warnings) == 0.0);
    CHECK(warnings.size() == 1);
  }
  SUBCASE("ties share the risk set (Breslow)") {
    auto ds = one_transition({0.5, -0.5, 1.0}, {1.0, 1.0, 2.0}, {1, 1, 0});
    CoxCoefficients beta;
    beta.beta.push_back(Vector::Constant(1, 0.7));
    CHECK(cox_neg_log_partial_likelihood(ds, beta) ==
          doctest::Approx(brute_force_nll(ds, beta)).epsilon(1e-12));
  }
}

TEST_CASE("nll invariant to shifting all event times") {
  Rng rng(11);
  auto ds = random_dataset(rng, 9, 3, 2);
  CoxCoefficients beta;
  for (int k = 0; k < 2; ++k) {
    Vector b(3);
    for (int j = 0; j < 3; ++j) b(j) = rng.normal() * 0.3;
    beta.beta.push_back(b);
  }
  double base = cox_neg_log_partial_likelihood(ds, beta);
  MultiStateDataset shifted = ds;
  for (int k = 0; k < 2; ++k) shifted.time[k].array() += 17.25;
  CHECK(cox_neg_log_partial_likelihood(shifted, beta) == base);
}

TEST_CASE("nll is stable for extreme linear predictors") {
  auto ds = one_transition({30.0, -30.0, 5.0}, {1.0, 2.0, 3.0}, {1, 1, 1});
  CoxCoefficients beta;
  beta.beta.push_back(Vector::Constant(1, 3.0));  // eta spread 180
  double v = cox_neg_log_partial_likelihood(ds, beta);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(brute_force_nll(ds, beta)).epsilon(1e-9));
}

TEST_CASE("smooth gradient matches finite differences") {
  Rng rng(23);
  SUBCASE("gamma=0 beta=0 symmetric two-patient fixture") {
    auto ds = one_transition({1.0, -1.0}, {1.0, 2.0}, {1, 0});
    auto beta = CoxCoefficients::zeros(ds);
    TransitionWeights w{{1.0}};
    Matrix S = Matrix::Zero(2, 2);
    auto g = smooth_gradient(ds, beta, S, 0.0, w);
    // event at t=1 with risk set {both}: gradient = -(x_0 - mean(x)) = -(1 - 0)
    CHECK(g[0](0) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("identical patients zero out the penalty gradient") {
    auto ds = one_transition({0.8, 0.8, 0.8}, {1.0, 2.0, 3.0}, {1, 1, 1});
    CoxCoefficients beta;
    beta.beta.push_back(Vector::Constant(1, 0.4));
    TransitionWeights w{{2.0}};
    Matrix S = random_row_stochastic(rng, 3);
    auto with_pen = smooth_gradient(ds, beta, S, 5.0, w);
    auto without = smooth_gradient(ds, beta, S, 0.0, w);
    CHECK((with_pen[0] - without[0]).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("random instances match central differences") {
    for (int rep = 0; rep < 25; ++rep) {
      int n = 4 + rng.uniform_int(7);
      int p = 1 + rng.uniform_int(4);
      int K = 1 + rng.uniform_int(3);
      auto ds = random_dataset(rng, n, p, K);
      CoxCoefficients beta;
      for (int k = 0; k < K; ++k) {
        Vector b(p);
        for (int j = 0; j < p; ++j) b(j) = 0.5 * rng.normal();
        beta.beta.push_back(b);
      }
      TransitionWeights w;
      for (int k = 0; k < K; ++k) w.w.push_back(0.2 + rng.uniform01());
      Matrix S = random_row_stochastic(rng, n);
      double gamma = rng.uniform01();
      auto g = smooth_gradient(ds, beta, S, gamma, w);
      for (int k = 0; k < K; ++k) {
        auto f = [&](const Vector& bk) {
          CoxCoefficients local = beta;
          local.beta[k] = bk;
          return cox_neg_log_partial_likelihood(ds, local) +
                 gamma * coupling_penalty(ds, local, S, w);
        };
        Vector fd = finite_difference(f, beta.beta[k]);
        double scale = std::max(1.0, fd.lpNorm<Eigen::Infinity>());
        CHECK((g[k] - fd).lpNorm<Eigen::Infinity>() / scale < 1e-5);
      }
    }
  }
}

TEST_CASE("soft threshold") {
  Vector v(3);
  v << 1.5, 0.3, -2.0;
  Vector out = soft_threshold(v, 0.5);
  CHECK(out(0) == doctest::Approx(1.0));
  CHECK(out(1) == 0.0);
  CHECK(out(2) == doctest::Approx(-1.5));
  CHECK_THROWS_AS(soft_threshold(v, -0.1), Error);
}

TEST_CASE("proximal gradient update") {
  Rng rng(31);
  auto ds = random_dataset(rng, 12, 3, 2);
  auto [std_ds, rep] = standardize(ds);
  Matrix S = random_row_stochastic(rng, 12);
  TransitionWeights w{{1.0, 1.0}};

  SUBCASE("huge eta drives beta exactly to zero") {
    Hyperparams hp;
    hp.eta = 1e6;
    hp.gamma = 0.5;
    auto beta = prox_gradient_update(std_ds, CoxCoefficients::zeros(std_ds), S, hp, w);
    for (auto& b : beta.beta) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("eta=0 gamma=0 converges to the Newton MLE") {
    Hyperparams hp;
    hp.eta = 0.0;
    hp.gamma = 0.0;
    hp.max_inner = 20000;
    hp.inner_tol = 1e-14;
    auto mle = newton_cox_mle(std_ds);
    auto beta = prox_gradient_update(std_ds, CoxCoefficients::zeros(std_ds), S, hp, w);
    for (int k = 0; k < 2; ++k)
      CHECK((beta.beta[k] - mle.beta[k]).lpNorm<Eigen::Infinity>() < 1e-4);
  }
  SUBCASE("single update never increases the step-1 objective") {
    for (int rep2 = 0; rep2 < 10; ++rep2) {
      Hyperparams hp;
      hp.eta = 0.05 * rep2;
      hp.gamma = 0.3;
      hp.max_inner = 1 + rep2;
      auto start = CoxCoefficients::zeros(std_ds);
      double before = step1_objective(std_ds, start, S, hp, w);
      auto beta = prox_gradient_update(std_ds, start, S, hp, w);
      double after = step1_objective(std_ds, beta, S, hp, w);
      CHECK(after <= before + 1e-12 * std::max(1.0, std::abs(before)));
    }
  }
  SUBCASE("grows no L1 norm when eta increases (shrinkage path)") {
    double last = -1.0;
    for (double eta : {0.0, 0.05, 0.2, 1.0, 5.0}) {
      Hyperparams hp;
      hp.eta = eta;
      hp.gamma = 0.2;
      hp.max_inner = 5000;
      hp.inner_tol = 1e-12;
      auto beta = prox_gradient_update(std_ds, CoxCoefficients::zeros(std_ds), S, hp, w);
      double l1 = beta.l1_norm();
      if (last >= 0.0) CHECK(l1 <= last + 1e-6);
      last = l1;
    }
  }
}

TEST_CASE("estimate_weights") {
  SUBCASE("few events means smaller weight than many events") {
    auto sparse = one_transition({1.0, -1.0, 0.5, -0.5, 0.2, -0.2}, {1, 2, 3, 4, 5, 6},
                                 {1, 0, 0, 0, 0, 0});
    auto dense = one_transition({1.0, -1.0, 0.5, -0.5, 0.2, -0.2}, {1, 2, 3, 4, 5, 6},
                                {1, 1, 1, 1, 1, 0});
    auto ws = estimate_weights(sparse, CoxCoefficients::zeros(sparse));
    auto wd = estimate_weights(dense, CoxCoefficients::zeros(dense));
    CHECK(ws.w[0] < wd.w[0]);
  }
  SUBCASE("duplicating every patient roughly doubles the weight") {
    auto ds = one_transition({1.0, -0.5, 0.3, -1.2}, {1, 2, 3, 4}, {1, 1, 1, 0});
    auto twice = one_transition({1.0, -0.5, 0.3, -1.2, 1.0, -0.5, 0.3, -1.2},
                                {1, 2, 3, 4, 1, 2, 3, 4}, {1, 1, 1, 0, 1, 1, 1, 0});
    double w1 = estimate_weights(ds, CoxCoefficients::zeros(ds)).w[0];
    double w2 = estimate_weights(twice, CoxCoefficients::zeros(twice)).w[0];
    CHECK(w2 == doctest::Approx(2.0 * w1).epsilon(0.05));
  }
  SUBCASE("1-covariate 2-event fixture matches the brute-force information") {
    auto ds = one_transition({1.0, -1.0, 0.0}, {1.0, 2.0, 3.0}, {1, 1, 0});
    CoxCoefficients beta;
    beta.beta.push_back(Vector::Constant(1, 0.3));
    // information = sum over events of (E[x^2] - E[x]^2) under exp(eta) weights
    Vector eta = ds.X * beta.beta[0];
    double info = 0.0;
    for (int i = 0; i < 3; ++i) {
      if (ds.event[0](i) != 1.0) continue;
      double s0 = 0, s1 = 0, s2 = 0;
      for (int j = 0; j < 3; ++j) {
        if (ds.time[0](j) < ds.time[0](i)) continue;
        double w = std::exp(eta(j));
        s0 += w;
        s1 += w * ds.X(j, 0);
        s2 += w * ds.X(j, 0) * ds.X(j, 0);
      }
      info += s2 / s0 - (s1 / s0) * (s1 / s0);
    }
    double expect = 1.0 / (1.0 / (info + kHessianRidge));
    CHECK(estimate_weights(ds, beta).w[0] == doctest::Approx(expect).epsilon(1e-9));
  }
  SUBCASE("zero-event stratum hits the weight floor") {
    auto ds = one_transition({1.0, -1.0}, {1.0, 2.0}, {0, 0});
    auto w = estimate_weights(ds, CoxCoefficients::zeros(ds));
    CHECK(w.w[0] == doctest::Approx(kWeightFloor));
  }
}

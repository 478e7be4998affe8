#include <doctest.h>

#include <cmath>

#include "core/graph.hpp"
#include "core/rng.hpp"
#include "core/spectral.hpp"
#include "helpers.hpp"

using namespace mscluster;
using namespace mscluster::testing;

namespace {

SimilarityMatrix block_similarity(const std::vector<int>& sizes) {
  int n = 0;
  for (int s : sizes) n += s;
  SimilarityMatrix sim;
  sim.S = Matrix::Zero(n, n);
  int off = 0;
  for (int s : sizes) {
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        if (i != j) sim.S(off + i, off + j) = 1.0 / (s - 1);
    off += s;
  }
  sim.row_lambda = Vector::Zero(n);
  sim.row_fallback.assign(n, 0);
  return sim;
}

}  // namespace

TEST_CASE("smallest_eigs") {
  SUBCASE("two-block graph at c=2 has both eigenvalues zero") {
    auto sim = block_similarity({3, 4});
    auto emb = smallest_eigs(build_laplacian(sim), 2);
    CHECK(emb.eigenvalues(0) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(emb.eigenvalues(1) == doctest::Approx(0.0).epsilon(1e-10));
    auto lap = build_laplacian(sim);
    CHECK((emb.U.transpose() * lap.L * emb.U).trace() == doctest::Approx(0.0).epsilon(1e-10));
  }
  SUBCASE("path graph kernel is the constant vector") {
    SimilarityMatrix sim;
    sim.S = Matrix::Zero(3, 3);
    sim.S(0, 1) = sim.S(1, 0) = 1.0;
    sim.S(1, 2) = sim.S(2, 1) = 1.0;
    sim.row_lambda = Vector::Zero(3);
    sim.row_fallback.assign(3, 0);
    auto emb = smallest_eigs(build_laplacian(sim), 1);
    CHECK(emb.eigenvalues(0) == doctest::Approx(0.0).epsilon(1e-10));
    double v = 1.0 / std::sqrt(3.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(emb.U(i, 0)) == doctest::Approx(v).epsilon(1e-9));
    CHECK(emb.U(0, 0) > 0.0);  // sign convention
  }
  SUBCASE("trace identity against the full decomposition") {
    Rng rng(53);
    for (int rep = 0; rep < 10; ++rep) {
      SimilarityMatrix sim;
      sim.S = random_row_stochastic(rng, 6);
      auto lap = build_laplacian(sim);
      int c = 1 + rng.uniform_int(4);
      auto emb = smallest_eigs(lap, c);
      Eigen::SelfAdjointEigenSolver<Matrix> full(lap.L);
      double expect = full.eigenvalues().head(c).sum();
      double got = (emb.U.transpose() * lap.L * emb.U).trace();
      CHECK(std::abs(got - expect) < 1e-8);
    }
  }
  SUBCASE("orthonormal columns and eigen residuals") {
    Rng rng(59);
    for (int rep = 0; rep < 10; ++rep) {
      SimilarityMatrix sim;
      sim.S = random_row_stochastic(rng, 9);
      auto lap = build_laplacian(sim);
      auto emb = smallest_eigs(lap, 4);
      Matrix gram = emb.U.transpose() * emb.U;
      CHECK((gram - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
      for (int j = 0; j < 4; ++j) {
        Vector resid = lap.L * emb.U.col(j) - emb.eigenvalues(j) * emb.U.col(j);
        CHECK(resid.norm() < 1e-7);
      }
      for (int j = 1; j < 4; ++j) CHECK(emb.eigenvalues(j) >= emb.eigenvalues(j - 1));
    }
  }
  SUBCASE("c bounds validated") {
    auto sim = block_similarity({4});
    auto lap = build_laplacian(sim);
    CHECK_THROWS_AS(smallest_eigs(lap, 4), Error);
    CHECK_THROWS_AS(smallest_eigs(lap, 0), Error);
  }
}

TEST_CASE("extract_clusters") {
  SUBCASE("components path when the graph already has c components") {
    auto sim = block_similarity({3, 3, 4});
    auto emb = smallest_eigs(build_laplacian(sim), 3);
    auto assign = extract_clusters(sim, emb.U, 3, 1e-8);
    CHECK(assign.method == ClusterAssignment::Method::components);
    CHECK(assign.labels == std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2, 2});
  }
  SUBCASE("kmeans fallback on separated point clouds") {
    // connected graph, so components != c; U rows form 2 tight clouds
    Rng rng(61);
    int n = 12;
    Matrix U(n, 2);
    for (int i = 0; i < n; ++i) {
      double cx = i < 6 ? 0.0 : 10.0;
      U(i, 0) = cx + 0.1 * rng.normal();
      U(i, 1) = 0.1 * rng.normal();
    }
    SimilarityMatrix sim;
    sim.S = random_row_stochastic(rng, n);
    auto assign = extract_clusters(sim, U, 2, 1e-8);
    CHECK(assign.method == ClusterAssignment::Method::kmeans_on_u);
    for (int i = 1; i < 6; ++i) CHECK(assign.labels[i] == assign.labels[0]);
    for (int i = 7; i < n; ++i) CHECK(assign.labels[i] == assign.labels[6]);
    CHECK(assign.labels[0] != assign.labels[6]);
  }
  SUBCASE("degenerate identical rows collapse to one used label") {
    Rng rng(67);
    Matrix U = Matrix::Ones(8, 2);
    SimilarityMatrix sim;
    sim.S = random_row_stochastic(rng, 8);
    auto assign = extract_clusters(sim, U, 3, 1e-8);
    for (int i = 0; i < 8; ++i) CHECK(assign.labels[i] == assign.labels[0]);
  }
  SUBCASE("deterministic across repeated calls") {
    Rng rng(71);
    Matrix U(10, 3);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 3; ++j) U(i, j) = rng.normal();
    SimilarityMatrix sim;
    sim.S = random_row_stochastic(rng, 10);
    auto a = extract_clusters(sim, U, 3, 1e-8);
    auto b = extract_clusters(sim, U, 3, 1e-8);
    CHECK(a.labels == b.labels);
    CHECK(a.method == b.method);
  }
}

TEST_CASE("kmeans recovers well-separated clusters") {
  Rng rng(73);
  int n = 30;
  Matrix pts(n, 2);
  for (int i = 0; i < n; ++i) {
    int c = i % 3;
    pts(i, 0) = 20.0 * c + 0.3 * rng.normal();
    pts(i, 1) = -10.0 * c + 0.3 * rng.normal();
  }
  auto labels = kmeans_rows(pts, 3, 50, 12345);
  for (int i = 0; i < n; ++i) CHECK(labels[i] == labels[i % 3]);
  CHECK(labels[0] != labels[1]);
  CHECK(labels[1] != labels[2]);
}

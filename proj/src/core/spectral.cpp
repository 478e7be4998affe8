#include "spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rng.hpp"

namespace mscluster {

SpectralEmbedding smallest_eigs(const GraphLaplacian& lap, int c) {
  int n = static_cast<int>(lap.L.rows());
  require(c >= 1 && c < n, errc::validation, "need 1 <= c < n");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(lap.L);
  require(solver.info() == Eigen::Success, errc::numeric, "eigendecomposition failed");
  SpectralEmbedding emb;
  emb.eigenvalues = solver.eigenvalues().head(c);
  emb.U = solver.eigenvectors().leftCols(c);
  for (int j = 0; j < c; ++j) {
    int arg = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      double a = std::abs(emb.U(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (emb.U(arg, j) < 0.0) emb.U.col(j) = -emb.U.col(j);
  }
  return emb;
}

namespace {

constexpr std::uint64_t kKmeansSeed = 0x5eed5eedULL;

double assign_points(const Matrix& pts, const Matrix& centers, std::vector<int>& labels) {
  int n = static_cast<int>(pts.rows());
  int k = static_cast<int>(centers.rows());
  double inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int c = 0; c < k; ++c) {
      double d = (pts.row(i) - centers.row(c)).squaredNorm();
      if (d < best - 1e-15) {  // ties keep the lowest center index
        best = d;
        arg = c;
      }
    }
    labels[i] = arg;
    inertia += best;
  }
  return inertia;
}

}  // namespace

std::vector<int> kmeans_rows(const Matrix& points, int k, int restarts, std::uint64_t seed) {
  int n = static_cast<int>(points.rows());
  require(k >= 1 && k <= n, errc::validation, "k must be in [1, n]");
  Rng rng(seed);
  std::vector<int> best_labels(n, 0);
  double best_inertia = std::numeric_limits<double>::infinity();

  for (int r = 0; r < restarts; ++r) {
    // k-means++ seeding
    Matrix centers(k, points.cols());
    centers.row(0) = points.row(rng.uniform_int(n));
    Vector d2 = Vector::Zero(n);
    for (int i = 0; i < n; ++i) d2(i) = (points.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
      double total = d2.sum();
      int pick;
      if (total <= 0.0) {
        pick = rng.uniform_int(n);
      } else {
        double u = rng.uniform01() * total;
        double acc = 0.0;
        pick = n - 1;
        for (int i = 0; i < n; ++i) {
          acc += d2(i);
          if (u < acc) {
            pick = i;
            break;
          }
        }
      }
      centers.row(c) = points.row(pick);
      for (int i = 0; i < n; ++i)
        d2(i) = std::min(d2(i), (points.row(i) - centers.row(c)).squaredNorm());
    }

    std::vector<int> labels(n, -1);
    double inertia = assign_points(points, centers, labels);
    for (int it = 0; it < 100; ++it) {
      Matrix sums = Matrix::Zero(k, points.cols());
      std::vector<int> counts(k, 0);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[i]) += points.row(i);
        counts[labels[i]]++;
      }
      for (int c = 0; c < k; ++c) {
        if (counts[c] > 0) {
          centers.row(c) = sums.row(c) / counts[c];
        } else {
          // reseed an empty cluster at the point farthest from its center
          int far = 0;
          double far_d = -1.0;
          for (int i = 0; i < n; ++i) {
            double d = (points.row(i) - centers.row(labels[i])).squaredNorm();
            if (d > far_d) {
              far_d = d;
              far = i;
            }
          }
          centers.row(c) = points.row(far);
        }
      }
      std::vector<int> next(n, -1);
      double next_inertia = assign_points(points, centers, next);
      bool stable = next == labels;
      labels = std::move(next);
      inertia = next_inertia;
      if (stable) break;
    }
    if (inertia < best_inertia - 1e-15) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }

  // canonical labels: renumber by first occurrence
  std::vector<int> remap(k, -1);
  int next_id = 0;
  for (int& l : best_labels) {
    if (remap[l] == -1) remap[l] = next_id++;
    l = remap[l];
  }
  return best_labels;
}

ClusterAssignment extract_clusters(const SimilarityMatrix& S, const Matrix& U, int c,
                                   double edge_tol) {
  auto [count, labels] = connected_components(S, edge_tol);
  ClusterAssignment out;
  if (count == c) {
    out.labels = labels;
    out.method = ClusterAssignment::Method::components;
  } else {
    out.labels = kmeans_rows(U, c, 50, kKmeansSeed);
    out.method = ClusterAssignment::Method::kmeans_on_u;
  }
  return out;
}

}  // namespace mscluster

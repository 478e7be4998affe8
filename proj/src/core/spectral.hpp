#pragma once

#include <cstdint>
#include <vector>

#include "common.hpp"
#include "graph.hpp"

namespace mscluster {

struct SpectralEmbedding {
  Matrix U;            // n x c, orthonormal columns
  Vector eigenvalues;  // c smallest, ascending
};

struct ClusterAssignment {
  enum class Method { components, kmeans_on_u };
  std::vector<int> labels;
  Method method = Method::components;
};

// Dense symmetric eigendecomposition of the Laplacian; returns the c smallest
// eigenpairs ascending. Sign convention: the largest-magnitude entry of each
// column is positive.
SpectralEmbedding smallest_eigs(const GraphLaplacian& lap, int c);

// Component labels when the graph already has exactly c components, otherwise
// seeded k-means on the rows of U.
ClusterAssignment extract_clusters(const SimilarityMatrix& S, const Matrix& U, int c,
                                   double edge_tol);

std::vector<int> kmeans_rows(const Matrix& points, int k, int restarts, std::uint64_t seed);

}  // namespace mscluster

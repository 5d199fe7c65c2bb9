#pragma once

#include <cstdint>
#include <vector>

#include "cld/numerics.hpp"

namespace cld {

struct ClusterResult {
  Matrix centroids;                     // k x dim, unit rows
  std::vector<std::size_t> assignment;  // per-row cluster id
  double objective = 0.0;               // final phi
  std::vector<double> objective_history;  // phi after initialization and after every EM iteration
  int iterations = 0;

  std::size_t k() const { return centroids.rows(); }
  std::vector<std::size_t> cluster_sizes() const;
};

enum class SpectralEnd { smallest, largest };

/// Initial centroid indices from k-means++ seeding under the distance 1 - cos.
std::vector<std::size_t> kmeanspp_seeds(const Matrix& features, std::size_t k, Rng& rng);

/// Spherical k-means by EM. Ties in assignment go to the lowest cluster index.
ClusterResult spherical_kmeans(const Matrix& features, std::size_t k, std::uint64_t seed,
                               int max_iter = 20);

/// sum_i (1 - cos(f_i, centroid of i)).
double kmeans_objective(const Matrix& features, const ClusterResult& result);

/// Normalized member means for a fixed assignment.
Matrix assignment_centroids(const Matrix& features, const std::vector<std::size_t>& assignment,
                            std::size_t k);

/// Spectral clustering on the cosine affinity graph (negative affinities clamped to 0).
ClusterResult spectral_cluster(const Matrix& features, std::size_t k, std::uint64_t seed,
                               SpectralEnd end = SpectralEnd::smallest, int max_iter = 20);

}  // namespace cld

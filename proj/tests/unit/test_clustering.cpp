#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "cld/clustering.hpp"
#include "cld/error.hpp"
#include "cld/metrics.hpp"

using namespace cld;

namespace {

// Tight bundles around well-spread unit directions.
Matrix bundles(const Matrix& centers, std::size_t per, double noise, Rng& rng,
               std::vector<std::size_t>* truth = nullptr) {
  Matrix x(centers.rows() * per, centers.cols());
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    for (std::size_t p = 0; p < per; ++p) {
      std::size_t i = c * per + p;
      for (std::size_t d = 0; d < x.cols(); ++d) x(i, d) = centers(c, d) + noise * rng.normal();
      if (truth != nullptr) truth->push_back(c);
    }
  }
  l2_normalize_rows(x);
  return x;
}

// Minimum of sum_c (n_c - |sum of members|) over every assignment with no empty cluster.
double brute_force_phi(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  std::vector<std::size_t> a(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<Vector> sums(k, Vector(x.cols(), 0.0));
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[a[i]];
      for (std::size_t d = 0; d < x.cols(); ++d) sums[a[i]][d] += x(i, d);
    }
    bool full = true;
    double phi = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) full = false;
      double s = 0.0;
      for (double v : sums[c]) s += v * v;
      phi += static_cast<double>(count[c]) - std::sqrt(s);
    }
    if (full) best = std::min(best, phi);
    std::size_t pos = 0;
    while (pos < n && ++a[pos] == k) a[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

Matrix random_rows(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST(SphericalKmeans, KEqualsRowsIsZeroObjective) {
  Rng rng(40);
  Matrix x = random_rows(7, 4, rng);
  ClusterResult r = spherical_kmeans(x, 7, 1);
  EXPECT_NEAR(r.objective, 0.0, 1e-12);
  std::set<std::size_t> ids(r.assignment.begin(), r.assignment.end());
  EXPECT_EQ(ids.size(), 7u);
}

TEST(SphericalKmeans, SingleClusterIsNormalizedMean) {
  Rng rng(41);
  Matrix x = random_rows(9, 3, rng);
  Matrix u = x;
  l2_normalize_rows(u);
  Vector mean(3, 0.0);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t d = 0; d < 3; ++d) mean[d] += u(i, d);
  Vector want = l2_normalize(mean);
  ClusterResult r = spherical_kmeans(x, 1, 3);
  for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(r.centroids(0, d), want[d], 1e-12);
  for (auto a : r.assignment) EXPECT_EQ(a, 0u);
}

TEST(SphericalKmeans, MatchesBruteForceOnBundles) {
  Rng rng(42);
  for (int t = 0; t < 10; ++t) {
    Matrix centers = Matrix::from_rows({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}});
    Matrix x = bundles(centers, 3, 0.15, rng);
    ClusterResult r = spherical_kmeans(x, 3, rng.next_u64());
    EXPECT_NEAR(r.objective, brute_force_phi(x, 3), 1e-9);
  }
}

TEST(SphericalKmeans, ObjectiveMatchesRecomputationAndDescends) {
  Rng rng(43);
  for (int t = 0; t < 20; ++t) {
    Matrix x = random_rows(30, 5, rng);
    ClusterResult r = spherical_kmeans(x, 4, rng.next_u64());
    EXPECT_NEAR(r.objective, kmeans_objective(x, r), 1e-10);
    for (std::size_t i = 1; i < r.objective_history.size(); ++i)
      EXPECT_LE(r.objective_history[i], r.objective_history[i - 1] + 1e-12);
    for (std::size_t j = 0; j < r.k(); ++j) EXPECT_NEAR(norm(r.centroids.row(j)), 1.0, 1e-12);
    for (auto s : r.cluster_sizes()) EXPECT_GT(s, 0u);
  }
}

TEST(SphericalKmeans, PermutationInvariantPartition) {
  Rng rng(44);
  std::vector<std::size_t> truth;
  Matrix centers = Matrix::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
  Matrix x = bundles(centers, 10, 0.1, rng, &truth);
  auto perm = rng.permutation(x.rows());
  Matrix xp = x.select_rows(perm);
  ClusterResult a = spherical_kmeans(x, 3, 5);
  ClusterResult b = spherical_kmeans(xp, 3, 9);
  std::vector<std::size_t> b_back(x.rows());
  for (std::size_t i = 0; i < perm.size(); ++i) b_back[perm[i]] = b.assignment[i];
  EXPECT_NEAR(nmi(a.assignment, b_back), 1.0, 1e-12);
  EXPECT_NEAR(nmi(a.assignment, truth), 1.0, 1e-12);
}

TEST(SphericalKmeans, DeterministicForSeed) {
  Rng rng(45);
  Matrix x = random_rows(40, 6, rng);
  ClusterResult a = spherical_kmeans(x, 5, 77);
  ClusterResult b = spherical_kmeans(x, 5, 77);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_EQ(a.objective_history, b.objective_history);
}

TEST(SphericalKmeans, DuplicateRowsStillFillEveryCluster) {
  Matrix x = Matrix::from_rows({{1, 0}, {1, 0}, {1, 0}, {1, 0}, {0, 1}});
  ClusterResult r = spherical_kmeans(x, 3, 1);
  for (auto s : r.cluster_sizes()) EXPECT_GT(s, 0u);
}

TEST(SphericalKmeans, RejectsBadK) {
  Matrix x = Matrix::from_rows({{1, 0}, {0, 1}});
  EXPECT_THROW(spherical_kmeans(x, 3, 1), Error);
  EXPECT_THROW(spherical_kmeans(x, 0, 1), Error);
  EXPECT_THROW(spectral_cluster(x, 3, 1), Error);
}

TEST(KmeansppSeeds, DistinctRows) {
  Rng rng(46);
  Matrix x = random_rows(20, 3, rng);
  l2_normalize_rows(x);
  for (int t = 0; t < 20; ++t) {
    auto s = kmeanspp_seeds(x, 20, rng);
    std::set<std::size_t> uniq(s.begin(), s.end());
    EXPECT_EQ(uniq.size(), 20u);
  }
}

TEST(AssignmentCentroids, EmptyClusterThrows) {
  Matrix x = Matrix::from_rows({{1, 0}, {0, 1}});
  EXPECT_THROW(assignment_centroids(x, {0, 0}, 2), Error);
}

TEST(Spectral, TwoOrthogonalBlocks) {
  Rng rng(47);
  std::vector<std::size_t> truth;
  Matrix centers = Matrix::from_rows({{1, 0, 0, 0}, {0, 0, 1, 0}});
  Matrix x = bundles(centers, 8, 0.05, rng, &truth);
  ClusterResult r = spectral_cluster(x, 2, 3);
  EXPECT_NEAR(nmi(r.assignment, truth), 1.0, 1e-12);
  for (std::size_t j = 0; j < r.k(); ++j) EXPECT_NEAR(norm(r.centroids.row(j)), 1.0, 1e-12);
}

TEST(Spectral, AgreesWithKmeansOnBundles) {
  Rng rng(48);
  Matrix centers = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  Matrix x = bundles(centers, 6, 0.1, rng);
  ClusterResult s = spectral_cluster(x, 3, 4);
  ClusterResult k = spherical_kmeans(x, 3, 4);
  EXPECT_NEAR(nmi(s.assignment, k.assignment), 1.0, 1e-12);
}

TEST(Spectral, KEqualsRowsSeparatesEveryRow) {
  Matrix x = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}});
  ClusterResult r = spectral_cluster(x, 4, 1);
  std::set<std::size_t> ids(r.assignment.begin(), r.assignment.end());
  EXPECT_EQ(ids.size(), 4u);
}

#include "cld/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cld/error.hpp"

namespace cld {

std::vector<std::size_t> ClusterResult::cluster_sizes() const {
  std::vector<std::size_t> sizes(k(), 0);
  for (auto a : assignment) ++sizes[a];
  return sizes;
}

namespace {

Matrix unit_rows(const Matrix& features) {
  Matrix m = features;
  l2_normalize_rows(m);
  return m;
}

void check_k(const Matrix& features, std::size_t k) {
  if (k < 1) throw Error("clustering: k must be >= 1");
  if (k > features.rows()) {
    throw Error("clustering: k=" + std::to_string(k) + " exceeds row count " +
                std::to_string(features.rows()));
  }
}

/// Nearest centroid by cosine; ties resolve to the lowest index.
std::vector<std::size_t> assign_rows(const Matrix& x, const Matrix& centroids) {
  std::vector<std::size_t> out(x.rows(), 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = -2.0;
    for (std::size_t j = 0; j < centroids.rows(); ++j) {
      double c = dot(x.row(i), centroids.row(j));
      if (c > best) {
        best = c;
        out[i] = j;
      }
    }
  }
  return out;
}

/// Fill empty clusters by moving the row farthest from its centroid.
void repair_empty(const Matrix& x, Matrix& centroids, std::vector<std::size_t>& assignment) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> sizes(k, 0);
  for (auto a : assignment) ++sizes[a];
  for (std::size_t e = 0; e < k; ++e) {
    if (sizes[e] != 0) continue;
    std::size_t victim = x.rows();
    double worst = 2.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (sizes[assignment[i]] < 2) continue;
      double c = dot(x.row(i), centroids.row(assignment[i]));
      if (c < worst) {
        worst = c;
        victim = i;
      }
    }
    if (victim == x.rows()) throw Error("clustering: cannot repair empty cluster");
    --sizes[assignment[victim]];
    assignment[victim] = e;
    sizes[e] = 1;
    std::copy(x.row(victim).begin(), x.row(victim).end(), centroids.row(e).begin());
  }
}

double objective_of(const Matrix& x, const Matrix& centroids, const std::vector<std::size_t>& a) {
  double phi = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) phi += 1.0 - dot(x.row(i), centroids.row(a[i]));
  return phi;
}

}  // namespace

Matrix assignment_centroids(const Matrix& features, const std::vector<std::size_t>& assignment,
                            std::size_t k) {
  Matrix sums(k, features.cols());
  std::vector<std::size_t> first(k, features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto dst = sums.row(assignment[i]);
    auto src = features.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    if (first[assignment[i]] == features.rows()) first[assignment[i]] = i;
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (first[j] == features.rows()) throw Error("clustering: empty cluster " + std::to_string(j));
    auto row = sums.row(j);
    double n = norm(row);
    if (n >= 1e-12) {
      for (double& v : row) v /= n;
    } else {
      // Members cancel out; any unit vector is an optimal centroid.
      auto src = features.row(first[j]);
      double sn = norm(src);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] = src[c] / sn;
    }
  }
  return sums;
}

std::vector<std::size_t> kmeanspp_seeds(const Matrix& x, std::size_t k, Rng& rng) {
  check_k(x, k);
  const std::size_t n = x.rows();
  std::vector<std::size_t> seeds;
  seeds.push_back(static_cast<std::size_t>(rng.uniform_index(n)));
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = std::max(0.0, 1.0 - dot(x.row(i), x.row(seeds[0])));
  std::vector<char> taken(n, 0);
  taken[seeds[0]] = 1;
  while (seeds.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) total += dist[i] * dist[i];
    std::size_t pick = n;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || dist[i] <= 0.0) continue;
        acc += dist[i] * dist[i];
        pick = i;
        if (acc > r) break;
      }
    } else {
      // Only duplicates of chosen rows remain.
      std::size_t remaining = n - seeds.size();
      std::size_t target = static_cast<std::size_t>(rng.uniform_index(remaining));
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (target-- == 0) {
          pick = i;
          break;
        }
      }
    }
    seeds.push_back(pick);
    taken[pick] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], std::max(0.0, 1.0 - dot(x.row(i), x.row(pick))));
    }
  }
  return seeds;
}

ClusterResult spherical_kmeans(const Matrix& features, std::size_t k, std::uint64_t seed,
                               int max_iter) {
  check_k(features, k);
  const Matrix x = unit_rows(features);
  Rng rng(seed);
  Matrix centroids = x.select_rows(kmeanspp_seeds(x, k, rng));

  ClusterResult res;
  std::vector<std::size_t> prev;
  for (int it = 0; it < std::max(max_iter, 1); ++it) {
    auto assignment = assign_rows(x, centroids);
    repair_empty(x, centroids, assignment);
    if (it == 0) {
      res.objective_history.push_back(objective_of(x, centroids, assignment));
    } else if (assignment == prev) {
      break;
    }
    centroids = assignment_centroids(x, assignment, k);
    res.objective_history.push_back(objective_of(x, centroids, assignment));
    prev = std::move(assignment);
    ++res.iterations;
  }
  res.centroids = std::move(centroids);
  res.assignment = std::move(prev);
  res.objective = res.objective_history.back();
  return res;
}

double kmeans_objective(const Matrix& features, const ClusterResult& result) {
  double phi = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    phi += 1.0 - cosine_similarity(features.row(i), result.centroids.row(result.assignment[i]));
  }
  return phi;
}

ClusterResult spectral_cluster(const Matrix& features, std::size_t k, std::uint64_t seed,
                               SpectralEnd end, int max_iter) {
  check_k(features, k);
  const Matrix x = unit_rows(features);
  const std::size_t n = x.rows();
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) w(i, j) = w(j, i) = std::max(0.0, dot(x.row(i), x.row(j)));
  Vector inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += w(i, j);
    if (d <= 0.0) {
      w(i, i) = 1.0;
      d = 1.0;
    }
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  Matrix lap(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      lap(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt_deg[i] * w(i, j) * inv_sqrt_deg[j];
    }
  }
  SymmetricEigen eig = symmetric_eigen(lap);

  Matrix embedding(n, k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t col = end == SpectralEnd::smallest ? c : n - k + c;
    for (std::size_t i = 0; i < n; ++i) embedding(i, c) = eig.vectors(i, col);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto row = embedding.row(i);
    double nr = norm(row);
    if (nr < 1e-12) {
      std::fill(row.begin(), row.end(), 0.0);
      row[0] = 1.0;
    } else {
      for (double& v : row) v /= nr;
    }
  }
  ClusterResult inner = spherical_kmeans(embedding, k, seed, max_iter);

  ClusterResult res;
  res.assignment = std::move(inner.assignment);
  res.centroids = assignment_centroids(x, res.assignment, k);
  res.iterations = inner.iterations;
  res.objective = objective_of(x, res.centroids, res.assignment);
  res.objective_history = {res.objective};
  return res;
}

}  // namespace cld

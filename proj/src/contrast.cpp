#include "cld/contrast.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cld/error.hpp"

namespace cld {

void ContrastConfig::validate(std::size_t dataset_size, std::size_t batch_size) const {
  if (!(T_I > 0)) throw ConfigError("T_I must be > 0");
  if (!(T_G > 0)) throw ConfigError("T_G must be > 0");
  if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
  if (dataset_size >= 2 && (num_negatives < 1 || num_negatives > dataset_size - 1)) {
    throw ConfigError("num_negatives must be in [1, " + std::to_string(dataset_size - 1) + "]");
  }
  if (k_groups < 2 || k_groups > batch_size) {
    throw ConfigError("k_groups must be in [2, batch_size=" + std::to_string(batch_size) + "]");
  }
}

MemoryBank::MemoryBank(Matrix vectors, double momentum)
    : vectors_(std::move(vectors)), momentum_(momentum) {
  if (!(momentum >= 0 && momentum <= 1)) throw ConfigError("bank momentum must be in [0, 1]");
  l2_normalize_rows(vectors_);
}

MemoryBank MemoryBank::random(std::size_t n, std::size_t dim, double momentum, Rng& rng) {
  Matrix v(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = v.row(i);
    do {
      for (double& x : row) x = rng.normal();
    } while (norm(row) < 1e-6);
  }
  return MemoryBank(std::move(v), momentum);
}

void MemoryBank::update(std::span<const std::size_t> indices, const Matrix& features) {
  if (features.rows() != indices.size() || features.cols() != dim()) {
    throw Error("bank update: shape mismatch");
  }
  if (momentum_ == 1.0) return;
  const double m = momentum_;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto v = vectors_.row(indices[r]);
    auto f = features.row(r);
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = m * v[j] + (1.0 - m) * f[j];
    double n = norm(v);
    if (!(n >= 1e-12)) throw NumericError("bank update: degenerate norm at instance " + std::to_string(indices[r]));
    for (double& x : v) x /= n;
  }
}

namespace {

/// Softmax cross-entropy with the reference at slot `target` among `refs`.
/// Adds d loss / d anchor * scale into grad_anchor, and d loss / d ref into
/// grad_refs when given.
double softmax_xent(std::span<const double> anchor, const std::vector<std::span<const double>>& refs,
                    std::size_t target, double T, double scale, std::span<double> grad_anchor,
                    std::vector<std::span<double>>* grad_refs, Vector& scratch) {
  const std::size_t m = refs.size();
  if (m <= 1) return 0.0;
  scratch.resize(m);
  for (std::size_t j = 0; j < m; ++j) scratch[j] = dot(anchor, refs[j]) / T;
  const double lse = log_sum_exp(scratch);
  const double loss = lse - scratch[target];
  for (std::size_t j = 0; j < m; ++j) {
    double coef = std::exp(scratch[j] - lse) - (j == target ? 1.0 : 0.0);
    double c = scale * coef / T;
    if (c == 0.0) continue;
    auto r = refs[j];
    for (std::size_t d = 0; d < anchor.size(); ++d) grad_anchor[d] += c * r[d];
    if (grad_refs != nullptr) {
      auto g = (*grad_refs)[j];
      for (std::size_t d = 0; d < anchor.size(); ++d) g[d] += c * anchor[d];
    }
  }
  return loss;
}

}  // namespace

NceResult nce_loss(std::span<const double> f, std::span<const double> pos, const Matrix& negs,
                   double T) {
  if (!(T > 0)) throw Error("nce_loss: temperature must be > 0");
  if (pos.size() != f.size() || (negs.rows() > 0 && negs.cols() != f.size())) {
    throw Error("nce_loss: dimension mismatch");
  }
  NceResult r;
  r.grad_f.assign(f.size(), 0.0);
  r.grad_pos.assign(f.size(), 0.0);
  r.grad_negs = Matrix(negs.rows(), f.size());
  std::vector<std::span<const double>> refs{pos};
  std::vector<std::span<double>> grefs{r.grad_pos};
  for (std::size_t j = 0; j < negs.rows(); ++j) {
    refs.push_back(negs.row(j));
    grefs.push_back(r.grad_negs.row(j));
  }
  Vector scratch;
  r.loss = softmax_xent(f, refs, 0, T, 1.0, r.grad_f, &grefs, scratch);
  return r;
}

NegativeDraws sample_negatives(std::size_t bank_size, std::span<const std::size_t> indices,
                               std::size_t num_negatives, Rng& rng) {
  if (bank_size < 1 || num_negatives > bank_size - 1) {
    throw ConfigError("num_negatives=" + std::to_string(num_negatives) + " exceeds n-1=" +
                      std::to_string(bank_size == 0 ? 0 : bank_size - 1));
  }
  NegativeDraws draws(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t self = indices[b];
    if (self >= bank_size) throw Error("sample_negatives: index out of range");
    draws[b] = rng.sample_without_replacement(bank_size - 1, num_negatives);
    for (auto& j : draws[b])
      if (j >= self) ++j;
  }
  return draws;
}

TermResult instance_term(const Matrix& fI_a, const Matrix& fI_b, const MemoryBank& bank,
                         std::span<const std::size_t> indices, const NegativeDraws& negatives,
                         double T_I) {
  const std::size_t batch = indices.size();
  if (fI_a.rows() != batch || fI_b.rows() != batch || negatives.size() != batch) {
    throw Error("instance_term: batch size mismatch");
  }
  if (fI_a.cols() != bank.dim() || fI_b.cols() != bank.dim()) {
    throw Error("instance_term: feature dim != bank dim");
  }
  if (!(T_I > 0)) throw Error("instance_term: T_I must be > 0");
  TermResult r;
  r.grad_a = Matrix(batch, fI_a.cols());
  r.grad_b = Matrix(batch, fI_b.cols());
  r.per_sample.assign(batch, 0.0);
  std::vector<std::span<const double>> refs;
  Vector scratch;
  for (std::size_t b = 0; b < batch; ++b) {
    refs.clear();
    refs.push_back(bank.row(indices[b]));
    for (auto j : negatives[b]) refs.push_back(bank.row(j));
    double la = softmax_xent(fI_a.row(b), refs, 0, T_I, 1.0, r.grad_a.row(b), nullptr, scratch);
    double lb = softmax_xent(fI_b.row(b), refs, 0, T_I, 1.0, r.grad_b.row(b), nullptr, scratch);
    r.per_sample[b] = la + lb;
    r.loss += la + lb;
  }
  return r;
}

TermResult instance_term(const Matrix& fI_a, const Matrix& fI_b, const MemoryBank& bank,
                         std::span<const std::size_t> indices, const ContrastConfig& cfg, Rng& rng) {
  auto draws = sample_negatives(bank.size(), indices, cfg.num_negatives, rng);
  return instance_term(fI_a, fI_b, bank, indices, draws, cfg.T_I);
}

namespace {

/// One direction of the cross-level term: anchors against the centroids built
/// from `members` under `clusters`. Gradients go to grad_anchor and, in
/// through mode, back through the centroids into grad_members.
double cld_direction(const Matrix& anchors, const Matrix& members, const ClusterResult& clusters,
                     const ContrastConfig& cfg, Matrix& grad_anchor, Matrix& grad_members,
                     Vector& per_sample) {
  const std::size_t k = clusters.k();
  const std::size_t n = anchors.rows();
  if (clusters.assignment.size() != n || members.rows() != n) {
    throw Error("cld_term: clustering does not match batch");
  }
  const bool through = cfg.centroid_grad == CentroidGrad::through;

  Matrix centroids = clusters.centroids;
  Vector sum_norms(k, 1.0);
  if (through) {
    Matrix sums(k, members.cols());
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(clusters.assignment[i]);
      auto src = members.row(i);
      for (std::size_t d = 0; d < src.size(); ++d) dst[d] += src[d];
      ++sizes[clusters.assignment[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (sizes[j] == 0) throw Error("cld_term: empty cluster " + std::to_string(j));
      sum_norms[j] = norm(sums.row(j));
      if (!(sum_norms[j] >= 1e-12)) throw NumericError("cld_term: degenerate centroid " + std::to_string(j));
      for (std::size_t d = 0; d < sums.cols(); ++d) centroids(j, d) = sums(j, d) / sum_norms[j];
    }
  } else {
    for (auto s : clusters.cluster_sizes())
      if (s == 0) throw Error("cld_term: empty cluster");
  }
  if (k <= 1) return 0.0;

  Matrix grad_centroids(k, anchors.cols());
  std::vector<std::span<const double>> refs;
  std::vector<std::span<double>> grefs;
  for (std::size_t j = 0; j < k; ++j) {
    refs.push_back(centroids.row(j));
    grefs.push_back(grad_centroids.row(j));
  }
  Vector scratch;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double l = softmax_xent(anchors.row(i), refs, clusters.assignment[i], cfg.T_G, 1.0,
                            grad_anchor.row(i), through ? &grefs : nullptr, scratch);
    per_sample[i] += l;
    loss += l;
  }
  if (through) {
    Vector tmp(anchors.cols());
    for (std::size_t j = 0; j < k; ++j) {
      normalize_backward(centroids.row(j), sum_norms[j], grad_centroids.row(j), tmp);
      std::copy(tmp.begin(), tmp.end(), grad_centroids.row(j).begin());
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto g = grad_centroids.row(clusters.assignment[i]);
      auto dst = grad_members.row(i);
      for (std::size_t d = 0; d < g.size(); ++d) dst[d] += g[d];
    }
  }
  return loss;
}

}  // namespace

TermResult cld_term(const Matrix& fG_a, const Matrix& fG_b, const ClusterResult& clusters_a,
                    const ClusterResult& clusters_b, const ContrastConfig& cfg) {
  if (!(cfg.T_G > 0)) throw Error("cld_term: T_G must be > 0");
  if (fG_a.rows() != fG_b.rows() || fG_a.cols() != fG_b.cols()) throw Error("cld_term: view shape mismatch");
  if (clusters_a.k() != clusters_b.k()) throw Error("cld_term: views clustered with different k");
  TermResult r;
  r.grad_a = Matrix(fG_a.rows(), fG_a.cols());
  r.grad_b = Matrix(fG_b.rows(), fG_b.cols());
  r.per_sample.assign(fG_a.rows(), 0.0);
  r.loss += cld_direction(fG_b, fG_a, clusters_a, cfg, r.grad_b, r.grad_a, r.per_sample);
  r.loss += cld_direction(fG_a, fG_b, clusters_b, cfg, r.grad_a, r.grad_b, r.per_sample);
  return r;
}

double cross_entropy_form(const Matrix& anchors, const ClusterResult& clusters, double T_G) {
  const std::size_t k = clusters.k();
  double total = 0.0;
  Vector logits(k);
  for (std::size_t i = 0; i < anchors.rows(); ++i) {
    for (std::size_t j = 0; j < k; ++j) logits[j] = dot(anchors.row(i), clusters.centroids.row(j)) / T_G;
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double s : logits) z += std::exp(s - mx);
    for (std::size_t j = 0; j < k; ++j) {
      double p = clusters.assignment[i] == j ? 1.0 : 0.0;
      if (p == 0.0) continue;
      double log_q = logits[j] - mx - std::log(z);
      total -= p * log_q;
    }
  }
  return total;
}

TotalLossResult total_loss(const ForwardCache& cache_a, const ForwardCache& cache_b,
                           const MemoryBank& bank, std::span<const std::size_t> indices,
                           const ClusterResult& clusters_a, const ClusterResult& clusters_b,
                           const NegativeDraws& negatives, const ContrastConfig& cfg) {
  TotalLossResult out;
  TermResult inst = instance_term(cache_a.fI(), cache_b.fI(), bank, indices, negatives, cfg.T_I);
  out.report.instance_loss = inst.loss;
  out.report.per_sample_instance = std::move(inst.per_sample);
  out.report.instance_negatives_per_anchor = negatives.empty() ? 0 : negatives[0].size();
  out.report.lambda = cfg.lambda;
  out.grad_fI_a = std::move(inst.grad_a);
  out.grad_fI_b = std::move(inst.grad_b);
  out.grad_fG_a = Matrix(cache_a.fG().rows(), cache_a.fG().cols());
  out.grad_fG_b = Matrix(cache_b.fG().rows(), cache_b.fG().cols());
  out.report.per_sample_cld.assign(indices.size(), 0.0);
  if (cfg.lambda > 0) {
    TermResult g = cld_term(cache_a.fG(), cache_b.fG(), clusters_a, clusters_b, cfg);
    out.report.cld_loss = g.loss;
    out.report.per_sample_cld = std::move(g.per_sample);
    out.report.cld_negatives_per_anchor = clusters_a.k() - 1;
    for (std::size_t i = 0; i < g.grad_a.size(); ++i) {
      out.grad_fG_a.data()[i] = cfg.lambda * g.grad_a.data()[i];
      out.grad_fG_b.data()[i] = cfg.lambda * g.grad_b.data()[i];
    }
  }
  out.report.total = out.report.instance_loss + cfg.lambda * out.report.cld_loss;
  return out;
}

TotalLossResult total_loss(const ForwardCache& cache_a, const ForwardCache& cache_b,
                           const MemoryBank& bank, std::span<const std::size_t> indices,
                           const ClusterResult& clusters_a, const ClusterResult& clusters_b,
                           const ContrastConfig& cfg, Rng& rng) {
  auto draws = sample_negatives(bank.size(), indices, cfg.num_negatives, rng);
  return total_loss(cache_a, cache_b, bank, indices, clusters_a, clusters_b, draws, cfg);
}

}  // namespace cld

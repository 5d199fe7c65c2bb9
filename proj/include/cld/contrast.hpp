#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cld/clustering.hpp"
#include "cld/encoder.hpp"
#include "cld/numerics.hpp"

namespace cld {

enum class CentroidGrad { through, detached };

struct ContrastConfig {
  double T_I = 0.2;
  double T_G = 0.2;
  double lambda = 0.25;
  std::size_t num_negatives = 4096;
  std::size_t k_groups = 2;
  CentroidGrad centroid_grad = CentroidGrad::through;

  /// Checks the constraints that depend on dataset and batch size.
  void validate(std::size_t dataset_size, std::size_t batch_size) const;
  bool operator==(const ContrastConfig&) const = default;
};

/// One prototype per training instance, kept on the unit sphere.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(Matrix vectors, double momentum);
  /// Unit-normalized N(0, I) rows.
  static MemoryBank random(std::size_t n, std::size_t dim, double momentum, Rng& rng);

  const Matrix& vectors() const { return vectors_; }
  std::span<const double> row(std::size_t i) const { return vectors_.row(i); }
  std::size_t size() const { return vectors_.rows(); }
  std::size_t dim() const { return vectors_.cols(); }
  double momentum() const { return momentum_; }

  /// v_i <- normalize(m v_i + (1 - m) f_row) for each batch row.
  void update(std::span<const std::size_t> indices, const Matrix& features);

 private:
  Matrix vectors_;
  double momentum_ = 0.5;
};

struct NceResult {
  double loss = 0.0;
  Vector grad_f;
  Vector grad_pos;
  Matrix grad_negs;
};

/// -log(exp(<f,pos>/T) / (exp(<f,pos>/T) + sum_j exp(<f,neg_j>/T))).
NceResult nce_loss(std::span<const double> f, std::span<const double> pos, const Matrix& negs,
                   double T);

/// Bank negatives for each batch instance: uniform without replacement, excluding itself.
using NegativeDraws = std::vector<std::vector<std::size_t>>;
NegativeDraws sample_negatives(std::size_t bank_size, std::span<const std::size_t> indices,
                               std::size_t num_negatives, Rng& rng);

struct TermResult {
  double loss = 0.0;
  Matrix grad_a;
  Matrix grad_b;
  Vector per_sample;  // summed over both views
};

/// Instance discrimination against the memory bank for both views. The bank
/// is treated as constant.
TermResult instance_term(const Matrix& fI_a, const Matrix& fI_b, const MemoryBank& bank,
                         std::span<const std::size_t> indices, const NegativeDraws& negatives,
                         double T_I);
TermResult instance_term(const Matrix& fI_a, const Matrix& fI_b, const MemoryBank& bank,
                         std::span<const std::size_t> indices, const ContrastConfig& cfg, Rng& rng);

/// Cross-level term: view-b features against view-a centroids and vice versa.
TermResult cld_term(const Matrix& fG_a, const Matrix& fG_b, const ClusterResult& clusters_a,
                    const ClusterResult& clusters_b, const ContrastConfig& cfg);

/// -sum_i sum_j p_ij log q_ij with hard p from `clusters` and soft q from `anchors`.
double cross_entropy_form(const Matrix& anchors, const ClusterResult& clusters, double T_G);

struct LossReport {
  double instance_loss = 0.0;
  double cld_loss = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  Vector per_sample_instance;
  Vector per_sample_cld;
  std::size_t instance_negatives_per_anchor = 0;
  std::size_t cld_negatives_per_anchor = 0;
};

struct TotalLossResult {
  LossReport report;
  Matrix grad_fI_a;
  Matrix grad_fI_b;
  Matrix grad_fG_a;
  Matrix grad_fG_b;
};

/// instance_term + lambda * cld_term. With lambda = 0 the cross-level term is
/// not evaluated and reported as 0; clusters may then be empty.
TotalLossResult total_loss(const ForwardCache& cache_a, const ForwardCache& cache_b,
                           const MemoryBank& bank, std::span<const std::size_t> indices,
                           const ClusterResult& clusters_a, const ClusterResult& clusters_b,
                           const NegativeDraws& negatives, const ContrastConfig& cfg);
TotalLossResult total_loss(const ForwardCache& cache_a, const ForwardCache& cache_b,
                           const MemoryBank& bank, std::span<const std::size_t> indices,
                           const ClusterResult& clusters_a, const ClusterResult& clusters_b,
                           const ContrastConfig& cfg, Rng& rng);

}  // namespace cld

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cld/numerics.hpp"

namespace cld {

struct KnnResult {
  std::vector<std::uint32_t> predictions;
  double accuracy = 0.0;
};

/// Weighted kNN: class score = sum over top-k cosine neighbours of exp(cos / T).
/// T = +inf gives a plain majority vote. Ties go to the lowest class id.
KnnResult knn_classify(const Matrix& train_feats, const std::vector<std::uint32_t>& train_labels,
                       const Matrix& test_feats, const std::vector<std::uint32_t>& test_labels,
                       std::size_t k = 200, double T = 0.07);

/// I(A;B) / sqrt(H(A) H(B)), natural logs. If either entropy is zero the
/// result is 1 for identical partitions (up to relabeling) and 0 otherwise.
double nmi(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

/// NMI between k-means clusters of `feats` (k = num_classes) and `labels`.
double cluster_then_nmi(const Matrix& feats, const std::vector<std::size_t>& labels,
                        std::size_t num_classes, std::uint64_t seed);
/// NMI between k-means clusterings of two feature sets with a shared seed.
double cluster_then_nmi(const Matrix& feats, const Matrix& feats_other, std::size_t num_classes,
                        std::uint64_t seed);

/// Fraction of rows whose cosine-nearest row in `feats_b` is itself (ties to lowest index).
double retrieval_top1(const Matrix& feats_a, const Matrix& feats_b);

struct SimilarityReport {
  static constexpr std::size_t kBins = 50;
  std::vector<std::size_t> pos_hist = std::vector<std::size_t>(kBins, 0);
  std::vector<std::size_t> neg_hist = std::vector<std::size_t>(kBins, 0);
  double mean_pos = 0.0;
  double mean_neg = 0.0;
  double mean_gap = 0.0;

  static std::size_t bin_of(double cosine);
  static double bin_center(std::size_t bin);
  std::string to_csv() const;
};

SimilarityReport similarity_report(const Matrix& feats_a, const Matrix& feats_b);

struct TuningScore {
  double nmi = 0.0;
  double retrieval = 0.0;
  double score = 0.0;
};

/// NMI(f, f') * R(f, f') for two views of the same instances. Label free.
TuningScore tuning_score(const Matrix& feats, const Matrix& feats_other, std::size_t num_groups,
                         std::uint64_t seed);

struct EvalReport {
  double knn_top1 = 0.0;
  double nmi_vs_labels = 0.0;
  double retrieval_top1 = 0.0;
  double nmi_ff = 0.0;
  double tuning_score = 0.0;
  std::vector<double> per_class_accuracy;
  SimilarityReport similarity;

  std::string to_json() const;
};

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace cld

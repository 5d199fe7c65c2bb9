#include "cld/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cld/clustering.hpp"
#include "cld/error.hpp"

namespace cld {

namespace {

Matrix unit_copy(const Matrix& m) {
  Matrix u = m;
  l2_normalize_rows(u);
  return u;
}

std::vector<std::size_t> compact_labels(const std::vector<std::size_t>& x, std::size_t& count) {
  std::map<std::size_t, std::size_t> ids;
  std::vector<std::size_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto [it, inserted] = ids.emplace(x[i], ids.size());
    out[i] = it->second;
  }
  count = ids.size();
  return out;
}

}  // namespace

KnnResult knn_classify(const Matrix& train_feats, const std::vector<std::uint32_t>& train_labels,
                       const Matrix& test_feats, const std::vector<std::uint32_t>& test_labels,
                       std::size_t k, double T) {
  if (train_feats.rows() == 0) throw Error("knn_classify: empty train set");
  if (train_labels.size() != train_feats.rows()) throw Error("knn_classify: train label count mismatch");
  if (!test_labels.empty() && test_labels.size() != test_feats.rows()) {
    throw Error("knn_classify: test label count mismatch");
  }
  if (k > train_feats.rows()) {
    std::cerr << "warning: knn k=" << k << " clamped to train size " << train_feats.rows() << "\n";
    k = train_feats.rows();
  }
  k = std::max<std::size_t>(k, 1);
  const Matrix train = unit_copy(train_feats);
  const Matrix test = unit_copy(test_feats);
  const std::size_t num_classes = *std::max_element(train_labels.begin(), train_labels.end()) + 1;
  const bool weighted = std::isfinite(T);

  KnnResult res;
  res.predictions.resize(test.rows());
  std::vector<std::pair<double, std::size_t>> sims(train.rows());
  std::vector<double> scores(num_classes);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < test.rows(); ++t) {
    for (std::size_t i = 0; i < train.rows(); ++i) sims[i] = {dot(test.row(t), train.row(i)), i};
    auto by_similarity = [](const auto& x, const auto& y) {
      return x.first > y.first || (x.first == y.first && x.second < y.second);
    };
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(), by_similarity);
    std::fill(scores.begin(), scores.end(), 0.0);
    for (std::size_t n = 0; n < k; ++n) {
      // exp((cos - 1) / T) ranks classes exactly like exp(cos / T) without overflow.
      double w = weighted ? std::exp((sims[n].first - 1.0) / T) : 1.0;
      scores[train_labels[sims[n].second]] += w;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (scores[c] > scores[best]) best = c;
    res.predictions[t] = static_cast<std::uint32_t>(best);
    if (!test_labels.empty() && test_labels[t] == best) ++correct;
  }
  if (!test_labels.empty() && test.rows() > 0) {
    res.accuracy = static_cast<double>(correct) / static_cast<double>(test.rows());
  }
  return res;
}

double nmi(const std::vector<std::size_t>& a_raw, const std::vector<std::size_t>& b_raw) {
  if (a_raw.size() != b_raw.size()) throw Error("nmi: length mismatch");
  if (a_raw.empty()) throw Error("nmi: empty labelings");
  std::size_t ka = 0;
  std::size_t kb = 0;
  auto a = compact_labels(a_raw, ka);
  auto b = compact_labels(b_raw, kb);
  const double n = static_cast<double>(a.size());
  std::vector<double> table(ka * kb, 0.0);
  std::vector<double> ca(ka, 0.0);
  std::vector<double> cb(kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[a[i] * kb + b[i]] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  auto entropy = [n](const std::vector<double>& c) {
    double h = 0.0;
    for (double x : c)
      if (x > 0) h -= (x / n) * std::log(x / n);
    return h;
  };
  const double ha = entropy(ca);
  const double hb = entropy(cb);
  if (ha <= 0.0 || hb <= 0.0) {
    // Identical up to relabeling iff both are constant here.
    return (ka == kb && ka == 1) ? 1.0 : 0.0;
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < ka; ++i) {
    for (std::size_t j = 0; j < kb; ++j) {
      double nij = table[i * kb + j];
      if (nij > 0) mi += (nij / n) * std::log(n * nij / (ca[i] * cb[j]));
    }
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

double cluster_then_nmi(const Matrix& feats, const std::vector<std::size_t>& labels,
                        std::size_t num_classes, std::uint64_t seed) {
  if (labels.size() != feats.rows()) throw Error("cluster_then_nmi: label count mismatch");
  auto clusters = spherical_kmeans(feats, std::min(num_classes, feats.rows()), seed);
  return nmi(clusters.assignment, labels);
}

double cluster_then_nmi(const Matrix& feats, const Matrix& feats_other, std::size_t num_classes,
                        std::uint64_t seed) {
  if (feats.rows() != feats_other.rows()) throw Error("cluster_then_nmi: row count mismatch");
  const std::size_t k = std::min(num_classes, feats.rows());
  auto a = spherical_kmeans(feats, k, seed);
  auto b = spherical_kmeans(feats_other, k, seed);
  return nmi(a.assignment, b.assignment);
}

double retrieval_top1(const Matrix& feats_a, const Matrix& feats_b) {
  if (feats_a.rows() != feats_b.rows()) throw Error("retrieval_top1: row count mismatch");
  if (feats_a.rows() == 0) return 0.0;
  const Matrix a = unit_copy(feats_a);
  const Matrix b = unit_copy(feats_b);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::size_t best = 0;
    double best_sim = dot(a.row(i), b.row(0));
    for (std::size_t j = 1; j < b.rows(); ++j) {
      double s = dot(a.row(i), b.row(j));
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(a.rows());
}

std::size_t SimilarityReport::bin_of(double cosine) {
  double c = std::clamp(cosine, -1.0, 1.0);
  auto bin = static_cast<std::size_t>((c + 1.0) / 2.0 * static_cast<double>(kBins));
  return std::min(bin, kBins - 1);
}

double SimilarityReport::bin_center(std::size_t bin) {
  return -1.0 + (static_cast<double>(bin) + 0.5) * (2.0 / static_cast<double>(kBins));
}

std::string SimilarityReport::to_csv() const {
  std::ostringstream os;
  os << "bin_center,pos_count,neg_count\n";
  os.precision(6);
  for (std::size_t b = 0; b < kBins; ++b) {
    os << std::fixed << bin_center(b) << "," << pos_hist[b] << "," << neg_hist[b] << "\n";
  }
  return os.str();
}

SimilarityReport similarity_report(const Matrix& feats_a, const Matrix& feats_b) {
  if (feats_a.rows() != feats_b.rows()) throw Error("similarity_report: row count mismatch");
  if (feats_a.rows() < 2) throw Error("similarity_report: need at least 2 rows");
  const Matrix a = unit_copy(feats_a);
  const Matrix b = unit_copy(feats_b);
  const std::size_t n = a.rows();
  SimilarityReport rep;
  double pos = 0.0;
  double neg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double c = std::clamp(dot(a.row(i), b.row(j)), -1.0, 1.0);
      if (i == j) {
        pos += c;
        ++rep.pos_hist[SimilarityReport::bin_of(c)];
      } else {
        neg += c;
        ++rep.neg_hist[SimilarityReport::bin_of(c)];
      }
    }
  }
  rep.mean_pos = pos / static_cast<double>(n);
  rep.mean_neg = neg / static_cast<double>(n * (n - 1));
  rep.mean_gap = rep.mean_pos - rep.mean_neg;
  return rep;
}

TuningScore tuning_score(const Matrix& feats, const Matrix& feats_other, std::size_t num_groups,
                         std::uint64_t seed) {
  TuningScore t;
  t.nmi = cluster_then_nmi(feats, feats_other, num_groups, seed);
  t.retrieval = retrieval_top1(feats, feats_other);
  t.score = t.nmi * t.retrieval;
  return t;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["knn_top1"] = knn_top1;
  j["nmi_vs_labels"] = nmi_vs_labels;
  j["retrieval_top1"] = retrieval_top1;
  j["nmi_ff"] = nmi_ff;
  j["tuning_score"] = tuning_score;
  j["sim_mean_pos"] = similarity.mean_pos;
  j["sim_mean_neg"] = similarity.mean_neg;
  j["sim_mean_gap"] = similarity.mean_gap;
  for (std::size_t c = 0; c < per_class_accuracy.size(); ++c) {
    j["class_" + std::to_string(c) + "_accuracy"] = per_class_accuracy[c];
  }
  return j.dump(2);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(x);
  auto ry = ranks(y);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace cld

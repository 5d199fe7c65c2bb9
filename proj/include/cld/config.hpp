#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cld/contrast.hpp"
#include "cld/datagen.hpp"
#include "cld/encoder.hpp"

namespace cld {

/// Where the training data comes from: a CLD1 file, CIFAR-10 batches, or a generator.
struct DataSpec {
  std::string path;                 // CLD1 file
  std::vector<std::string> cifar;   // CIFAR-10 batch files
  std::string kind = "mixture";     // mixture | correlated
  std::uint32_t classes = 4;
  std::size_t per_class = 128;      // groups per class for `correlated`
  std::size_t views_per_group = 1;
  std::size_t dim = 32;
  double sep = 8.0;
  double corr_sigma = 0.4;
  double longtail_rho = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const DataSpec&) const = default;
};

Dataset load_data(const DataSpec& spec);

enum class Schedule { constant, cosine, step };
enum class ClusterMethod { kmeans, spectral };
enum class BankUpdate { view_a, both };
enum class EvalFeature { instance, latent };

struct OptimizerConfig {
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  Schedule schedule = Schedule::cosine;
  std::vector<std::size_t> milestones;  // epochs
  double factor = 0.2;

  bool operator==(const OptimizerConfig&) const = default;
};

struct Config {
  DataSpec data;
  /// input_dim = 0 means "take it from the dataset".
  Architecture arch{0, {64}, 32, 32, 32, HeadKind::linear, true, false};

  double lambda = 0.25;
  double T_I = 0.2;
  double T_G = 0.2;
  std::size_t num_negatives = 0;  // 0: min(n - 1, 4096)
  std::size_t k_groups = 0;       // 0: batch_size / 2
  CentroidGrad centroid_grad = CentroidGrad::through;
  ClusterMethod clustering = ClusterMethod::kmeans;
  SpectralEnd spectral_end = SpectralEnd::smallest;
  int kmeans_iters = 20;

  AugmentConfig augment{0.3, 0.1, 0.8, 1.2, 4, 0.5, 0.1};
  /// Views for retrieval and the tuning score at evaluation; unset reuses augment.
  std::optional<AugmentConfig> eval_augment;
  OptimizerConfig optimizer;

  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  double bank_momentum = 0.5;
  BankUpdate bank_update = BankUpdate::view_a;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // epochs; 0 evaluates only at the end
  std::size_t knn_k = 200;
  double knn_T = 0.07;  // +inf: majority vote
  EvalFeature eval_feature = EvalFeature::instance;
  std::string out_dir;

  bool operator==(const Config&) const = default;

  /// Architecture with input_dim filled in from the data.
  Architecture resolved_arch(std::size_t input_dim) const;
  /// Contrast settings with num_negatives/k_groups defaults applied for n samples.
  ContrastConfig resolved_contrast(std::size_t dataset_size) const;
  const AugmentConfig& view_augment() const { return eval_augment ? *eval_augment : augment; }
  std::size_t resolved_k_groups() const { return k_groups != 0 ? k_groups : std::max<std::size_t>(2, batch_size / 2); }
};

/// Strict JSON parsing: unknown keys and constraint violations throw ConfigError naming the key.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);
std::string serialize_config(const Config& cfg);

}  // namespace cld

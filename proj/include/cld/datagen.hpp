#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cld/numerics.hpp"

namespace cld {

enum class DataKind : std::uint8_t { vector = 0, image32x32x3 = 1 };

/// Labeled samples. Labels are for evaluation only; the training path works on
/// `UnlabeledView`.
struct Dataset {
  Matrix samples;
  std::vector<std::uint32_t> labels;
  std::uint32_t num_classes = 0;
  DataKind kind = DataKind::vector;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
  std::vector<std::size_t> class_counts() const;
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

/// Read-only, label-free handle on a dataset's samples.
class UnlabeledView {
 public:
  explicit UnlabeledView(const Dataset& ds) : samples_(&ds.samples), kind_(ds.kind) {}
  const Matrix& samples() const { return *samples_; }
  DataKind kind() const { return kind_; }
  std::size_t size() const { return samples_->rows(); }
  std::size_t dim() const { return samples_->cols(); }

 private:
  const Matrix* samples_;
  DataKind kind_;
};

struct AugmentConfig {
  // vector data
  double noise_sigma = 0.0;
  double mask_prob = 0.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  // image data
  int crop_pad = 0;
  double flip_prob = 0.0;
  double brightness_jitter = 0.0;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

struct ViewPair {
  Vector view_a;
  Vector view_b;
  std::size_t index = 0;
};

Dataset generate_mixture(std::uint32_t num_classes, std::size_t per_class, std::size_t dim,
                         double sep, std::uint64_t seed);

/// Exponential profile: class c keeps ceil(n_max * rho^(c/(C-1))) samples.
Dataset apply_longtail(const Dataset& ds, double imbalance, std::uint64_t seed);

/// Groups of near-duplicate views around per-object base vectors.
Dataset generate_correlated(std::uint32_t num_classes, std::size_t groups_per_class,
                            std::size_t views_per_group, std::size_t dim, double sep,
                            double corr_sigma, std::uint64_t seed);

/// Group id (object index) of sample i in generate_correlated output.
inline std::size_t correlated_group_of(std::size_t i, std::size_t views_per_group) {
  return i / views_per_group;
}

Vector augment_sample(std::span<const double> raw, DataKind kind, const AugmentConfig& aug,
                      Rng& rng);

std::vector<ViewPair> make_views(const UnlabeledView& data, std::span<const std::size_t> indices,
                                 const AugmentConfig& aug, Rng& rng);

/// Stack the two views of each pair into matrices (row i = pairs[i]).
void stack_views(const std::vector<ViewPair>& pairs, Matrix& a, Matrix& b);

// ---- CIFAR-10 binary batches -------------------------------------------------

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;

struct CifarRecord {
  std::uint8_t label = 0;
  std::vector<std::uint8_t> pixels;  // R, G, B planes, 32x32 row-major each
};

std::vector<CifarRecord> read_cifar10_raw(const std::filesystem::path& path);
void write_cifar10_raw(const std::filesystem::path& path, const std::vector<CifarRecord>& records);
/// Scales to [0,1] and standardizes per channel with the usual CIFAR-10 constants.
Dataset load_cifar10(const std::vector<std::filesystem::path>& paths);

// ---- native CLD1 format --------------------------------------------------------

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

}  // namespace cld

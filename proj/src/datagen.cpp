#include "cld/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cld/error.hpp"

namespace cld {

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto l : labels) {
    if (l < num_classes) ++counts[l];
  }
  return counts;
}

void Dataset::validate() const {
  if (labels.size() != samples.rows()) throw Error("dataset: label count != sample count");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw Error("dataset: label " + std::to_string(labels[i]) + " at sample " +
                  std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!all_finite(samples.data())) throw NumericError("dataset: non-finite sample value");
}

void AugmentConfig::validate() const {
  if (!(noise_sigma >= 0)) throw ConfigError("augment.noise_sigma must be >= 0");
  if (!(mask_prob >= 0 && mask_prob < 1)) throw ConfigError("augment.mask_prob must be in [0, 1)");
  if (!(scale_lo > 0 && scale_lo <= scale_hi)) {
    throw ConfigError("augment.scale_range must satisfy 0 < lo <= hi");
  }
  if (crop_pad < 0) throw ConfigError("augment.crop_pad must be >= 0");
  if (!(flip_prob >= 0 && flip_prob <= 1)) throw ConfigError("augment.flip_prob must be in [0, 1]");
  if (!(brightness_jitter >= 0)) throw ConfigError("augment.brightness_jitter must be >= 0");
}

namespace {

Vector random_direction(std::size_t dim, Rng& rng) {
  Vector v(dim);
  for (;;) {
    for (double& x : v) x = rng.normal();
    if (norm(v) > 1e-6) return l2_normalize(v);
  }
}

void check_counts(std::uint32_t num_classes, std::size_t per_class, std::size_t dim, double sep) {
  if (num_classes < 1 || per_class < 1) throw ConfigError("class and sample counts must be >= 1");
  if (dim < 2) throw ConfigError("dim must be >= 2");
  if (!(sep >= 0)) throw ConfigError("sep must be >= 0");
}

Vector class_mean(std::size_t dim, double sep, Rng& rng) {
  Vector mu = random_direction(dim, rng);
  for (double& x : mu) x *= sep;
  return mu;
}

}  // namespace

Dataset generate_mixture(std::uint32_t num_classes, std::size_t per_class, std::size_t dim,
                         double sep, std::uint64_t seed) {
  check_counts(num_classes, per_class, dim, sep);
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = num_classes;
  ds.samples = Matrix(num_classes * per_class, dim);
  ds.labels.resize(num_classes * per_class);
  std::size_t r = 0;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    Vector mu = class_mean(dim, sep, rng);
    for (std::size_t s = 0; s < per_class; ++s, ++r) {
      auto row = ds.samples.row(r);
      for (std::size_t j = 0; j < dim; ++j) row[j] = mu[j] + rng.normal();
      ds.labels[r] = c;
    }
  }
  return ds;
}

Dataset apply_longtail(const Dataset& ds, double imbalance, std::uint64_t seed) {
  if (!(imbalance > 0)) throw ConfigError("longtail: imbalance ratio must be > 0");
  if (imbalance > 1) throw ConfigError("longtail: imbalance ratio must be <= 1");
  auto counts = ds.class_counts();
  if (counts.empty()) return ds;
  const std::size_t n_max = counts[0];
  for (auto c : counts) {
    if (c != n_max) throw ConfigError("longtail: input dataset must be class-balanced");
  }
  const std::size_t num_classes = counts.size();
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t target = n_max;
    if (c > 0) {
      double frac = std::pow(imbalance, static_cast<double>(c) / static_cast<double>(num_classes - 1));
      target = static_cast<std::size_t>(std::ceil(static_cast<double>(n_max) * frac - 1e-9));
      target = std::clamp<std::size_t>(target, 1, n_max);
    }
    const auto& members = by_class[c];
    if (target == members.size()) {
      keep.insert(keep.end(), members.begin(), members.end());
      continue;
    }
    auto picks = rng.sample_without_replacement(members.size(), target);
    std::sort(picks.begin(), picks.end());
    for (auto p : picks) keep.push_back(members[p]);
  }
  std::sort(keep.begin(), keep.end());

  Dataset out;
  out.num_classes = ds.num_classes;
  out.kind = ds.kind;
  out.samples = ds.samples.select_rows(keep);
  out.labels.reserve(keep.size());
  for (auto i : keep) out.labels.push_back(ds.labels[i]);
  return out;
}

Dataset generate_correlated(std::uint32_t num_classes, std::size_t groups_per_class,
                            std::size_t views_per_group, std::size_t dim, double sep,
                            double corr_sigma, std::uint64_t seed) {
  check_counts(num_classes, groups_per_class, dim, sep);
  if (views_per_group < 1) throw ConfigError("views_per_group must be >= 1");
  if (!(corr_sigma >= 0)) throw ConfigError("corr_sigma must be >= 0");
  Rng rng(seed);
  const std::size_t n = num_classes * groups_per_class * views_per_group;
  Dataset ds;
  ds.num_classes = num_classes;
  ds.samples = Matrix(n, dim);
  ds.labels.resize(n);
  std::size_t r = 0;
  Vector base(dim);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    Vector mu = class_mean(dim, sep, rng);
    for (std::size_t g = 0; g < groups_per_class; ++g) {
      for (std::size_t j = 0; j < dim; ++j) base[j] = mu[j] + rng.normal();
      for (std::size_t v = 0; v < views_per_group; ++v, ++r) {
        auto row = ds.samples.row(r);
        for (std::size_t j = 0; j < dim; ++j) row[j] = base[j] + corr_sigma * rng.normal();
        ds.labels[r] = c;
      }
    }
  }
  return ds;
}

namespace {

constexpr std::size_t kSide = 32;
constexpr std::size_t kPlane = kSide * kSide;

Vector augment_image(std::span<const double> raw, const AugmentConfig& aug, Rng& rng) {
  if (raw.size() != 3 * kPlane) throw Error("image augmentation expects 3072 values");
  const int pad = aug.crop_pad;
  int dx = 0;
  int dy = 0;
  if (pad > 0) {
    dx = static_cast<int>(rng.uniform_index(2 * pad + 1)) - pad;
    dy = static_cast<int>(rng.uniform_index(2 * pad + 1)) - pad;
  }
  const bool flip = aug.flip_prob > 0 && rng.bernoulli(aug.flip_prob);
  double shift[3] = {0, 0, 0};
  if (aug.brightness_jitter > 0) {
    for (double& s : shift) s = rng.uniform(-aug.brightness_jitter, aug.brightness_jitter);
  }
  Vector out(raw.size(), 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (int y = 0; y < static_cast<int>(kSide); ++y) {
      for (int x = 0; x < static_cast<int>(kSide); ++x) {
        int sx = (flip ? static_cast<int>(kSide) - 1 - x : x) + dx;
        int sy = y + dy;
        double v = 0.0;
        if (sx >= 0 && sy >= 0 && sx < static_cast<int>(kSide) && sy < static_cast<int>(kSide)) {
          v = raw[c * kPlane + static_cast<std::size_t>(sy) * kSide + static_cast<std::size_t>(sx)];
        }
        out[c * kPlane + static_cast<std::size_t>(y) * kSide + static_cast<std::size_t>(x)] =
            v + shift[c];
      }
    }
  }
  return out;
}

Vector augment_vector(std::span<const double> raw, const AugmentConfig& aug, Rng& rng) {
  Vector out(raw.begin(), raw.end());
  if (aug.scale_lo != 1.0 || aug.scale_hi != 1.0) {
    double s = rng.uniform(aug.scale_lo, aug.scale_hi);
    for (double& x : out) x *= s;
  }
  if (aug.mask_prob > 0) {
    for (double& x : out)
      if (rng.bernoulli(aug.mask_prob)) x = 0.0;
  }
  if (aug.noise_sigma > 0) {
    for (double& x : out) x += aug.noise_sigma * rng.normal();
  }
  return out;
}

}  // namespace

Vector augment_sample(std::span<const double> raw, DataKind kind, const AugmentConfig& aug,
                      Rng& rng) {
  return kind == DataKind::image32x32x3 ? augment_image(raw, aug, rng)
                                        : augment_vector(raw, aug, rng);
}

std::vector<ViewPair> make_views(const UnlabeledView& data, std::span<const std::size_t> indices,
                                 const AugmentConfig& aug, Rng& rng) {
  std::vector<ViewPair> pairs;
  pairs.reserve(indices.size());
  for (auto i : indices) {
    if (i >= data.size()) throw Error("make_views: index " + std::to_string(i) + " out of range");
    auto raw = data.samples().row(i);
    ViewPair p;
    p.index = i;
    p.view_a = augment_sample(raw, data.kind(), aug, rng);
    p.view_b = augment_sample(raw, data.kind(), aug, rng);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void stack_views(const std::vector<ViewPair>& pairs, Matrix& a, Matrix& b) {
  const std::size_t dim = pairs.empty() ? 0 : pairs[0].view_a.size();
  a = Matrix(pairs.size(), dim);
  b = Matrix(pairs.size(), dim);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::copy(pairs[i].view_a.begin(), pairs[i].view_a.end(), a.row(i).begin());
    std::copy(pairs[i].view_b.begin(), pairs[i].view_b.end(), b.row(i).begin());
  }
}

// ---- binary helpers ----------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
  return v;
}

constexpr std::uint8_t kCld1Magic[4] = {0x43, 0x4C, 0x44, 0x31};
constexpr std::size_t kCld1Header = 17;

constexpr double kCifarMean[3] = {0.4914, 0.4822, 0.4465};
constexpr double kCifarStd[3] = {0.2470, 0.2435, 0.2616};

}  // namespace

std::vector<CifarRecord> read_cifar10_raw(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    std::size_t bad = bytes.size() - bytes.size() % kCifarRecordBytes;
    throw FormatError(path.string() + ": size not multiple of 3073 (" +
                      std::to_string(bytes.size()) + " bytes, incomplete record at byte offset " +
                      std::to_string(bad) + ")");
  }
  std::vector<CifarRecord> records(bytes.size() / kCifarRecordBytes);
  for (std::size_t r = 0; r < records.size(); ++r) {
    std::size_t off = r * kCifarRecordBytes;
    if (bytes[off] > 9) {
      throw FormatError(path.string() + ": label " + std::to_string(bytes[off]) +
                        " > 9 at byte offset " + std::to_string(off));
    }
    records[r].label = bytes[off];
    records[r].pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off + 1),
                             bytes.begin() + static_cast<std::ptrdiff_t>(off + kCifarRecordBytes));
  }
  return records;
}

void write_cifar10_raw(const std::filesystem::path& path, const std::vector<CifarRecord>& records) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(records.size() * kCifarRecordBytes);
  for (const auto& r : records) {
    if (r.pixels.size() != kCifarPixels) throw FormatError("cifar record must hold 3072 pixels");
    bytes.push_back(r.label);
    bytes.insert(bytes.end(), r.pixels.begin(), r.pixels.end());
  }
  write_file(path, bytes);
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& paths) {
  std::vector<CifarRecord> all;
  for (const auto& p : paths) {
    auto recs = read_cifar10_raw(p);
    all.insert(all.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  Dataset ds;
  ds.kind = DataKind::image32x32x3;
  ds.num_classes = 10;
  ds.samples = Matrix(all.size(), kCifarPixels);
  ds.labels.resize(all.size());
  for (std::size_t r = 0; r < all.size(); ++r) {
    ds.labels[r] = all[r].label;
    auto row = ds.samples.row(r);
    for (std::size_t j = 0; j < kCifarPixels; ++j) {
      std::size_t c = j / kPlane;
      row[j] = (all[r].pixels[j] / 255.0 - kCifarMean[c]) / kCifarStd[c];
    }
  }
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ds.validate();
  std::vector<std::uint8_t> out(std::begin(kCld1Magic), std::end(kCld1Magic));
  out.reserve(kCld1Header + ds.size() * (4 + 4 * ds.dim()));
  put_u32(out, static_cast<std::uint32_t>(ds.size()));
  put_u32(out, static_cast<std::uint32_t>(ds.dim()));
  put_u32(out, ds.num_classes);
  out.push_back(static_cast<std::uint8_t>(ds.kind));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    put_u32(out, ds.labels[i]);
    for (double x : ds.samples.row(i)) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCld1Header || !std::equal(std::begin(kCld1Magic), std::end(kCld1Magic), bytes.begin())) {
    throw FormatError("not a CLD1 dataset (bad magic)");
  }
  const std::uint32_t n = get_u32(bytes, 4);
  const std::uint32_t dim = get_u32(bytes, 8);
  Dataset ds;
  ds.num_classes = get_u32(bytes, 12);
  const std::uint8_t kind = bytes[16];
  if (kind > 1) throw FormatError("CLD1: unknown kind " + std::to_string(kind));
  ds.kind = static_cast<DataKind>(kind);
  const std::size_t record = 4 + 4 * static_cast<std::size_t>(dim);
  const std::size_t expected = kCld1Header + record * n;
  if (bytes.size() != expected) {
    throw FormatError("CLD1: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  ds.samples = Matrix(n, dim);
  ds.labels.resize(n);
  std::size_t off = kCld1Header;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = get_u32(bytes, off);
    off += 4;
    auto row = ds.samples.row(i);
    for (std::size_t j = 0; j < dim; ++j, off += 4) {
      row[j] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, off)));
    }
  }
  ds.validate();
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  write_file(path, encode_dataset(ds));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace cld

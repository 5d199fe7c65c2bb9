#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cld/numerics.hpp"

namespace cld {

enum class HeadKind : std::uint8_t { linear = 0, norm_linear = 1 };

/// MLP backbone (ReLU hidden layers, linear latent layer) with an instance
/// head and a group head, one FC layer each.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t latent_dim = 0;
  std::size_t head_dim_I = 0;
  std::size_t head_dim_G = 0;
  HeadKind head_kind = HeadKind::linear;
  /// Re-normalize head outputs to unit length. Only norm_linear heads may turn it off.
  bool renorm_head = true;
  /// The group branch reuses the instance head (single-branch ablation).
  bool shared_head = false;

  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  bool operator==(const DenseLayer&) const = default;
};

struct EncoderParams {
  Architecture arch;
  std::vector<DenseLayer> backbone;
  Matrix head_I;  // head_dim_I x latent
  Matrix head_G;  // head_dim_G x latent; empty when shared_head

  std::size_t num_parameters() const;
  /// Flattened in checkpoint order: backbone (W, b) per layer, head_I, head_G.
  Vector flatten() const;
  void unflatten(std::span<const double> flat);
  bool operator==(const EncoderParams&) const = default;
};

/// Same layout as EncoderParams.
using ParamGrads = EncoderParams;

struct HeadCache {
  Matrix pre;     // head output before the final row normalization
  Matrix out;     // final head output
  Vector pre_norms;
  // norm_linear only
  Matrix unit_weight;
  Vector weight_norms;
};

struct ForwardCache {
  std::vector<Matrix> inputs;          // input to each backbone layer
  std::vector<Matrix> pre_activations; // W x + b per backbone layer
  Matrix latent;
  Matrix unit_latent;  // norm_linear only
  Vector latent_norms;
  HeadCache head_I;
  HeadCache head_G;

  const Matrix& fI() const { return head_I.out; }
  const Matrix& fG() const { return head_G.out; }
};

EncoderParams init_params(const Architecture& arch, std::uint64_t seed);

/// Backbone-only forward; returns latent features f(x).
Matrix embed_latent(const EncoderParams& params, const Matrix& batch);

ForwardCache forward(const EncoderParams& params, const Matrix& batch);

/// Cosine of each (normalized) weight row with the normalized feature.
Vector project_normalized(const Matrix& weight, std::span<const double> feature);

ParamGrads zero_grads(const EncoderParams& params);

/// Exact gradients for upstream gradients on the final head outputs.
ParamGrads backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& grad_fI,
                    const Matrix& grad_fG);

/// Projects g onto the tangent space of the sphere at v/|v| and scales by 1/|v|.
void normalize_backward(std::span<const double> unit, double length, std::span<const double> grad,
                        std::span<double> out);

void write_checkpoint(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams read_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const EncoderParams& params);
EncoderParams decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace cld

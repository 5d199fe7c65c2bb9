#include "cld/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "cld/error.hpp"

namespace cld {

void Architecture::validate() const {
  if (input_dim < 1 || latent_dim < 1 || head_dim_I < 1 || head_dim_G < 1) {
    throw ConfigError("arch: all dims must be >= 1");
  }
  for (auto h : hidden_dims)
    if (h < 1) throw ConfigError("arch: hidden dims must be >= 1");
  if (!renorm_head && head_kind == HeadKind::linear) {
    throw ConfigError("arch: renorm_head=false requires head_kind=norm_linear");
  }
  if (shared_head && head_dim_G != head_dim_I) {
    throw ConfigError("arch: shared_head requires head_dim_G == head_dim_I");
  }
}

std::size_t EncoderParams::num_parameters() const {
  std::size_t n = head_I.size() + head_G.size();
  for (const auto& l : backbone) n += l.weight.size() + l.bias.size();
  return n;
}

Vector EncoderParams::flatten() const {
  Vector flat;
  flat.reserve(num_parameters());
  for (const auto& l : backbone) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  flat.insert(flat.end(), head_I.data().begin(), head_I.data().end());
  flat.insert(flat.end(), head_G.data().begin(), head_G.data().end());
  return flat;
}

void EncoderParams::unflatten(std::span<const double> flat) {
  if (flat.size() != num_parameters()) throw Error("unflatten: parameter count mismatch");
  auto it = flat.begin();
  auto take = [&](std::vector<double>& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  for (auto& l : backbone) {
    take(l.weight.data());
    take(l.bias);
  }
  take(head_I.data());
  take(head_G.data());
}

namespace {

Matrix glorot(std::size_t out, std::size_t in, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(out, in);
  for (double& x : w.data()) x = rng.uniform(-a, a);
  return w;
}

}  // namespace

EncoderParams init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  EncoderParams p;
  p.arch = arch;
  std::size_t in = arch.input_dim;
  for (auto h : arch.hidden_dims) {
    p.backbone.push_back({glorot(h, in, rng), Vector(h, 0.0)});
    in = h;
  }
  p.backbone.push_back({glorot(arch.latent_dim, in, rng), Vector(arch.latent_dim, 0.0)});
  p.head_I = glorot(arch.head_dim_I, arch.latent_dim, rng);
  if (!arch.shared_head) p.head_G = glorot(arch.head_dim_G, arch.latent_dim, rng);
  return p;
}

namespace {

Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
  Matrix y = matmul_nt(x, layer.weight);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
  }
  return y;
}

void relu_inplace(Matrix& m) {
  for (double& x : m.data()) x = x > 0.0 ? x : 0.0;
}

Vector row_norms(const Matrix& m, const char* what) {
  Vector n(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    n[r] = norm(m.row(r));
    if (!(n[r] >= 1e-12)) {
      throw NumericError(std::string("degenerate norm in ") + what + " at row " + std::to_string(r));
    }
  }
  return n;
}

Matrix divide_rows(const Matrix& m, const Vector& norms) {
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (double& x : out.row(r)) x /= norms[r];
  return out;
}

HeadCache head_forward(const Matrix& weight, const ForwardCache& cache, const Architecture& arch,
                       const char* name) {
  HeadCache h;
  if (arch.head_kind == HeadKind::linear) {
    h.pre = matmul_nt(cache.latent, weight);
  } else {
    h.weight_norms = row_norms(weight, (std::string(name) + " weights").c_str());
    h.unit_weight = divide_rows(weight, h.weight_norms);
    h.pre = matmul_nt(cache.unit_latent, h.unit_weight);
  }
  if (arch.renorm_head) {
    h.pre_norms = row_norms(h.pre, name);
    h.out = divide_rows(h.pre, h.pre_norms);
  } else {
    h.out = h.pre;
  }
  return h;
}

}  // namespace

Matrix embed_latent(const EncoderParams& params, const Matrix& batch) {
  if (batch.cols() != params.arch.input_dim) {
    throw Error("forward: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                std::to_string(params.arch.input_dim));
  }
  Matrix x = batch;
  for (std::size_t l = 0; l < params.backbone.size(); ++l) {
    x = dense_forward(params.backbone[l], x);
    if (l + 1 < params.backbone.size()) relu_inplace(x);
  }
  return x;
}

ForwardCache forward(const EncoderParams& params, const Matrix& batch) {
  if (batch.cols() != params.arch.input_dim) {
    throw Error("forward: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                std::to_string(params.arch.input_dim));
  }
  ForwardCache cache;
  Matrix x = batch;
  for (std::size_t l = 0; l < params.backbone.size(); ++l) {
    cache.inputs.push_back(x);
    Matrix z = dense_forward(params.backbone[l], x);
    cache.pre_activations.push_back(z);
    if (l + 1 < params.backbone.size()) relu_inplace(z);
    x = std::move(z);
  }
  cache.latent = std::move(x);
  if (params.arch.head_kind == HeadKind::norm_linear) {
    cache.latent_norms = row_norms(cache.latent, "latent");
    cache.unit_latent = divide_rows(cache.latent, cache.latent_norms);
  }
  cache.head_I = head_forward(params.head_I, cache, params.arch, "f_I");
  if (params.arch.shared_head) {
    cache.head_G = cache.head_I;
  } else {
    cache.head_G = head_forward(params.head_G, cache, params.arch, "f_G");
  }
  return cache;
}

Vector project_normalized(const Matrix& weight, std::span<const double> feature) {
  if (weight.cols() != feature.size()) throw Error("project_normalized: shape mismatch");
  double fn = norm(feature);
  if (!(fn >= 1e-12)) throw NumericError("project_normalized: zero feature");
  Vector out(weight.rows());
  for (std::size_t t = 0; t < weight.rows(); ++t) {
    double wn = norm(weight.row(t));
    if (!(wn >= 1e-12)) throw NumericError("project_normalized: zero weight row " + std::to_string(t));
    out[t] = dot(weight.row(t), feature) / (wn * fn);
  }
  return out;
}

ParamGrads zero_grads(const EncoderParams& params) {
  ParamGrads g;
  g.arch = params.arch;
  for (const auto& l : params.backbone) {
    g.backbone.push_back({Matrix(l.weight.rows(), l.weight.cols()), Vector(l.bias.size(), 0.0)});
  }
  g.head_I = Matrix(params.head_I.rows(), params.head_I.cols());
  g.head_G = Matrix(params.head_G.rows(), params.head_G.cols());
  return g;
}

void normalize_backward(std::span<const double> unit, double length, std::span<const double> grad,
                        std::span<double> out) {
  const double proj = dot(unit, grad);
  for (std::size_t j = 0; j < unit.size(); ++j) out[j] = (grad[j] - proj * unit[j]) / length;
}

namespace {

/// Accumulates the head weight gradient into `grad_weight` and the latent
/// gradient into `grad_latent`.
void head_backward(const Matrix& weight, const HeadCache& h, const ForwardCache& cache,
                   const Architecture& arch, const Matrix& grad_out, Matrix& grad_weight,
                   Matrix& grad_latent) {
  const std::size_t batch = grad_out.rows();
  Matrix grad_pre = grad_out;
  if (arch.renorm_head) {
    for (std::size_t r = 0; r < batch; ++r) {
      normalize_backward(h.out.row(r), h.pre_norms[r], grad_out.row(r), grad_pre.row(r));
    }
  }
  if (arch.head_kind == HeadKind::linear) {
    Matrix gw = matmul_tn(grad_pre, cache.latent);
    for (std::size_t i = 0; i < gw.size(); ++i) grad_weight.data()[i] += gw.data()[i];
    Matrix gl = matmul(grad_pre, weight);
    for (std::size_t i = 0; i < gl.size(); ++i) grad_latent.data()[i] += gl.data()[i];
    return;
  }
  // pre = unit_latent * unit_weight^T
  Matrix g_unit_w = matmul_tn(grad_pre, cache.unit_latent);  // head x latent
  Vector tmp(weight.cols());
  for (std::size_t t = 0; t < weight.rows(); ++t) {
    normalize_backward(h.unit_weight.row(t), h.weight_norms[t], g_unit_w.row(t), tmp);
    auto dst = grad_weight.row(t);
    for (std::size_t j = 0; j < tmp.size(); ++j) dst[j] += tmp[j];
  }
  Matrix g_unit_latent = matmul(grad_pre, h.unit_weight);  // batch x latent
  for (std::size_t r = 0; r < batch; ++r) {
    normalize_backward(cache.unit_latent.row(r), cache.latent_norms[r], g_unit_latent.row(r), tmp);
    auto dst = grad_latent.row(r);
    for (std::size_t j = 0; j < tmp.size(); ++j) dst[j] += tmp[j];
  }
}

}  // namespace

ParamGrads backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& grad_fI,
                    const Matrix& grad_fG) {
  const std::size_t batch = cache.latent.rows();
  if (grad_fI.rows() != batch || grad_fI.cols() != params.arch.head_dim_I || grad_fG.rows() != batch ||
      grad_fG.cols() != params.arch.head_dim_G) {
    throw Error("backward: gradient shape mismatch");
  }
  ParamGrads g = zero_grads(params);
  Matrix grad_latent(batch, params.arch.latent_dim);
  if (params.arch.shared_head) {
    Matrix sum = grad_fI;
    for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] += grad_fG.data()[i];
    head_backward(params.head_I, cache.head_I, cache, params.arch, sum, g.head_I, grad_latent);
  } else {
    head_backward(params.head_I, cache.head_I, cache, params.arch, grad_fI, g.head_I, grad_latent);
    head_backward(params.head_G, cache.head_G, cache, params.arch, grad_fG, g.head_G, grad_latent);
  }

  Matrix grad = std::move(grad_latent);
  for (std::size_t l = params.backbone.size(); l-- > 0;) {
    if (l + 1 < params.backbone.size()) {
      const Matrix& z = cache.pre_activations[l];
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(z.data()[i] > 0.0)) grad.data()[i] = 0.0;
    }
    g.backbone[l].weight = matmul_tn(grad, cache.inputs[l]);
    auto& gb = g.backbone[l].bias;
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      auto row = grad.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) gb[j] += row[j];
    }
    if (l > 0) grad = matmul(grad, params.backbone[l].weight);
  }
  return g;
}

// ---- checkpoint ----------------------------------------------------------------

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'L', 'D', 'M'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double x) {
  auto v = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const EncoderParams& params) {
  const auto& a = params.arch;
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(a.input_dim));
  put_u32(out, static_cast<std::uint32_t>(a.hidden_dims.size()));
  for (auto h : a.hidden_dims) put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(a.latent_dim));
  put_u32(out, static_cast<std::uint32_t>(a.head_dim_I));
  put_u32(out, static_cast<std::uint32_t>(a.head_dim_G));
  out.push_back(static_cast<std::uint8_t>(a.head_kind));
  out.push_back(a.renorm_head ? 1 : 0);
  out.push_back(a.shared_head ? 1 : 0);
  for (double x : params.flatten()) put_f64(out, x);
  return out;
}

EncoderParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("not a CLDM checkpoint (bad magic)");
  }
  Reader rd(bytes.subspan(4));
  Architecture a;
  a.input_dim = rd.u32();
  const std::uint32_t depth = rd.u32();
  if (depth > 1024) throw FormatError("checkpoint: implausible hidden layer count");
  for (std::uint32_t i = 0; i < depth; ++i) a.hidden_dims.push_back(rd.u32());
  a.latent_dim = rd.u32();
  a.head_dim_I = rd.u32();
  a.head_dim_G = rd.u32();
  const std::uint8_t kind = rd.u8();
  if (kind > 1) throw FormatError("checkpoint: unknown head kind");
  a.head_kind = static_cast<HeadKind>(kind);
  a.renorm_head = rd.u8() != 0;
  a.shared_head = rd.u8() != 0;
  a.validate();
  EncoderParams p = init_params(a, 0);
  Vector flat(p.num_parameters());
  for (double& x : flat) x = rd.f64();
  if (!rd.done()) throw FormatError("checkpoint: trailing bytes");
  p.unflatten(flat);
  return p;
}

void write_checkpoint(const std::filesystem::path& path, const EncoderParams& params) {
  auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

EncoderParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace cld

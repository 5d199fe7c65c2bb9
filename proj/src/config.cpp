#include "cld/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cld/error.hpp"

namespace cld {

using nlohmann::json;

Dataset load_data(const DataSpec& spec) {
  Dataset ds;
  if (!spec.path.empty()) {
    ds = read_dataset(spec.path);
  } else if (!spec.cifar.empty()) {
    std::vector<std::filesystem::path> paths(spec.cifar.begin(), spec.cifar.end());
    ds = load_cifar10(paths);
  } else if (spec.kind == "mixture") {
    ds = generate_mixture(spec.classes, spec.per_class, spec.dim, spec.sep, spec.seed);
  } else if (spec.kind == "correlated") {
    ds = generate_correlated(spec.classes, spec.per_class, spec.views_per_group, spec.dim, spec.sep,
                             spec.corr_sigma, spec.seed);
  } else {
    throw ConfigError("data.kind must be mixture or correlated");
  }
  if (spec.longtail_rho != 1.0) ds = apply_longtail(ds, spec.longtail_rho, spec.seed + 1);
  return ds;
}

Architecture Config::resolved_arch(std::size_t input_dim) const {
  Architecture a = arch;
  if (a.input_dim == 0) a.input_dim = input_dim;
  if (a.input_dim != input_dim) {
    throw ConfigError("arch.input_dim=" + std::to_string(a.input_dim) + " but data has dim " +
                      std::to_string(input_dim));
  }
  a.validate();
  return a;
}

ContrastConfig Config::resolved_contrast(std::size_t dataset_size) const {
  ContrastConfig c;
  c.T_I = T_I;
  c.T_G = T_G;
  c.lambda = lambda;
  c.num_negatives = num_negatives != 0
                        ? num_negatives
                        : std::min<std::size_t>(dataset_size > 0 ? dataset_size - 1 : 0, 4096);
  c.k_groups = resolved_k_groups();
  c.centroid_grad = centroid_grad;
  c.validate(dataset_size, batch_size);
  return c;
}

namespace {

/// Reads keys from a JSON object and rejects whatever is left unread.
class Fields {
 public:
  Fields(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(where("") + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    auto it = obj_.find(key);
    seen_.insert(key);
    if (it == obj_.end()) return;
    try {
      dst = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void get_double(const char* key, double& dst, bool allow_inf = false) {
    auto it = obj_.find(key);
    seen_.insert(key);
    if (it == obj_.end()) return;
    if (allow_inf && (it->is_null() || (it->is_string() && it->get<std::string>() == "inf"))) {
      dst = std::numeric_limits<double>::infinity();
      return;
    }
    if (!it->is_number()) throw ConfigError(where(key) + ": expected a number");
    dst = it->get<double>();
  }

  void get_count(const char* key, std::size_t& dst) {
    auto it = obj_.find(key);
    seen_.insert(key);
    if (it == obj_.end()) return;
    if (!it->is_number_integer() || it->get<long long>() < 0) {
      throw ConfigError(where(key) + ": expected a non-negative integer");
    }
    dst = it->get<std::size_t>();
  }

  template <typename E>
  void get_enum(const char* key, E& dst, std::initializer_list<std::pair<const char*, E>> names) {
    auto it = obj_.find(key);
    seen_.insert(key);
    if (it == obj_.end()) return;
    if (it->is_string()) {
      auto s = it->get<std::string>();
      for (const auto& [name, value] : names) {
        if (s == name) {
          dst = value;
          return;
        }
      }
    }
    std::string allowed;
    for (const auto& [name, value] : names) allowed += std::string(allowed.empty() ? "" : "|") + name;
    throw ConfigError(where(key) + ": expected one of " + allowed);
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + where(it.key()) + "'");
    }
  }

  std::string where(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

const std::initializer_list<std::pair<const char*, HeadKind>> kHeadKinds = {
    {"linear", HeadKind::linear}, {"norm_linear", HeadKind::norm_linear}};
const std::initializer_list<std::pair<const char*, CentroidGrad>> kCentroidGrads = {
    {"through", CentroidGrad::through}, {"detached", CentroidGrad::detached}};
const std::initializer_list<std::pair<const char*, ClusterMethod>> kClusterMethods = {
    {"kmeans", ClusterMethod::kmeans}, {"spectral", ClusterMethod::spectral}};
const std::initializer_list<std::pair<const char*, SpectralEnd>> kSpectralEnds = {
    {"smallest", SpectralEnd::smallest}, {"largest", SpectralEnd::largest}};
const std::initializer_list<std::pair<const char*, Schedule>> kSchedules = {
    {"constant", Schedule::constant}, {"cosine", Schedule::cosine}, {"step", Schedule::step}};
const std::initializer_list<std::pair<const char*, BankUpdate>> kBankUpdates = {
    {"view_a", BankUpdate::view_a}, {"both", BankUpdate::both}};
const std::initializer_list<std::pair<const char*, EvalFeature>> kEvalFeatures = {
    {"instance", EvalFeature::instance}, {"latent", EvalFeature::latent}};

template <typename E>
const char* name_of(E v, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, value] : names)
    if (value == v) return n;
  return "?";
}

AugmentConfig parse_augment(const json& node, const std::string& name, AugmentConfig au) {
  Fields f(node, name);
  f.get_double("noise_sigma", au.noise_sigma);
  f.get_double("mask_prob", au.mask_prob);
  if (const json* sr = f.sub("scale_range")) {
    if (!sr->is_array() || sr->size() != 2 || !(*sr)[0].is_number() || !(*sr)[1].is_number()) {
      throw ConfigError(name + ".scale_range must be [lo, hi]");
    }
    au.scale_lo = (*sr)[0].get<double>();
    au.scale_hi = (*sr)[1].get<double>();
  }
  f.get("crop_pad", au.crop_pad);
  f.get_double("flip_prob", au.flip_prob);
  f.get_double("brightness_jitter", au.brightness_jitter);
  f.finish();
  au.validate();
  return au;
}

json augment_json(const AugmentConfig& au) {
  return {{"noise_sigma", au.noise_sigma},
          {"mask_prob", au.mask_prob},
          {"scale_range", {au.scale_lo, au.scale_hi}},
          {"crop_pad", au.crop_pad},
          {"flip_prob", au.flip_prob},
          {"brightness_jitter", au.brightness_jitter}};
}

}  // namespace

Config parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  Config cfg;
  Fields top(root, "");

  if (const json* d = top.sub("data")) {
    Fields f(*d, "data");
    auto& s = cfg.data;
    f.get("path", s.path);
    f.get("cifar", s.cifar);
    f.get("kind", s.kind);
    f.get("classes", s.classes);
    f.get_count("per_class", s.per_class);
    f.get_count("views_per_group", s.views_per_group);
    f.get_count("dim", s.dim);
    f.get_double("sep", s.sep);
    f.get_double("corr_sigma", s.corr_sigma);
    f.get_double("longtail_rho", s.longtail_rho);
    f.get("seed", s.seed);
    f.finish();
    require(s.kind == "mixture" || s.kind == "correlated", "data.kind must be mixture or correlated");
    require(s.classes >= 1, "data.classes must be >= 1");
    require(s.per_class >= 1, "data.per_class must be >= 1");
    require(s.views_per_group >= 1, "data.views_per_group must be >= 1");
    require(s.dim >= 2, "data.dim must be >= 2");
    require(s.sep >= 0, "data.sep must be >= 0");
    require(s.corr_sigma >= 0, "data.corr_sigma must be >= 0");
    require(s.longtail_rho > 0 && s.longtail_rho <= 1, "data.longtail_rho must be in (0, 1]");
  }

  if (const json* a = top.sub("arch")) {
    Fields f(*a, "arch");
    auto& ar = cfg.arch;
    f.get_count("input_dim", ar.input_dim);
    f.get("hidden_dims", ar.hidden_dims);
    f.get_count("latent_dim", ar.latent_dim);
    f.get_count("head_dim_I", ar.head_dim_I);
    f.get_count("head_dim_G", ar.head_dim_G);
    f.get_enum("head_kind", ar.head_kind, kHeadKinds);
    f.get("renorm_head", ar.renorm_head);
    f.get("shared_head", ar.shared_head);
    f.finish();
    require(ar.latent_dim >= 1 && ar.head_dim_I >= 1 && ar.head_dim_G >= 1, "arch: dims must be >= 1");
    for (auto h : ar.hidden_dims) require(h >= 1, "arch.hidden_dims entries must be >= 1");
    require(ar.renorm_head || ar.head_kind == HeadKind::norm_linear,
            "arch.renorm_head=false requires head_kind=norm_linear");
    require(!ar.shared_head || ar.head_dim_I == ar.head_dim_G,
            "arch.shared_head requires head_dim_I == head_dim_G");
  }

  top.get_double("lambda", cfg.lambda);
  top.get_double("T_I", cfg.T_I);
  top.get_double("T_G", cfg.T_G);
  top.get_count("num_negatives", cfg.num_negatives);
  top.get_count("k_groups", cfg.k_groups);
  top.get_enum("centroid_grad", cfg.centroid_grad, kCentroidGrads);
  top.get_enum("clustering", cfg.clustering, kClusterMethods);
  top.get_enum("spectral_end", cfg.spectral_end, kSpectralEnds);
  top.get("kmeans_iters", cfg.kmeans_iters);

  if (const json* a = top.sub("augment")) cfg.augment = parse_augment(*a, "augment", cfg.augment);
  if (const json* a = top.sub("eval_augment")) {
    cfg.eval_augment = parse_augment(*a, "eval_augment", cfg.augment);
  }

  if (const json* o = top.sub("optimizer")) {
    Fields f(*o, "optimizer");
    auto& op = cfg.optimizer;
    f.get_double("lr", op.lr);
    f.get_double("momentum", op.momentum);
    f.get_double("weight_decay", op.weight_decay);
    f.get_enum("schedule", op.schedule, kSchedules);
    f.get("milestones", op.milestones);
    f.get_double("factor", op.factor);
    f.finish();
    require(op.lr > 0, "optimizer.lr must be > 0");
    require(op.momentum >= 0 && op.momentum < 1, "optimizer.momentum must be in [0, 1)");
    require(op.weight_decay >= 0, "optimizer.weight_decay must be >= 0");
    require(op.factor > 0, "optimizer.factor must be > 0");
  }

  top.get_count("batch_size", cfg.batch_size);
  top.get_count("epochs", cfg.epochs);
  top.get_double("bank_momentum", cfg.bank_momentum);
  top.get_enum("bank_update", cfg.bank_update, kBankUpdates);
  top.get("seed", cfg.seed);
  top.get_count("eval_every", cfg.eval_every);
  top.get_count("knn_k", cfg.knn_k);
  top.get_double("knn_T", cfg.knn_T, true);
  top.get_enum("eval_feature", cfg.eval_feature, kEvalFeatures);
  top.get("out_dir", cfg.out_dir);
  top.finish();

  require(cfg.lambda >= 0, "lambda must be ≥ 0");
  require(cfg.T_I > 0, "T_I must be > 0");
  require(cfg.T_G > 0, "T_G must be > 0");
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.epochs >= 1, "epochs must be >= 1");
  require(cfg.k_groups == 0 || cfg.k_groups >= 2, "k_groups must be >= 2");
  require(cfg.resolved_k_groups() <= cfg.batch_size, "k_groups must be <= batch_size");
  require(cfg.bank_momentum >= 0 && cfg.bank_momentum <= 1, "bank_momentum must be in [0, 1]");
  require(cfg.kmeans_iters >= 1, "kmeans_iters must be >= 1");
  require(cfg.knn_k >= 1, "knn_k must be >= 1");
  require(cfg.knn_T > 0, "knn_T must be > 0");
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const Config& cfg) {
  nlohmann::ordered_json j;
  const auto& s = cfg.data;
  j["data"] = {{"path", s.path},
               {"cifar", s.cifar},
               {"kind", s.kind},
               {"classes", s.classes},
               {"per_class", s.per_class},
               {"views_per_group", s.views_per_group},
               {"dim", s.dim},
               {"sep", s.sep},
               {"corr_sigma", s.corr_sigma},
               {"longtail_rho", s.longtail_rho},
               {"seed", s.seed}};
  const auto& a = cfg.arch;
  j["arch"] = {{"input_dim", a.input_dim},
               {"hidden_dims", a.hidden_dims},
               {"latent_dim", a.latent_dim},
               {"head_dim_I", a.head_dim_I},
               {"head_dim_G", a.head_dim_G},
               {"head_kind", name_of(a.head_kind, kHeadKinds)},
               {"renorm_head", a.renorm_head},
               {"shared_head", a.shared_head}};
  j["lambda"] = cfg.lambda;
  j["T_I"] = cfg.T_I;
  j["T_G"] = cfg.T_G;
  j["num_negatives"] = cfg.num_negatives;
  j["k_groups"] = cfg.k_groups;
  j["centroid_grad"] = name_of(cfg.centroid_grad, kCentroidGrads);
  j["clustering"] = name_of(cfg.clustering, kClusterMethods);
  j["spectral_end"] = name_of(cfg.spectral_end, kSpectralEnds);
  j["kmeans_iters"] = cfg.kmeans_iters;
  j["augment"] = augment_json(cfg.augment);
  if (cfg.eval_augment) j["eval_augment"] = augment_json(*cfg.eval_augment);
  const auto& op = cfg.optimizer;
  j["optimizer"] = {{"lr", op.lr},
                    {"momentum", op.momentum},
                    {"weight_decay", op.weight_decay},
                    {"schedule", name_of(op.schedule, kSchedules)},
                    {"milestones", op.milestones},
                    {"factor", op.factor}};
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["bank_momentum"] = cfg.bank_momentum;
  j["bank_update"] = name_of(cfg.bank_update, kBankUpdates);
  j["seed"] = cfg.seed;
  j["eval_every"] = cfg.eval_every;
  j["knn_k"] = cfg.knn_k;
  if (std::isinf(cfg.knn_T)) {
    j["knn_T"] = "inf";
  } else {
    j["knn_T"] = cfg.knn_T;
  }
  j["eval_feature"] = name_of(cfg.eval_feature, kEvalFeatures);
  j["out_dir"] = cfg.out_dir;
  return j.dump(2);
}

}  // namespace cld

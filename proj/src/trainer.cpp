#include "cld/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cld/clustering.hpp"
#include "cld/error.hpp"

namespace cld {

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void add_into(ParamGrads& dst, const ParamGrads& src) {
  for (std::size_t l = 0; l < dst.backbone.size(); ++l) {
    auto& dw = dst.backbone[l].weight.data();
    const auto& sw = src.backbone[l].weight.data();
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += sw[i];
    auto& db = dst.backbone[l].bias;
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += src.backbone[l].bias[i];
  }
  for (std::size_t i = 0; i < dst.head_I.size(); ++i) dst.head_I.data()[i] += src.head_I.data()[i];
  for (std::size_t i = 0; i < dst.head_G.size(); ++i) dst.head_G.data()[i] += src.head_G.data()[i];
}

void scale_inplace(Matrix& m, double s) {
  for (double& x : m.data()) x *= s;
}

ClusterResult cluster_batch(const Matrix& feats, std::size_t k, std::uint64_t seed, const Config& cfg) {
  if (cfg.clustering == ClusterMethod::spectral) {
    return spectral_cluster(feats, k, seed, cfg.spectral_end, cfg.kmeans_iters);
  }
  return spherical_kmeans(feats, k, seed, cfg.kmeans_iters);
}

/// Per-step gradient of the summed batch loss w.r.t. the parameters.
ParamGrads step_gradients(const EncoderParams& params, const ForwardCache& a, const ForwardCache& b,
                          TotalLossResult& loss, double scale) {
  scale_inplace(loss.grad_fI_a, scale);
  scale_inplace(loss.grad_fI_b, scale);
  scale_inplace(loss.grad_fG_a, scale);
  scale_inplace(loss.grad_fG_b, scale);
  ParamGrads g = backward(params, a, loss.grad_fI_a, loss.grad_fG_a);
  add_into(g, backward(params, b, loss.grad_fI_b, loss.grad_fG_b));
  return g;
}

[[noreturn]] void rethrow_at_step(std::size_t step, const std::exception& e) {
  const std::string msg = "step " + std::to_string(step) + ": " + e.what();
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw ConfigError(msg);
  throw NumericError(msg);
}

}  // namespace

std::string TrainLog::losses_csv() const {
  std::string out = "step,instance_loss,cld_loss,total,lr\n";
  for (const auto& r : steps) {
    out += std::to_string(r.step) + "," + fmt_double(r.instance_loss) + "," + fmt_double(r.cld_loss) +
           "," + fmt_double(r.total) + "," + fmt_double(r.lr) + "\n";
  }
  return out;
}

std::string TrainLog::eval_csv() const {
  std::string out = "epoch,knn,nmi,retrieval,tuning_score\n";
  for (const auto& e : evals) {
    out += std::to_string(e.epoch) + "," + fmt_double(e.report.knn_top1) + "," +
           fmt_double(e.report.nmi_vs_labels) + "," + fmt_double(e.report.retrieval_top1) + "," +
           fmt_double(e.report.tuning_score) + "\n";
  }
  return out;
}

TrainResult train(const Config& cfg, const UnlabeledView& data, const EvalHook& hook) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = data.size();
  if (n < 2) throw ConfigError("training needs at least 2 samples");
  const Architecture arch = cfg.resolved_arch(data.dim());
  const bool use_cld = cfg.lambda > 0;
  ContrastConfig cc = cfg.resolved_contrast(n);
  cfg.augment.validate();

  Rng master(cfg.seed);
  TrainResult out;
  out.params = init_params(arch, master.next_u64());
  Rng bank_rng = master.split();
  out.bank = MemoryBank::random(n, arch.head_dim_I, cfg.bank_momentum, bank_rng);
  Rng shuffle_rng = master.split();
  Rng aug_rng = master.split();
  Rng neg_rng = master.split();
  Rng cluster_rng = master.split();

  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  OptimizerState opt;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = shuffle_rng.permutation(n);
    for (std::size_t start = 0; start < n; start += bs, ++step) {
      try {
        const std::size_t end = std::min(n, start + bs);
        std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                     perm.begin() + static_cast<std::ptrdiff_t>(end));
        Matrix va;
        Matrix vb;
        stack_views(make_views(data, idx, cfg.augment, aug_rng), va, vb);
        const ForwardCache ca = forward(out.params, va);
        const ForwardCache cb = forward(out.params, vb);

        ClusterResult ga;
        ClusterResult gb;
        if (use_cld) {
          const std::size_t k = std::min(cc.k_groups, idx.size());
          ga = cluster_batch(ca.fG(), k, cluster_rng.next_u64(), cfg);
          gb = cluster_batch(cb.fG(), k, cluster_rng.next_u64(), cfg);
        }
        auto negs = sample_negatives(n, idx, cc.num_negatives, neg_rng);
        TotalLossResult loss = total_loss(ca, cb, out.bank, idx, ga, gb, negs, cc);

        const ParamGrads g =
            step_gradients(out.params, ca, cb, loss, 1.0 / static_cast<double>(idx.size()));
        const double lr = learning_rate_at(cfg.optimizer, step, total_steps, steps_per_epoch);
        sgd_step(out.params, g, opt, lr, cfg.optimizer.momentum, cfg.optimizer.weight_decay);

        out.bank.update(idx, ca.fI());
        if (cfg.bank_update == BankUpdate::both) out.bank.update(idx, cb.fI());

        out.log.steps.push_back({step, epoch, loss.report.instance_loss, loss.report.cld_loss,
                                 loss.report.total, lr});
      } catch (const Error& e) {
        rethrow_at_step(step, e);
      }
    }
    if (hook && cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
      out.log.evals.push_back({epoch + 1, hook(out.params, epoch + 1)});
    }
  }
  out.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

Matrix embed(const EncoderParams& params, const Matrix& samples, EvalFeature feature) {
  constexpr std::size_t kChunk = 1024;
  const std::size_t width = feature == EvalFeature::instance ? params.arch.head_dim_I : params.arch.latent_dim;
  Matrix out(samples.rows(), width);
  for (std::size_t start = 0; start < samples.rows(); start += kChunk) {
    const std::size_t end = std::min(samples.rows(), start + kChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix chunk = samples.select_rows(idx);
    Matrix f;
    if (feature == EvalFeature::instance) {
      f = forward(params, chunk).fI();
    } else {
      f = embed_latent(params, chunk);
      l2_normalize_rows(f);
    }
    std::copy(f.data().begin(), f.data().end(), out.row(start).begin());
  }
  return out;
}

EvalReport evaluate(const EncoderParams& params, const Dataset& ds, const Config& cfg) {
  ds.validate();
  const std::size_t n = ds.size();
  if (n < 2) throw ConfigError("evaluate needs at least 2 samples");
  const Matrix feats = embed(params, ds.samples, cfg.eval_feature);
  Rng rng(cfg.seed ^ 0x5EEDE7A1ULL);
  const auto perm = rng.permutation(n);
  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n))), 1, n - 1);

  std::vector<std::size_t> tr(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> te(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  std::vector<std::uint32_t> tr_labels;
  std::vector<std::uint32_t> te_labels;
  for (auto i : tr) tr_labels.push_back(ds.labels[i]);
  for (auto i : te) te_labels.push_back(ds.labels[i]);

  EvalReport rep;
  const auto knn = knn_classify(feats.select_rows(tr), tr_labels, feats.select_rows(te), te_labels,
                                cfg.knn_k, cfg.knn_T);
  rep.knn_top1 = knn.accuracy;
  std::vector<double> hits(ds.num_classes, 0.0);
  std::vector<double> totals(ds.num_classes, 0.0);
  for (std::size_t t = 0; t < te.size(); ++t) {
    totals[te_labels[t]] += 1.0;
    if (knn.predictions[t] == te_labels[t]) hits[te_labels[t]] += 1.0;
  }
  rep.per_class_accuracy.resize(ds.num_classes);
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    rep.per_class_accuracy[c] = totals[c] > 0 ? hits[c] / totals[c] : std::nan("");
  }

  std::vector<std::size_t> labels(ds.labels.begin(), ds.labels.end());
  const std::uint64_t cluster_seed = rng.next_u64();
  rep.nmi_vs_labels = cluster_then_nmi(feats, labels, ds.num_classes, cluster_seed);

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Rng view_rng = rng.split();
  Matrix va;
  Matrix vb;
  stack_views(make_views(UnlabeledView(ds), all, cfg.view_augment(), view_rng), va, vb);
  const Matrix fa = embed(params, va, cfg.eval_feature);
  const Matrix fb = embed(params, vb, cfg.eval_feature);
  const auto tuning = tuning_score(fa, fb, ds.num_classes, cluster_seed);
  rep.retrieval_top1 = tuning.retrieval;
  rep.nmi_ff = tuning.nmi;
  rep.tuning_score = tuning.score;
  rep.similarity = similarity_report(fa, fb);
  return rep;
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + p.string());
  out << text;
}

}  // namespace

TrainResult run_training(const Config& cfg, const Dataset& ds) {
  const std::filesystem::path dir = cfg.out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(cfg.out_dir);
  std::filesystem::create_directories(dir);
  EvalHook hook = [&](const EncoderParams& p, std::size_t) { return evaluate(p, ds, cfg); };
  TrainResult res = train(cfg, UnlabeledView(ds), hook);
  EvalReport final_report = evaluate(res.params, ds, cfg);
  if (res.log.evals.empty() || res.log.evals.back().epoch != cfg.epochs) {
    res.log.evals.push_back({cfg.epochs, final_report});
  }
  res.log.checkpoint_path = (dir / "model.cldm").string();
  write_checkpoint(res.log.checkpoint_path, res.params);
  write_text(dir / "losses.csv", res.log.losses_csv());
  write_text(dir / "eval.csv", res.log.eval_csv());
  write_text(dir / "report.json", final_report.to_json() + "\n");
  write_text(dir / "similarity.csv", final_report.similarity.to_csv());
  write_text(dir / "config.json", serialize_config(cfg) + "\n");
  return res;
}

// ---- grid search ---------------------------------------------------------------

std::vector<GridCell> parse_grid(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed grid JSON: ") + e.what());
  }
  if (!j.is_object() || j.empty()) throw ConfigError("grid must be a non-empty JSON object of arrays");
  std::vector<GridCell> cells{GridCell{}};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_array() || it->empty()) throw ConfigError("grid." + it.key() + " must be a non-empty array");
    std::vector<GridCell> next;
    for (const auto& cell : cells) {
      for (const auto& v : *it) {
        if (!v.is_number()) throw ConfigError("grid." + it.key() + " values must be numbers");
        GridCell c = cell;
        c.values[it.key()] = v.get<double>();
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

Config apply_cell(const Config& base, const GridCell& cell) {
  Config c = base;
  for (const auto& [key, v] : cell.values) {
    if (key == "lambda") {
      c.lambda = v;
    } else if (key == "T") {
      c.T_I = v;
      c.T_G = v;
    } else if (key == "T_I") {
      c.T_I = v;
    } else if (key == "T_G") {
      c.T_G = v;
    } else if (key == "num_negatives") {
      c.num_negatives = static_cast<std::size_t>(v);
    } else if (key == "k_groups") {
      c.k_groups = static_cast<std::size_t>(v);
    } else if (key == "bank_momentum") {
      c.bank_momentum = v;
    } else {
      throw ConfigError("unknown grid key '" + key + "'");
    }
  }
  if (!(c.lambda >= 0)) throw ConfigError("lambda must be ≥ 0");
  if (!(c.T_I > 0) || !(c.T_G > 0)) throw ConfigError("temperatures must be > 0");
  return c;
}

GridResult grid_search(const Config& base, const std::vector<GridCell>& grid, const Dataset& ds) {
  if (grid.empty()) throw ConfigError("grid is empty");
  GridResult out;
  for (const auto& cell : grid) {
    GridRow row;
    row.cell = cell;
    try {
      Config cfg = apply_cell(base, cell);
      TrainResult tr = train(cfg, UnlabeledView(ds));
      EvalReport rep = evaluate(tr.params, ds, cfg);
      row.ok = true;
      row.tuning_score = rep.tuning_score;
      row.nmi_ff = rep.nmi_ff;
      row.retrieval = rep.retrieval_top1;
      row.knn = rep.knn_top1;
    } catch (const Error& e) {
      row.error = e.what();
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

namespace {

std::vector<std::size_t> order_by(const std::vector<GridRow>& rows, double GridRow::*field) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].ok != rows[b].ok) return rows[a].ok;
    return rows[a].*field > rows[b].*field;
  });
  return order;
}

std::string ranking_csv(const std::vector<GridRow>& rows, const std::vector<std::size_t>& order) {
  std::set<std::string> keys;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.cell.values) keys.insert(k);
  std::string out = "rank";
  for (const auto& k : keys) out += "," + k;
  out += ",tuning_score,nmi_ff,retrieval,knn,status\n";
  std::size_t rank = 1;
  for (auto i : order) {
    const auto& r = rows[i];
    out += std::to_string(rank++);
    for (const auto& k : keys) {
      auto it = r.cell.values.find(k);
      out += "," + (it == r.cell.values.end() ? std::string() : fmt_double(it->second));
    }
    out += "," + fmt_double(r.tuning_score) + "," + fmt_double(r.nmi_ff) + "," + fmt_double(r.retrieval) +
           "," + fmt_double(r.knn) + "," + (r.ok ? "ok" : "failed") + "\n";
  }
  return out;
}

}  // namespace

std::vector<std::size_t> GridResult::by_tuning_score() const { return order_by(rows, &GridRow::tuning_score); }
std::vector<std::size_t> GridResult::by_knn() const { return order_by(rows, &GridRow::knn); }
std::string GridResult::rankings_csv() const { return ranking_csv(rows, by_tuning_score()); }
std::string GridResult::knn_rankings_csv() const { return ranking_csv(rows, by_knn()); }

// ---- gradient check ------------------------------------------------------------

GradCheckResult gradient_check(const Config& cfg_in, std::size_t batch_size, double eps,
                               std::size_t coords) {
  constexpr std::size_t kMaxParams = 2000;
  constexpr std::size_t kMaxSamples = 64;
  if (batch_size < 2 || batch_size > 8) throw ConfigError("gradcheck batch_size must be in [2, 8]");
  Config cfg = cfg_in;
  Dataset full = load_data(cfg.data);
  Rng rng(cfg.seed);
  std::vector<std::size_t> pick = rng.permutation(full.size());
  pick.resize(std::min(full.size(), kMaxSamples));
  std::sort(pick.begin(), pick.end());
  Dataset ds;
  ds.samples = full.samples.select_rows(pick);
  ds.kind = full.kind;
  ds.num_classes = full.num_classes;
  for (auto i : pick) ds.labels.push_back(full.labels[i]);
  const std::size_t n = ds.size();
  if (n < batch_size) throw ConfigError("gradcheck needs at least batch_size samples");

  Architecture arch = cfg.resolved_arch(ds.dim());
  if (init_params(arch, 0).num_parameters() > kMaxParams) {
    arch.hidden_dims = {8};
    arch.latent_dim = 8;
    arch.head_dim_I = 8;
    arch.head_dim_G = 8;
  }
  const EncoderParams base = init_params(arch, rng.next_u64());
  if (base.num_parameters() > kMaxParams) {
    throw ConfigError("gradcheck: model has " + std::to_string(base.num_parameters()) +
                      " parameters even after shrinking (limit 2000)");
  }

  cfg.batch_size = batch_size;
  ContrastConfig cc;
  cc.T_I = cfg.T_I;
  cc.T_G = cfg.T_G;
  cc.lambda = cfg.lambda;
  cc.centroid_grad = cfg.centroid_grad;
  cc.num_negatives = cfg.num_negatives != 0 ? std::min(cfg.num_negatives, n - 1) : n - 1;
  cc.k_groups = std::clamp<std::size_t>(cfg.resolved_k_groups(), 2, std::max<std::size_t>(2, batch_size / 2));

  MemoryBank bank = MemoryBank::random(n, arch.head_dim_I, cfg.bank_momentum, rng);
  std::vector<std::size_t> idx = rng.permutation(n);
  idx.resize(batch_size);
  Matrix va;
  Matrix vb;
  stack_views(make_views(UnlabeledView(ds), idx, cfg.augment, rng), va, vb);
  const auto negs = sample_negatives(n, idx, cc.num_negatives, rng);

  const ForwardCache ca = forward(base, va);
  const ForwardCache cb = forward(base, vb);
  ClusterResult ga;
  ClusterResult gb;
  if (cc.lambda > 0) {
    ga = cluster_batch(ca.fG(), cc.k_groups, rng.next_u64(), cfg);
    gb = cluster_batch(cb.fG(), cc.k_groups, rng.next_u64(), cfg);
  }
  TotalLossResult loss = total_loss(ca, cb, bank, idx, ga, gb, negs, cc);
  const Vector analytic = step_gradients(base, ca, cb, loss, 1.0).flatten();

  EncoderParams probe = base;
  const Vector theta = base.flatten();
  auto loss_at = [&](const Vector& flat) {
    probe.unflatten(flat);
    return total_loss(forward(probe, va), forward(probe, vb), bank, idx, ga, gb, negs, cc).report.total;
  };

  GradCheckResult res;
  res.num_parameters = theta.size();
  std::vector<std::size_t> which;
  if (theta.size() <= coords) {
    which.resize(theta.size());
    std::iota(which.begin(), which.end(), 0);
  } else {
    which = rng.sample_without_replacement(theta.size(), coords);
  }
  Vector work = theta;
  for (auto j : which) {
    work[j] = theta[j] + eps;
    const double up = loss_at(work);
    work[j] = theta[j] - eps;
    const double down = loss_at(work);
    work[j] = theta[j];
    const double numeric = (up - down) / (2.0 * eps);
    const double rel = std::abs(analytic[j] - numeric) / std::max(1.0, std::abs(analytic[j]));
    res.max_rel_error = std::max(res.max_rel_error, rel);
  }
  res.coords_checked = which.size();
  return res;
}

}  // namespace cld

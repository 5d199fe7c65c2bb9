#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cld/config.hpp"
#include "cld/contrast.hpp"
#include "cld/datagen.hpp"
#include "cld/encoder.hpp"
#include "cld/metrics.hpp"

namespace cld {

// ---- optimizer ------------------------------------------------------------------

/// Momentum buffers, same layout as the parameters.
struct OptimizerState {
  EncoderParams buffers;
  bool initialized = false;
};

/// buf <- momentum * buf + grad + weight_decay * param (weights only); param -= lr * buf.
void sgd_step(EncoderParams& params, const ParamGrads& grads, OptimizerState& state, double lr,
              double momentum = 0.9, double weight_decay = 1e-4);

double learning_rate_at(const OptimizerConfig& opt, std::size_t step, std::size_t total_steps,
                        std::size_t steps_per_epoch);

// ---- training -------------------------------------------------------------------

struct StepRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double instance_loss = 0.0;
  double cld_loss = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct EvalRow {
  std::size_t epoch = 0;
  EvalReport report;
};

struct TrainLog {
  std::vector<StepRow> steps;
  std::vector<EvalRow> evals;
  double wall_seconds = 0.0;
  std::string checkpoint_path;

  std::string losses_csv() const;
  std::string eval_csv() const;
};

struct TrainResult {
  EncoderParams params;
  MemoryBank bank;
  TrainLog log;
};

/// Called after epochs selected by eval_every; the caller owns the labels.
using EvalHook = std::function<EvalReport(const EncoderParams&, std::size_t epoch)>;

/// The training path only ever sees unlabeled samples.
TrainResult train(const Config& cfg, const UnlabeledView& data, const EvalHook& hook = {});

/// Labeled evaluation of a trained encoder.
EvalReport evaluate(const EncoderParams& params, const Dataset& ds, const Config& cfg);

/// Row features used by evaluate (f_I or the latent f, per cfg.eval_feature).
Matrix embed(const EncoderParams& params, const Matrix& samples, EvalFeature feature);

/// Train, evaluate and write losses.csv, eval.csv, report.json,
/// similarity.csv and model.cldm into cfg.out_dir.
TrainResult run_training(const Config& cfg, const Dataset& ds);

// ---- grid search ---------------------------------------------------------------

struct GridCell {
  std::map<std::string, double> values;  // lambda, T, T_I, T_G, num_negatives, k_groups
};

struct GridRow {
  GridCell cell;
  bool ok = false;
  std::string error;
  double tuning_score = 0.0;
  double nmi_ff = 0.0;
  double retrieval = 0.0;
  double knn = 0.0;
};

struct GridResult {
  std::vector<GridRow> rows;  // grid order
  std::vector<std::size_t> by_tuning_score() const;
  std::vector<std::size_t> by_knn() const;
  /// Rankings CSV sorted descending by tuning_score.
  std::string rankings_csv() const;
  std::string knn_rankings_csv() const;
};

/// {"lambda": [...], "T": [...], ...}; cartesian product in key order.
std::vector<GridCell> parse_grid(const std::string& text);
Config apply_cell(const Config& base, const GridCell& cell);

/// One model per cell with the base seed. The ranking column uses no labels.
GridResult grid_search(const Config& base, const std::vector<GridCell>& grid, const Dataset& ds);

// ---- gradient check ------------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t num_parameters = 0;
};

/// Central finite differences of one step's total loss on a tiny model, with
/// clustering assignments and negative draws frozen at the base point.
GradCheckResult gradient_check(const Config& cfg, std::size_t batch_size = 8, double eps = 1e-5,
                               std::size_t coords = 200);

}  // namespace cld

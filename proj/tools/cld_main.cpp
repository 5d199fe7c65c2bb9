// Command-line front end: gen-data, train, eval, tune, gradcheck.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cld/config.hpp"
#include "cld/datagen.hpp"
#include "cld/error.hpp"
#include "cld/trainer.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGradcheck = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cld::ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw cld::FormatError("cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-level instance-group discrimination trainer"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset in CLD1 format");
  cld::DataSpec spec;
  std::string gen_out;
  gen->add_option("--kind", spec.kind, "mixture | correlated")->check(CLI::IsMember({"mixture", "correlated"}));
  gen->add_option("--classes", spec.classes, "Number of classes");
  gen->add_option("--per-class", spec.per_class, "Samples (mixture) or groups (correlated) per class");
  gen->add_option("--dim", spec.dim, "Sample dimension");
  gen->add_option("--sep", spec.sep, "Class-mean radius");
  gen->add_option("--corr-sigma", spec.corr_sigma, "Within-group jitter (correlated)");
  gen->add_option("--views-per-group", spec.views_per_group, "Near-duplicates per group (correlated)");
  gen->add_option("--longtail-rho", spec.longtail_rho, "Long-tail imbalance ratio in (0, 1]");
  gen->add_option("--seed", spec.seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output .cld file")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train an encoder");
  std::string train_config;
  std::string train_out;
  tr->add_option("--config", train_config, "JSON config")->required();
  tr->add_option("--out", train_out, "Output directory (overrides out_dir)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt;
  std::string ev_data;
  std::string ev_config;
  std::string ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "CLDM checkpoint")->required();
  ev->add_option("--data", ev_data, "CLD1 dataset")->required();
  ev->add_option("--config", ev_config, "JSON config for evaluation settings");
  ev->add_option("--out", ev_out, "Write report.json here instead of stdout");

  // tune
  auto* tu = app.add_subcommand("tune", "Unsupervised hyper-parameter grid search");
  std::string tune_config;
  std::string tune_grid;
  std::string tune_out;
  tu->add_option("--config", tune_config, "Base JSON config")->required();
  tu->add_option("--grid", tune_grid, "Grid JSON, e.g. {\"lambda\": [0, 0.25, 1]}")->required();
  tu->add_option("--out", tune_out, "Output directory (default: out_dir or .)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of all loss gradients");
  std::string gc_config;
  double gc_tol = 1e-3;
  std::size_t gc_batch = 8;
  gc->add_option("--config", gc_config, "JSON config")->required();
  gc->add_option("--tol", gc_tol, "Failure threshold on max relative error");
  gc->add_option("--batch", gc_batch, "Batch size (2..8)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      cld::Dataset ds = cld::load_data(spec);
      cld::write_dataset(gen_out, ds);
      std::cout << "wrote " << ds.size() << " samples (dim " << ds.dim() << ", " << ds.num_classes
                << " classes) to " << gen_out << "\n";
      return 0;
    }
    if (*tr) {
      cld::Config cfg = cld::load_config(train_config);
      if (!train_out.empty()) cfg.out_dir = train_out;
      cld::Dataset ds = cld::load_data(cfg.data);
      auto res = cld::run_training(cfg, ds);
      std::cout << "trained " << res.log.steps.size() << " steps in " << res.log.wall_seconds
                << " s; final total loss " << res.log.steps.back().total << "\n";
      std::cout << res.log.evals.back().report.to_json() << "\n";
      return 0;
    }
    if (*ev) {
      cld::Config cfg = ev_config.empty() ? cld::Config{} : cld::load_config(ev_config);
      cld::EncoderParams params = cld::read_checkpoint(ev_ckpt);
      cld::Dataset ds = cld::read_dataset(ev_data);
      cld::EvalReport rep = cld::evaluate(params, ds, cfg);
      if (ev_out.empty()) {
        std::cout << rep.to_json() << "\n";
      } else {
        write_text(ev_out, rep.to_json() + "\n");
      }
      return 0;
    }
    if (*tu) {
      cld::Config cfg = cld::load_config(tune_config);
      auto grid = cld::parse_grid(read_text(tune_grid));
      cld::Dataset ds = cld::load_data(cfg.data);
      auto result = cld::grid_search(cfg, grid, ds);
      std::filesystem::path dir = !tune_out.empty() ? tune_out : (cfg.out_dir.empty() ? std::string(".") : cfg.out_dir);
      std::filesystem::create_directories(dir);
      write_text(dir / "rankings.csv", result.rankings_csv());
      write_text(dir / "knn_rankings.csv", result.knn_rankings_csv());
      std::cout << result.rankings_csv();
      return 0;
    }
    if (*gc) {
      cld::Config cfg = cld::load_config(gc_config);
      auto res = cld::gradient_check(cfg, gc_batch);
      std::cout << "gradcheck: " << res.coords_checked << " of " << res.num_parameters
                << " coordinates, max relative error " << res.max_rel_error << "\n";
      return res.max_rel_error > gc_tol ? kExitGradcheck : 0;
    }
  } catch (const cld::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

#include <cmath>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "cld/config.hpp"
#include "cld/error.hpp"

using namespace cld;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  Config c = parse_config("{}");
  EXPECT_EQ(c, Config{});
  EXPECT_EQ(c.lambda, 0.25);
  EXPECT_EQ(c.T_I, 0.2);
  EXPECT_EQ(c.T_G, 0.2);
  EXPECT_EQ(c.bank_momentum, 0.5);
  EXPECT_EQ(c.optimizer.momentum, 0.9);
  EXPECT_EQ(c.optimizer.weight_decay, 1e-4);
  ContrastConfig cc = c.resolved_contrast(512);
  EXPECT_EQ(cc.num_negatives, 511u);
  EXPECT_EQ(cc.k_groups, c.batch_size / 2);
  EXPECT_EQ(c.resolved_contrast(100000).num_negatives, 4096u);
}

TEST(Config, ExplicitValuesOverrideDefaults) {
  Config c = parse_config(R"({"lambda": 1.5, "num_negatives": 10, "k_groups": 4, "batch_size": 8,
                              "centroid_grad": "detached", "clustering": "spectral",
                              "optimizer": {"schedule": "step", "milestones": [3, 6]}})");
  EXPECT_EQ(c.lambda, 1.5);
  EXPECT_EQ(c.centroid_grad, CentroidGrad::detached);
  EXPECT_EQ(c.clustering, ClusterMethod::spectral);
  EXPECT_EQ(c.optimizer.schedule, Schedule::step);
  EXPECT_EQ(c.optimizer.milestones, (std::vector<std::size_t>{3, 6}));
  EXPECT_EQ(c.resolved_contrast(50).num_negatives, 10u);
  EXPECT_EQ(c.resolved_contrast(50).k_groups, 4u);
}

TEST(Config, RoundTrip) {
  const char* texts[] = {
      "{}",
      R"({"knn_T": "inf", "eval_augment": {"noise_sigma": 0.05}, "augment": {"noise_sigma": 1.25}})",
      R"({"data": {"kind": "correlated", "classes": 3, "corr_sigma": 0.123456789},
          "arch": {"head_kind": "norm_linear", "renorm_head": false, "hidden_dims": []},
          "lambda": 0.1, "T_G": 0.37, "seed": 9, "out_dir": "runs/x"})",
  };
  for (const char* t : texts) {
    Config c = parse_config(t);
    EXPECT_EQ(parse_config(serialize_config(c)), c) << t;
  }
}

TEST(Config, EvalAugmentInheritsFromAugment) {
  Config c = parse_config(R"({"augment": {"noise_sigma": 2.0, "mask_prob": 0.3},
                              "eval_augment": {"noise_sigma": 0.3}})");
  ASSERT_TRUE(c.eval_augment.has_value());
  EXPECT_EQ(c.eval_augment->noise_sigma, 0.3);
  EXPECT_EQ(c.eval_augment->mask_prob, 0.3);
  EXPECT_EQ(&c.view_augment(), &*c.eval_augment);
  Config d = parse_config("{}");
  EXPECT_EQ(&d.view_augment(), &d.augment);
}

TEST(Config, KnnTemperatureInfinity) {
  EXPECT_TRUE(std::isinf(parse_config(R"({"knn_T": "inf"})").knn_T));
  EXPECT_TRUE(std::isinf(parse_config(R"({"knn_T": null})").knn_T));
}

TEST(Config, UnknownKeysNamed) {
  EXPECT_EQ(error_of(R"({"x": 1})"), "unknown config key 'x'");
  EXPECT_EQ(error_of(R"({"data": {"clases": 3}})"), "unknown config key 'data.clases'");
  EXPECT_EQ(error_of(R"({"optimizer": {"learning_rate": 3}})"), "unknown config key 'optimizer.learning_rate'");
}

TEST(Config, ConstraintViolations) {
  EXPECT_EQ(error_of(R"({"lambda": -1})"), "lambda must be ≥ 0");
  EXPECT_NE(error_of(R"({"T_I": 0})").find("T_I"), std::string::npos);
  EXPECT_NE(error_of(R"({"optimizer": {"lr": 0}})").find("optimizer.lr"), std::string::npos);
  EXPECT_NE(error_of(R"({"epochs": 0})").find("epochs"), std::string::npos);
  EXPECT_NE(error_of(R"({"k_groups": 65, "batch_size": 64})").find("k_groups"), std::string::npos);
  EXPECT_NE(error_of(R"({"bank_momentum": 1.5})").find("bank_momentum"), std::string::npos);
  EXPECT_NE(error_of(R"({"arch": {"renorm_head": false}})").find("renorm_head"), std::string::npos);
  EXPECT_NE(error_of(R"({"centroid_grad": "sideways"})").find("centroid_grad"), std::string::npos);
  EXPECT_NE(error_of(R"({"batch_size": -3})").find("batch_size"), std::string::npos);
  EXPECT_NE(error_of(R"({"data": {"longtail_rho": 2}})").find("longtail_rho"), std::string::npos);
  EXPECT_NE(error_of(R"({"lambda": "big"})").find("lambda"), std::string::npos);
}

TEST(Config, MalformedJson) {
  EXPECT_NE(error_of("{").find("malformed JSON"), std::string::npos);
  EXPECT_NE(error_of("[]").find("object"), std::string::npos);
}

TEST(Config, NegativesBeyondDatasetRejectedWhenResolved) {
  Config c = parse_config(R"({"num_negatives": 600})");
  EXPECT_THROW(c.resolved_contrast(512), ConfigError);
}

TEST(Config, ResolvedArchTakesDataDim) {
  Config c;
  EXPECT_EQ(c.resolved_arch(17).input_dim, 17u);
  c.arch.input_dim = 5;
  EXPECT_THROW(c.resolved_arch(17), ConfigError);
}

TEST(Config, LoadDataGenerators) {
  Config c = parse_config(R"({"data": {"classes": 3, "per_class": 5, "dim": 4}})");
  Dataset ds = load_data(c.data);
  EXPECT_EQ(ds.size(), 15u);
  EXPECT_EQ(ds.dim(), 4u);
  Config t = parse_config(R"({"data": {"kind": "correlated", "classes": 2, "per_class": 3, "views_per_group": 4}})");
  EXPECT_EQ(load_data(t.data).size(), 24u);
}

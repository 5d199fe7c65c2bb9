#include <cmath>
#include <numbers>
#include <string>

#include "cld/error.hpp"
#include "cld/trainer.hpp"

namespace cld {

namespace {

void update_tensor(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& buf,
                   double lr, double momentum, double decay, const std::string& name) {
  if (param.size() != grad.size() || param.size() != buf.size()) {
    throw Error("sgd_step: shape mismatch for " + name);
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    if (!std::isfinite(grad[i])) throw NumericError("sgd_step: non-finite gradient in " + name);
    buf[i] = momentum * buf[i] + grad[i] + decay * param[i];
    param[i] -= lr * buf[i];
  }
}

}  // namespace

void sgd_step(EncoderParams& params, const ParamGrads& grads, OptimizerState& state, double lr,
              double momentum, double weight_decay) {
  if (!state.initialized) {
    state.buffers = zero_grads(params);
    state.initialized = true;
  }
  if (grads.backbone.size() != params.backbone.size()) throw Error("sgd_step: layer count mismatch");
  auto& buf = state.buffers;
  for (std::size_t l = 0; l < params.backbone.size(); ++l) {
    const std::string layer = "backbone." + std::to_string(l);
    update_tensor(params.backbone[l].weight.data(), grads.backbone[l].weight.data(),
                  buf.backbone[l].weight.data(), lr, momentum, weight_decay, layer + ".weight");
    update_tensor(params.backbone[l].bias, grads.backbone[l].bias, buf.backbone[l].bias, lr, momentum,
                  0.0, layer + ".bias");
  }
  update_tensor(params.head_I.data(), grads.head_I.data(), buf.head_I.data(), lr, momentum,
                weight_decay, "head_I");
  update_tensor(params.head_G.data(), grads.head_G.data(), buf.head_G.data(), lr, momentum,
                weight_decay, "head_G");
}

double learning_rate_at(const OptimizerConfig& opt, std::size_t step, std::size_t total_steps,
                        std::size_t steps_per_epoch) {
  switch (opt.schedule) {
    case Schedule::constant:
      return opt.lr;
    case Schedule::cosine: {
      double t = total_steps == 0 ? 0.0 : static_cast<double>(step) / static_cast<double>(total_steps);
      return opt.lr * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
    }
    case Schedule::step: {
      std::size_t epoch = steps_per_epoch == 0 ? 0 : step / steps_per_epoch;
      double lr = opt.lr;
      for (auto m : opt.milestones)
        if (epoch >= m) lr *= opt.factor;
      return lr;
    }
  }
  return opt.lr;
}

}  // namespace cld

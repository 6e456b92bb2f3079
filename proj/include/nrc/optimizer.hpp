#pragma once

#include <span>
#include <vector>

#include "nrc/model.hpp"

namespace nrc {

struct LearningRates {
  double backbone = 1e-2;
  double head = 1e-1;

  double of(ParamGroup g) const noexcept { return g == ParamGroup::head ? head : backbone; }
};

/// Heavy-ball update on one block: v <- momentum * v + (g + wd * theta);
/// theta <- theta - lr * v.
void sgd_update(std::span<double> theta, std::span<const double> grad, std::span<double> velocity, double lr,
                double momentum, double weight_decay = 0.0);

/// Momentum buffers, one per trainable block of ModelParams.
struct OptimizerState {
  std::vector<std::vector<double>> velocity;

  static OptimizerState for_params(const ModelParams& params);
};

void sgd_step(ModelParams& params, const ModelGrads& grads, OptimizerState& state, const LearningRates& lr,
              double momentum, double weight_decay = 0.0);

}  // namespace nrc

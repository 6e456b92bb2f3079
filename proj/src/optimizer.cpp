#include "nrc/optimizer.hpp"

namespace nrc {

void sgd_update(std::span<double> theta, std::span<const double> grad, std::span<double> velocity, double lr,
                double momentum, double weight_decay) {
  if (grad.size() != theta.size() || velocity.size() != theta.size()) {
    throw InvalidInput("sgd_update: shape mismatch");
  }
  for (std::size_t t = 0; t < theta.size(); ++t) {
    velocity[t] = momentum * velocity[t] + grad[t] + weight_decay * theta[t];
    theta[t] -= lr * velocity[t];
  }
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
  OptimizerState state;
  for (const auto& view : trainable_parameters(params)) state.velocity.emplace_back(view.values.size(), 0.0);
  return state;
}

void sgd_step(ModelParams& params, const ModelGrads& grads, OptimizerState& state, const LearningRates& lr,
              double momentum, double weight_decay) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("sgd_step: momentum must be in [0, 1)");
  auto views = trainable_parameters(params);
  auto grad_views = trainable_parameters(grads);
  if (views.size() != grad_views.size() || views.size() != state.velocity.size()) {
    throw InvalidInput("sgd_step: parameter/gradient/state layout mismatch");
  }
  for (std::size_t b = 0; b < views.size(); ++b) {
    sgd_update(views[b].values, grad_views[b].values, state.velocity[b], lr.of(views[b].group), momentum,
               weight_decay);
  }
}

}  // namespace nrc

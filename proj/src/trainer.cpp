#include "nrc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nrc/graph.hpp"
#include "nrc/numerics.hpp"
#include "nrc/optimizer.hpp"

namespace nrc {

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidInput("make_batches: batch_size must be positive");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    const std::size_t last = batches.back().front();
    batches.pop_back();
    batches.back().push_back(last);
  }
  return batches;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
  std::vector<std::size_t> order(n);
  return make_batches(order, batch_size).size();
}

namespace {

// Shapes are validated before the loop starts, so a failing forward pass
// inside it means the parameters have blown up.
ForwardCache checked_forward(const ModelParams& params, const Matrix& x, Mode mode, const char* where) {
  try {
    return forward(params, x, mode);
  } catch (const InvalidInput& e) {
    throw NumericError(std::string(where) + ": " + e.what());
  }
}

void shuffled(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
}

}  // namespace

PretrainResult pretrain_source(const AdaptConfig& config, const Matrix& features,
                               std::span<const std::uint32_t> labels, std::size_t num_classes) {
  config.validate();
  if (labels.size() != features.rows()) throw InvalidInput("pretrain_source: label count mismatch");
  if (features.rows() == 0) throw InvalidInput("pretrain_source: empty source set");
  if (config.batch_norm && features.rows() < 2) throw InvalidInput("pretrain_source: batch norm needs two samples");
  PretrainResult result;
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto y : labels) {
    if (y >= num_classes) throw InvalidInput("pretrain_source: label out of range");
    ++counts[y];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) result.warnings.push_back("class " + std::to_string(c) + " absent from source data");
  }

  result.params = init_model(config.architecture(features.cols(), num_classes), config.seed);
  OptimizerState state = OptimizerState::for_params(result.params);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(features.rows());
  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    shuffled(order, rng);
    double total = 0.0;
    const auto batches = make_batches(order, config.batch_size);
    for (const auto& batch : batches) {
      const Matrix x = gather_rows(features, batch);
      Labels y(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) y[b] = labels[batch[b]];
      const ForwardCache cache = checked_forward(result.params, x, Mode::train, "pretrain_source");
      commit_running_stats(result.params, cache);
      const LossAndGrad loss = source_pretrain_loss(cache.probs, y, config.label_smoothing);
      if (!std::isfinite(loss.value)) throw NumericError("pretrain_source: non-finite loss");
      const ModelGrads grads = backward(result.params, cache, loss.grad);
      sgd_step(result.params, grads, state, config.pretrain_rates(), config.momentum, config.weight_decay);
      apply_weight_norm(result.params);
      total += loss.value;
    }
    result.epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  return result;
}

Matrix predict(const ModelParams& params, const Matrix& x) { return forward(params, x, Mode::eval).probs; }

AdaptResult adapt(const AdaptConfig& config, const ModelParams& pretrained, const Matrix& target,
                  const AdaptHooks& hooks) {
  config.validate();
  const std::size_t n = target.rows();
  if (n == 0) throw InvalidInput("adapt: empty target set");
  if (target.cols() != pretrained.input_dim()) throw InvalidInput("adapt: target dimension does not match model");
  if (config.batch_size > n) throw InvalidInput("adapt: batch_size exceeds target size");

  AdaptResult result;
  result.params = pretrained;
  ModelParams& params = result.params;
  OptimizerState state = OptimizerState::for_params(params);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);

  MemoryBanks banks = initialize_banks(params, target);
  if (config.bank_mode == BankMode::fifo) {
    if (config.bank_capacity > n) throw InvalidInput("adapt: fifo capacity exceeds target size");
    MemoryBanks ring = MemoryBanks::fifo(config.bank_capacity, banks.feature_dim(), banks.num_classes());
    shuffled(order, rng);
    const std::vector<std::size_t> seed_rows(order.begin(),
                                             order.begin() + static_cast<std::ptrdiff_t>(config.bank_capacity));
    ring.push(seed_rows, gather_rows(banks.features(), seed_rows), gather_rows(banks.scores(), seed_rows));
    banks = std::move(ring);
  }

  const GraphParams graph_params = config.graph_params();
  const LossFlags flags = config.loss_flags();
  const bool needs_graph = flags.use_n || flags.use_e || flags.use_d;
  const LearningRates rates = config.adapt_rates();
  const std::size_t per_epoch = batches_per_epoch(n, config.batch_size);
  result.max_iter = config.epochs * per_epoch;
  const Mode mode = config.bn_train_mode ? Mode::train : Mode::eval;

  auto checkpoint = [&](std::size_t epoch, std::size_t iter) {
    if (hooks.on_checkpoint) hooks.on_checkpoint(AdaptSnapshot{epoch, iter, params, banks});
  };
  checkpoint(0, 0);

  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffled(order, rng);
    for (const auto& batch : make_batches(order, config.batch_size)) {
      const Matrix x = gather_rows(target, batch);
      const ForwardCache cache = checked_forward(params, x, mode, "adapt");
      commit_running_stats(params, cache);

      const std::vector<std::size_t> rows = banks.write(batch, cache.features, cache.probs);
      const Matrix self_scores = gather_rows(banks.scores(), rows);
      BatchGraph graph;
      if (needs_graph) graph = build_batch_graph(banks.features(), rows, graph_params);

      LossBreakdown loss = total_loss(cache.probs, self_scores, graph, banks.scores(), flags, config.affinity_floor,
                                      lambda_schedule(iter, result.max_iter));
      if (!std::isfinite(loss.total) || !all_finite(loss.grad.values())) {
        throw NumericError("adapt: non-finite loss at iteration " + std::to_string(iter));
      }
      const ModelGrads grads = backward(params, cache, loss.grad);
      sgd_step(params, grads, state, rates, config.momentum, config.weight_decay);
      apply_weight_norm(params);
      if (!all_finite(flatten_trainable(params))) {
        throw NumericError("adapt: non-finite parameters at iteration " + std::to_string(iter));
      }

      loss.grad = Matrix();
      result.log.push_back(std::move(loss));
      ++iter;
      if (hooks.every != 0 && iter % hooks.every == 0) checkpoint(epoch, iter);
    }
    if (hooks.every == 0) checkpoint(epoch + 1, iter);
  }
  return result;
}

void write_training_log(std::ostream& out, const std::vector<LossBreakdown>& log) {
  write_loss_log_header(out);
  for (std::size_t i = 0; i < log.size(); ++i) write_loss_log_row(out, i, log[i]);
}

}  // namespace nrc

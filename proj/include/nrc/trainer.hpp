#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nrc/banks.hpp"
#include "nrc/config.hpp"
#include "nrc/losses.hpp"
#include "nrc/model.hpp"

namespace nrc {

struct PretrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;
  std::vector<std::string> warnings;  // e.g. classes missing from the source set
};

/// Label-smoothed cross-entropy training on the labeled source set.
PretrainResult pretrain_source(const AdaptConfig& config, const Matrix& features,
                               std::span<const std::uint32_t> labels, std::size_t num_classes);

/// Snapshot handed to AdaptHooks::on_checkpoint. `iteration` counts
/// completed optimizer steps; the first call happens before any step.
struct AdaptSnapshot {
  std::size_t epoch;
  std::size_t iteration;
  const ModelParams& params;
  const MemoryBanks& banks;
};

struct AdaptHooks {
  /// Checkpoint cadence in iterations; 0 means once per epoch.
  std::size_t every = 0;
  std::function<void(const AdaptSnapshot&)> on_checkpoint;
};

struct AdaptResult {
  ModelParams params;
  std::vector<LossBreakdown> log;  // one entry per iteration, grad left empty
  std::size_t max_iter = 0;
};

/// Batch index groups for one epoch: consecutive chunks of `order`. A
/// trailing chunk of one sample is folded into the previous chunk.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size);

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size);

/// Adapts a source model to unlabeled target features. Only target features
/// enter this interface.
AdaptResult adapt(const AdaptConfig& config, const ModelParams& pretrained, const Matrix& target,
                  const AdaptHooks& hooks = {});

/// Eval-mode class probabilities.
Matrix predict(const ModelParams& params, const Matrix& x);

void write_training_log(std::ostream& out, const std::vector<LossBreakdown>& log);

}  // namespace nrc

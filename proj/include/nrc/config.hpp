#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nrc/banks.hpp"
#include "nrc/graph.hpp"
#include "nrc/losses.hpp"
#include "nrc/model.hpp"
#include "nrc/optimizer.hpp"

namespace nrc {

enum class AdaptMode { nrc, nrc_plus_plus };

/// All knobs for source pretraining and target adaptation. JSON keys are the
/// field names below; the single-letter keys "K", "M", "U", "V" and "r" are
/// accepted as aliases for the first five.
struct AdaptConfig {
  std::size_t num_neighbors = 3;            // K
  std::size_t num_expanded = 2;             // M
  std::size_t density_neighbors = 20;       // U
  std::size_t density_check_neighbors = 5;  // V
  double affinity_floor = 0.1;              // r

  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double lr_backbone = 1e-2;
  double lr_head = 1e-1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  AdaptMode mode = AdaptMode::nrc;

  // Ablations. Disabling affinity sets every A to 1 and weighs expanded
  // neighbors 1 instead of r.
  bool use_affinity = true;
  bool dedupe_expanded = false;
  bool use_loss_n = true;
  bool use_loss_e = true;
  bool use_loss_self = true;
  bool use_loss_div = true;

  BankMode bank_mode = BankMode::full;
  std::size_t bank_capacity = 0;  // fifo only
  bool bn_train_mode = true;      // batch statistics during adaptation

  // Source pretraining and architecture.
  std::size_t pretrain_epochs = 30;
  double pretrain_lr_backbone = 1e-2;
  double pretrain_lr_head = 1e-2;
  double label_smoothing = 0.1;
  std::vector<std::size_t> hidden_dims{64};
  std::size_t feature_dim = 32;
  bool batch_norm = true;

  GraphParams graph_params() const;
  LossFlags loss_flags() const;
  LearningRates adapt_rates() const { return {lr_backbone, lr_head}; }
  LearningRates pretrain_rates() const { return {pretrain_lr_backbone, pretrain_lr_head}; }
  Architecture architecture(std::size_t input_dim, std::size_t num_classes) const;

  /// Throws InvalidInput on violated constraints.
  void validate() const;
};

std::string to_string(AdaptMode mode);
AdaptMode parse_adapt_mode(const std::string& text);

std::string config_to_json(const AdaptConfig& config);
/// Unknown keys and ill-typed values raise InvalidInput.
AdaptConfig config_from_json(const std::string& text);
AdaptConfig load_config(const std::string& path);

}  // namespace nrc

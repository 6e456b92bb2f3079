#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nrc/matrix.hpp"

namespace nrc {

enum class Mode { train, eval };

using Labels = std::vector<std::uint32_t>;

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Shape of the network. The extractor is hidden_dims.size() blocks of
/// linear -> [batch norm] -> ReLU followed by a bottleneck linear -> [batch
/// norm]; the classifier is a weight-normalized linear layer on top.
struct Architecture {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims{64};
  std::size_t feature_dim = 32;
  std::size_t num_classes = 4;
  bool batch_norm = true;
};

struct DenseLayer {
  Matrix weight;  // in x out
  std::vector<double> bias;
  bool batch_norm = false;
  bool relu = false;
  std::vector<double> bn_scale;
  std::vector<double> bn_shift;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }

  bool operator==(const DenseLayer&) const = default;
};

/// Effective weight row c is magnitude[c] * direction.row(c) / |direction.row(c)|.
struct WeightNormClassifier {
  Matrix direction;  // classes x feature_dim
  std::vector<double> magnitude;
  std::vector<double> bias;

  bool operator==(const WeightNormClassifier&) const = default;
};

struct ModelParams {
  std::vector<DenseLayer> extractor;
  WeightNormClassifier classifier;

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::size_t num_classes() const noexcept { return classifier.direction.rows(); }
  Architecture architecture() const;

  bool operator==(const ModelParams&) const = default;
};

/// Gradients share the parameter layout. Running statistics stay zero.
using ModelGrads = ModelParams;

enum class ParamGroup { backbone, head };

template <typename T>
struct BasicParamView {
  std::string name;
  std::span<T> values;
  ParamGroup group;
};
using ParamView = BasicParamView<double>;
using ConstParamView = BasicParamView<const double>;

/// Every trainable block in declaration order. The last extractor layer (the
/// bottleneck) and the classifier form the head group.
std::vector<ParamView> trainable_parameters(ModelParams& params);
std::vector<ConstParamView> trainable_parameters(const ModelParams& params);

std::size_t trainable_count(const ModelParams& params);
std::vector<double> flatten_trainable(const ModelParams& params);
void assign_trainable(ModelParams& params, std::span<const double> flat);

/// Seeded Glorot-uniform initialization with unit-norm classifier directions.
ModelParams init_model(const Architecture& arch, std::uint64_t seed);

ModelParams zeros_like(const ModelParams& params);

/// Rescales each classifier direction row to unit norm. The effective
/// weights do not change, so the call is idempotent.
void apply_weight_norm(ModelParams& params);

Matrix effective_classifier_weights(const WeightNormClassifier& cls);

struct LayerCache {
  Matrix input;
  Matrix linear;      // xW + b
  Matrix normalized;  // batch-norm x_hat (empty without batch norm)
  Matrix output;      // after batch norm and activation
  std::vector<double> mean;     // statistics used for normalization
  std::vector<double> inv_std;
  std::vector<double> batch_var;  // biased batch variance (train mode only)
};

struct ForwardCache {
  Mode mode = Mode::eval;
  std::vector<LayerCache> layers;
  Matrix features;  // z
  Matrix classifier_weights;
  Matrix logits;
  Matrix probs;     // p
};

/// Pure forward pass. Train mode normalizes with batch statistics and needs
/// at least two rows when batch norm is present; running statistics are only
/// touched by commit_running_stats.
ForwardCache forward(const ModelParams& params, const Matrix& x, Mode mode);

void commit_running_stats(ModelParams& params, const ForwardCache& cache,
                          double momentum = kBatchNormMomentum);

/// forward() followed by commit_running_stats() in train mode.
ForwardCache forward_train(ModelParams& params, const Matrix& x);

ModelGrads backward(const ModelParams& params, const ForwardCache& cache, const Matrix& dL_dp);

struct LossAndGrad {
  double value = 0.0;
  Matrix grad;  // dL/dp
};

/// Mean cross-entropy against smoothed targets: 1 - smoothing on the true
/// class and smoothing / (C - 1) on every other class.
LossAndGrad source_pretrain_loss(const Matrix& p, std::span<const std::uint32_t> labels,
                                 double smoothing);

}  // namespace nrc

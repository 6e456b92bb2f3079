#include "nrc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nrc/numerics.hpp"

namespace nrc {

std::size_t ModelParams::input_dim() const {
  return extractor.empty() ? classifier.direction.cols() : extractor.front().in_dim();
}

std::size_t ModelParams::feature_dim() const { return classifier.direction.cols(); }

Architecture ModelParams::architecture() const {
  Architecture arch;
  arch.input_dim = input_dim();
  arch.hidden_dims.clear();
  for (std::size_t l = 0; l + 1 < extractor.size(); ++l) arch.hidden_dims.push_back(extractor[l].out_dim());
  arch.feature_dim = feature_dim();
  arch.num_classes = num_classes();
  arch.batch_norm = !extractor.empty() && extractor.front().batch_norm;
  return arch;
}

namespace {

template <typename Params, typename View>
std::vector<View> collect_views(Params& params) {
  std::vector<View> views;
  const std::size_t n = params.extractor.size();
  for (std::size_t l = 0; l < n; ++l) {
    auto& layer = params.extractor[l];
    const ParamGroup group = (l + 1 == n) ? ParamGroup::head : ParamGroup::backbone;
    const std::string prefix = "extractor." + std::to_string(l) + ".";
    views.push_back({prefix + "weight", layer.weight.values(), group});
    views.push_back({prefix + "bias", layer.bias, group});
    if (layer.batch_norm) {
      views.push_back({prefix + "bn_scale", layer.bn_scale, group});
      views.push_back({prefix + "bn_shift", layer.bn_shift, group});
    }
  }
  views.push_back({"classifier.direction", params.classifier.direction.values(), ParamGroup::head});
  views.push_back({"classifier.magnitude", params.classifier.magnitude, ParamGroup::head});
  views.push_back({"classifier.bias", params.classifier.bias, ParamGroup::head});
  return views;
}

}  // namespace

std::vector<ParamView> trainable_parameters(ModelParams& params) {
  return collect_views<ModelParams, ParamView>(params);
}

std::vector<ConstParamView> trainable_parameters(const ModelParams& params) {
  return collect_views<const ModelParams, ConstParamView>(params);
}

std::size_t trainable_count(const ModelParams& params) {
  std::size_t total = 0;
  for (const auto& v : trainable_parameters(params)) total += v.values.size();
  return total;
}

std::vector<double> flatten_trainable(const ModelParams& params) {
  std::vector<double> flat;
  flat.reserve(trainable_count(params));
  for (const auto& v : trainable_parameters(params)) {
    flat.insert(flat.end(), v.values.begin(), v.values.end());
  }
  return flat;
}

void assign_trainable(ModelParams& params, std::span<const double> flat) {
  if (flat.size() != trainable_count(params)) throw InvalidInput("assign_trainable: size mismatch");
  std::size_t offset = 0;
  for (auto& v : trainable_parameters(params)) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), v.values.size(), v.values.begin());
    offset += v.values.size();
  }
}

namespace {

DenseLayer make_layer(std::size_t in, std::size_t out, bool batch_norm, bool relu, std::mt19937_64& rng) {
  DenseLayer layer;
  layer.weight = Matrix(in, out);
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : layer.weight.values()) w = dist(rng);
  layer.bias.assign(out, 0.0);
  layer.batch_norm = batch_norm;
  layer.relu = relu;
  if (batch_norm) {
    layer.bn_scale.assign(out, 1.0);
    layer.bn_shift.assign(out, 0.0);
    layer.running_mean.assign(out, 0.0);
    layer.running_var.assign(out, 1.0);
  }
  return layer;
}

}  // namespace

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  if (arch.num_classes < 2) throw InvalidInput("init_model: need at least 2 classes");
  if (arch.input_dim == 0 || arch.feature_dim == 0) throw InvalidInput("init_model: zero dimension");
  std::mt19937_64 rng(seed);
  ModelParams params;
  std::size_t in = arch.input_dim;
  for (std::size_t width : arch.hidden_dims) {
    if (width == 0) throw InvalidInput("init_model: zero hidden width");
    params.extractor.push_back(make_layer(in, width, arch.batch_norm, true, rng));
    in = width;
  }
  params.extractor.push_back(make_layer(in, arch.feature_dim, arch.batch_norm, false, rng));

  auto& cls = params.classifier;
  cls.direction = Matrix(arch.num_classes, arch.feature_dim);
  const double bound = std::sqrt(6.0 / static_cast<double>(arch.num_classes + arch.feature_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : cls.direction.values()) w = dist(rng);
  const auto norms = row_norms(cls.direction);
  cls.magnitude.assign(norms.begin(), norms.end());
  cls.bias.assign(arch.num_classes, 0.0);
  apply_weight_norm(params);
  return params;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for (auto& v : trainable_parameters(z)) std::fill(v.values.begin(), v.values.end(), 0.0);
  for (auto& layer : z.extractor) {
    std::fill(layer.running_mean.begin(), layer.running_mean.end(), 0.0);
    std::fill(layer.running_var.begin(), layer.running_var.end(), 0.0);
  }
  return z;
}

void apply_weight_norm(ModelParams& params) {
  auto& dir = params.classifier.direction;
  for (std::size_t c = 0; c < dir.rows(); ++c) {
    auto row = dir.row(c);
    double s = 0.0;
    for (double v : row) s += v * v;
    const double norm = std::sqrt(s);
    // Rows already at unit norm (to rounding) are left bit-identical.
    if (norm < kNormFloor || std::abs(norm - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) continue;
    for (double& v : row) v /= norm;
  }
}

Matrix effective_classifier_weights(const WeightNormClassifier& cls) {
  Matrix w(cls.direction.rows(), cls.direction.cols());
  const auto norms = row_norms(cls.direction);
  for (std::size_t c = 0; c < w.rows(); ++c) {
    const double scale = cls.magnitude[c] / std::max(norms[c], kNormFloor);
    auto src = cls.direction.row(c);
    auto dst = w.row(c);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = scale * src[k];
  }
  return w;
}

namespace {

// out = x W + b
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
  Matrix out(x.rows(), w.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto o = out.row(r);
    std::copy(b.begin(), b.end(), o.begin());
    auto xr = x.row(r);
    for (std::size_t i = 0; i < xr.size(); ++i) {
      const double xi = xr[i];
      auto wr = w.row(i);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += xi * wr[c];
    }
  }
  return out;
}

}  // namespace

ForwardCache forward(const ModelParams& params, const Matrix& x, Mode mode) {
  if (x.cols() != params.input_dim()) throw InvalidInput("forward: input dimension mismatch");
  if (x.rows() == 0) throw InvalidInput("forward: empty batch");
  if (!all_finite(x.values())) throw InvalidInput("forward: non-finite input");
  const bool has_bn = std::any_of(params.extractor.begin(), params.extractor.end(),
                                  [](const DenseLayer& l) { return l.batch_norm; });
  if (mode == Mode::train && has_bn && x.rows() < 2) {
    throw InvalidInput("forward: train-mode batch norm needs at least 2 samples");
  }

  ForwardCache cache;
  cache.mode = mode;
  const Matrix* current = &x;
  for (const DenseLayer& layer : params.extractor) {
    LayerCache lc;
    lc.input = *current;
    lc.linear = affine(lc.input, layer.weight, layer.bias);
    const std::size_t n = lc.linear.rows();
    const std::size_t d = lc.linear.cols();
    Matrix out = lc.linear;
    if (layer.batch_norm) {
      lc.mean.assign(d, 0.0);
      lc.inv_std.assign(d, 0.0);
      if (mode == Mode::train) {
        lc.batch_var.assign(d, 0.0);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) lc.mean[c] += lc.linear(r, c);
        for (double& m : lc.mean) m /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) {
            const double diff = lc.linear(r, c) - lc.mean[c];
            lc.batch_var[c] += diff * diff;
          }
        for (std::size_t c = 0; c < d; ++c) {
          lc.batch_var[c] /= static_cast<double>(n);
          lc.inv_std[c] = 1.0 / std::sqrt(lc.batch_var[c] + kBatchNormEps);
        }
      } else {
        lc.mean = layer.running_mean;
        for (std::size_t c = 0; c < d; ++c) lc.inv_std[c] = 1.0 / std::sqrt(layer.running_var[c] + kBatchNormEps);
      }
      lc.normalized = Matrix(n, d);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) {
          const double xhat = (lc.linear(r, c) - lc.mean[c]) * lc.inv_std[c];
          lc.normalized(r, c) = xhat;
          out(r, c) = layer.bn_scale[c] * xhat + layer.bn_shift[c];
        }
    }
    if (layer.relu) {
      for (double& v : out.values()) v = std::max(v, 0.0);
    }
    lc.output = std::move(out);
    cache.layers.push_back(std::move(lc));
    current = &cache.layers.back().output;
  }
  cache.features = *current;

  cache.classifier_weights = effective_classifier_weights(params.classifier);
  const Matrix& w = cache.classifier_weights;
  cache.logits = Matrix(cache.features.rows(), w.rows());
  for (std::size_t r = 0; r < cache.features.rows(); ++r) {
    auto z = cache.features.row(r);
    for (std::size_t c = 0; c < w.rows(); ++c) {
      cache.logits(r, c) = dot(z, w.row(c)) + params.classifier.bias[c];
    }
  }
  cache.probs = softmax_rows(cache.logits);
  return cache;
}

void commit_running_stats(ModelParams& params, const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::train) return;
  if (cache.layers.size() != params.extractor.size()) throw InvalidInput("commit_running_stats: cache mismatch");
  for (std::size_t l = 0; l < params.extractor.size(); ++l) {
    DenseLayer& layer = params.extractor[l];
    if (!layer.batch_norm) continue;
    const LayerCache& lc = cache.layers[l];
    const double n = static_cast<double>(lc.linear.rows());
    for (std::size_t c = 0; c < layer.running_mean.size(); ++c) {
      const double unbiased = lc.batch_var[c] * n / (n - 1.0);
      layer.running_mean[c] = (1.0 - momentum) * layer.running_mean[c] + momentum * lc.mean[c];
      layer.running_var[c] = (1.0 - momentum) * layer.running_var[c] + momentum * unbiased;
    }
  }
}

ForwardCache forward_train(ModelParams& params, const Matrix& x) {
  ForwardCache cache = forward(params, x, Mode::train);
  commit_running_stats(params, cache);
  return cache;
}

ModelGrads backward(const ModelParams& params, const ForwardCache& cache, const Matrix& dL_dp) {
  const Matrix& p = cache.probs;
  if (dL_dp.rows() != p.rows() || dL_dp.cols() != p.cols()) throw InvalidInput("backward: gradient shape mismatch");
  if (cache.layers.size() != params.extractor.size()) throw InvalidInput("backward: cache does not match params");

  ModelGrads grads = zeros_like(params);
  const std::size_t n = p.rows();
  const std::size_t classes = p.cols();

  // softmax
  Matrix d_logits(n, classes);
  for (std::size_t r = 0; r < n; ++r) {
    const double gp = dot(dL_dp.row(r), p.row(r));
    for (std::size_t c = 0; c < classes; ++c) d_logits(r, c) = p(r, c) * (dL_dp(r, c) - gp);
  }

  // classifier: logits = z W^T + b
  const Matrix& z = cache.features;
  const Matrix& w = cache.classifier_weights;
  const std::size_t dz = z.cols();
  Matrix d_w(classes, dz);
  Matrix d_z(n, dz);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double g = d_logits(r, c);
      grads.classifier.bias[c] += g;
      for (std::size_t k = 0; k < dz; ++k) {
        d_w(c, k) += g * z(r, k);
        d_z(r, k) += g * w(c, k);
      }
    }
  }

  // weight norm: W_c = m_c v_c / |v_c|
  const auto& cls = params.classifier;
  const auto norms = row_norms(cls.direction);
  for (std::size_t c = 0; c < classes; ++c) {
    const double norm = std::max(norms[c], kNormFloor);
    auto v = cls.direction.row(c);
    auto gw = d_w.row(c);
    double gw_dot_vhat = 0.0;
    for (std::size_t k = 0; k < dz; ++k) gw_dot_vhat += gw[k] * v[k] / norm;
    grads.classifier.magnitude[c] = gw_dot_vhat;
    const double scale = cls.magnitude[c] / norm;
    auto gv = grads.classifier.direction.row(c);
    for (std::size_t k = 0; k < dz; ++k) gv[k] = scale * (gw[k] - gw_dot_vhat * v[k] / norm);
  }

  // extractor layers in reverse
  Matrix d_out = std::move(d_z);
  for (std::size_t li = params.extractor.size(); li-- > 0;) {
    const DenseLayer& layer = params.extractor[li];
    const LayerCache& lc = cache.layers[li];
    DenseLayer& gl = grads.extractor[li];
    const std::size_t rows = lc.linear.rows();
    const std::size_t d = lc.linear.cols();

    if (layer.relu) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c)
          if (lc.output(r, c) <= 0.0) d_out(r, c) = 0.0;
    }

    Matrix d_lin = d_out;
    if (layer.batch_norm) {
      Matrix d_xhat(rows, d);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) {
          const double g = d_out(r, c);
          gl.bn_scale[c] += g * lc.normalized(r, c);
          gl.bn_shift[c] += g;
          d_xhat(r, c) = g * layer.bn_scale[c];
        }
      if (cache.mode == Mode::train) {
        const double count = static_cast<double>(rows);
        for (std::size_t c = 0; c < d; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t r = 0; r < rows; ++r) {
            sum_g += d_xhat(r, c);
            sum_gx += d_xhat(r, c) * lc.normalized(r, c);
          }
          for (std::size_t r = 0; r < rows; ++r) {
            d_lin(r, c) = lc.inv_std[c] / count *
                          (count * d_xhat(r, c) - sum_g - lc.normalized(r, c) * sum_gx);
          }
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < d; ++c) d_lin(r, c) = d_xhat(r, c) * lc.inv_std[c];
      }
    }

    const std::size_t in = layer.in_dim();
    Matrix d_in(rows, in);
    for (std::size_t r = 0; r < rows; ++r) {
      auto x = lc.input.row(r);
      auto g = d_lin.row(r);
      for (std::size_t c = 0; c < d; ++c) gl.bias[c] += g[c];
      for (std::size_t i = 0; i < in; ++i) {
        auto gw_row = gl.weight.row(i);
        auto w_row = layer.weight.row(i);
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          gw_row[c] += x[i] * g[c];
          acc += g[c] * w_row[c];
        }
        d_in(r, i) = acc;
      }
    }
    d_out = std::move(d_in);
  }
  return grads;
}

LossAndGrad source_pretrain_loss(const Matrix& p, std::span<const std::uint32_t> labels, double smoothing) {
  if (labels.size() != p.rows()) throw InvalidInput("source_pretrain_loss: label count mismatch");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw InvalidInput("source_pretrain_loss: smoothing must be in [0, 1)");
  const std::size_t n = p.rows();
  const std::size_t classes = p.cols();
  if (n == 0) throw InvalidInput("source_pretrain_loss: empty batch");
  const double off = classes > 1 ? smoothing / static_cast<double>(classes - 1) : 0.0;
  const double on = 1.0 - smoothing;

  LossAndGrad out;
  out.grad = Matrix(n, classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= classes) throw InvalidInput("source_pretrain_loss: label out of range");
    for (std::size_t c = 0; c < classes; ++c) {
      const double target = (c == labels[r]) ? on : off;
      const double prob = p(r, c);
      out.value -= inv_n * target * std::log(std::max(prob, kProbFloor));
      out.grad(r, c) = prob > kProbFloor ? -inv_n * target / prob : 0.0;
    }
  }
  return out;
}

}  // namespace nrc

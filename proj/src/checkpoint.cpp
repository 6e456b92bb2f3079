#include "nrc/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "nrc/numerics.hpp"

namespace nrc {

namespace detail {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace detail

namespace {

constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

void put_block(detail::ByteWriter& w, std::span<const double> block) {
  for (double v : block) w.put(v);
}

void get_block(detail::ByteReader& r, std::span<double> block, const char* what) {
  r.require(block.size() * sizeof(double), what);
  for (double& v : block) {
    const auto at = r.offset();
    v = r.get<double>(what);
    if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in ") + what, at);
  }
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const ModelParams& params) {
  detail::ByteWriter w;
  w.put_tag("NRCM");
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(params.extractor.size()));
  for (const auto& layer : params.extractor) {
    w.put(static_cast<std::uint64_t>(layer.in_dim()));
    w.put(static_cast<std::uint64_t>(layer.out_dim()));
    w.put(static_cast<std::uint8_t>(layer.batch_norm));
    w.put(static_cast<std::uint8_t>(layer.relu));
  }
  w.put(static_cast<std::uint64_t>(params.num_classes()));
  for (const auto& layer : params.extractor) {
    put_block(w, layer.weight.values());
    put_block(w, layer.bias);
    if (layer.batch_norm) {
      put_block(w, layer.bn_scale);
      put_block(w, layer.bn_shift);
      put_block(w, layer.running_mean);
      put_block(w, layer.running_var);
    }
  }
  put_block(w, params.classifier.direction.values());
  put_block(w, params.classifier.magnitude);
  put_block(w, params.classifier.bias);
  return w.bytes();
}

ModelParams decode_checkpoint(std::span<const unsigned char> bytes) {
  detail::ByteReader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), "NRCM", 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version", version_at);
  const auto layers_at = r.offset();
  const auto layers = r.get<std::uint32_t>("layer count");
  if (layers == 0 || layers > 64) throw FormatError("implausible layer count", layers_at);

  ModelParams params;
  std::uint64_t prev_out = 0;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto at = r.offset();
    const auto in = r.get<std::uint64_t>("layer dims");
    const auto out = r.get<std::uint64_t>("layer dims");
    const auto bn = r.get<std::uint8_t>("layer flags");
    const auto relu = r.get<std::uint8_t>("layer flags");
    if (in == 0 || out == 0 || in >= kMaxDim || out >= kMaxDim || bn > 1 || relu > 1) {
      throw FormatError("invalid layer header", at);
    }
    if (l > 0 && in != prev_out) throw FormatError("layer dimensions do not chain", at);
    prev_out = out;
    DenseLayer layer;
    layer.weight = Matrix(in, out);
    layer.bias.assign(out, 0.0);
    layer.batch_norm = bn != 0;
    layer.relu = relu != 0;
    if (layer.batch_norm) {
      layer.bn_scale.assign(out, 0.0);
      layer.bn_shift.assign(out, 0.0);
      layer.running_mean.assign(out, 0.0);
      layer.running_var.assign(out, 0.0);
    }
    params.extractor.push_back(std::move(layer));
  }
  const auto classes_at = r.offset();
  const auto classes = r.get<std::uint64_t>("class count");
  if (classes < 2 || classes >= kMaxDim) throw FormatError("invalid class count", classes_at);

  for (auto& layer : params.extractor) {
    get_block(r, layer.weight.values(), "layer weight");
    get_block(r, layer.bias, "layer bias");
    if (layer.batch_norm) {
      get_block(r, layer.bn_scale, "batch-norm scale");
      get_block(r, layer.bn_shift, "batch-norm shift");
      get_block(r, layer.running_mean, "running mean");
      get_block(r, layer.running_var, "running var");
    }
  }
  auto& cls = params.classifier;
  cls.direction = Matrix(classes, prev_out);
  cls.magnitude.assign(classes, 0.0);
  cls.bias.assign(classes, 0.0);
  get_block(r, cls.direction.values(), "classifier direction");
  get_block(r, cls.magnitude, "classifier magnitude");
  get_block(r, cls.bias, "classifier bias");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return params;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  detail::write_file(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file(path)); }

}  // namespace nrc

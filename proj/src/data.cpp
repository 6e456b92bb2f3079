#include "nrc/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "nrc/numerics.hpp"

namespace nrc {

Matrix synthetic_class_means(std::size_t num_classes, std::size_t input_dim, const ShiftParams& shift,
                             bool target_domain) {
  Matrix means(num_classes, input_dim);
  const double theta = target_domain ? shift.rotation_degrees * std::numbers::pi / 180.0 : 0.0;
  const double offset = target_domain ? shift.translation / std::numbers::sqrt2 : 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
    const double x = shift.radius * std::cos(angle);
    const double y = shift.radius * std::sin(angle);
    means(c, 0) = std::cos(theta) * x - std::sin(theta) * y + offset;
    means(c, 1) = std::sin(theta) * x + std::cos(theta) * y + offset;
  }
  return means;
}

namespace {

Domain sample_domain(const Matrix& means, std::size_t n_per_class, double noise, std::mt19937_64& rng) {
  const std::size_t classes = means.rows();
  const std::size_t dim = means.cols();
  const std::size_t n = classes * n_per_class;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  Domain d;
  d.features = Matrix(n, dim);
  d.labels.resize(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t c = t / n_per_class;
    const std::size_t row = order[t];
    d.labels[row] = static_cast<std::uint32_t>(c);
    for (std::size_t k = 0; k < dim; ++k) d.features(row, k) = means(c, k) + noise * gauss(rng);
  }
  return d;
}

}  // namespace

DatasetManifest generate_synthetic_shift(std::size_t num_classes, std::size_t input_dim, std::size_t n_per_class,
                                         const ShiftParams& shift, std::uint64_t seed) {
  if (num_classes < 2) throw InvalidInput("generate_synthetic_shift: need at least 2 classes");
  if (input_dim < 2) throw InvalidInput("generate_synthetic_shift: need at least 2 dimensions");
  if (n_per_class == 0) throw InvalidInput("generate_synthetic_shift: n_per_class must be positive");
  if (!(shift.noise_scale >= 0.0)) throw InvalidInput("generate_synthetic_shift: noise scale must be >= 0");
  if (!std::isfinite(shift.rotation_degrees) || !std::isfinite(shift.translation) || !std::isfinite(shift.radius)) {
    throw InvalidInput("generate_synthetic_shift: non-finite shift parameters");
  }

  DatasetManifest m;
  m.num_classes = num_classes;
  m.input_dim = input_dim;
  std::mt19937_64 source_rng(seed);
  std::mt19937_64 target_rng(seed ^ 0xa5a5a5a5deadbeefULL);
  m.source = sample_domain(synthetic_class_means(num_classes, input_dim, shift, false), n_per_class,
                           shift.noise_scale, source_rng);
  m.target = sample_domain(synthetic_class_means(num_classes, input_dim, shift, true), n_per_class,
                           shift.noise_scale, target_rng);
  char buf[256];
  std::snprintf(buf, sizeof buf, "rotation=%gdeg translation=%g noise=%g radius=%g", shift.rotation_degrees,
                shift.translation, shift.noise_scale, shift.radius);
  m.metadata = {"synthetic-shift", seed, buf};
  return m;
}

std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

void put_payload(detail::ByteWriter& w, const Matrix& m) {
  for (double v : m.values()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw InvalidInput("feature file: value not representable as finite f32");
    w.put(f);
  }
}

struct Header {
  SectionTag tag;
  std::uint64_t rows;
  std::uint64_t cols;
  std::uint64_t feature_cols = 0;
  bool has_labels = false;
  std::uint64_t payload_start = 0;
};

void write_header(detail::ByteWriter& w, SectionTag tag, std::uint64_t rows, std::uint64_t cols) {
  w.put_tag("NRCF");
  w.put(kFeatureFileVersion);
  w.put(static_cast<std::uint8_t>(tag));
  w.put(rows);
  w.put(cols);
}

void finish(detail::ByteWriter& w, std::size_t payload_start) {
  const auto& bytes = w.bytes();
  w.put(crc32_of(std::span(bytes).subspan(payload_start)));
}

Header read_header(detail::ByteReader& r) {
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), "NRCF", 4) != 0) throw FormatError("bad feature-file magic", 0);
  const auto version_at = r.offset();
  if (r.get<std::uint32_t>("version") != kFeatureFileVersion) {
    throw FormatError("unsupported feature-file version", version_at);
  }
  const auto tag_at = r.offset();
  const auto tag = r.get<std::uint8_t>("section tag");
  if (tag > 2) throw FormatError("unknown section tag", tag_at);
  Header h{static_cast<SectionTag>(tag), 0, 0};
  const auto dims_at = r.offset();
  h.rows = r.get<std::uint64_t>("rows");
  h.cols = r.get<std::uint64_t>("cols");
  if (h.rows >= kMaxDim || h.cols >= kMaxDim || h.cols == 0) throw FormatError("dimension overflow", dims_at);
  if (h.tag == SectionTag::embeddings) {
    const auto at = r.offset();
    h.feature_cols = r.get<std::uint64_t>("embedding split");
    const auto flag = r.get<std::uint8_t>("label flag");
    if (h.feature_cols == 0 || h.feature_cols >= h.cols || flag > 1) throw FormatError("invalid embedding header", at);
    h.has_labels = flag == 1;
  } else {
    h.has_labels = h.tag == SectionTag::labeled;
  }
  h.payload_start = r.offset();
  if (h.rows != 0 && h.cols > r.remaining() / sizeof(float) / h.rows) {
    throw FormatError("dimension overflow: payload larger than file", dims_at);
  }
  const std::uint64_t payload = h.rows * h.cols * sizeof(float);
  const std::uint64_t label_bytes = h.has_labels ? h.rows * sizeof(std::uint32_t) : 0;
  if (payload + label_bytes + sizeof(std::uint32_t) > r.remaining()) {
    throw FormatError("truncated payload: header promises more data than the file holds", r.offset());
  }
  return h;
}

Matrix read_payload(detail::ByteReader& r, const Header& h) {
  Matrix m(h.rows, h.cols);
  for (double& v : m.values()) {
    const auto at = r.offset();
    const auto f = r.get<float>("payload");
    if (!std::isfinite(f)) throw FormatError("non-finite payload value", at);
    v = static_cast<double>(f);
  }
  return m;
}

Labels read_labels(detail::ByteReader& r, std::uint64_t rows) {
  Labels labels(rows);
  for (auto& y : labels) y = r.get<std::uint32_t>("labels");
  return labels;
}

void check_trailer(detail::ByteReader& r, std::span<const unsigned char> bytes, const Header& h) {
  const auto crc_at = r.offset();
  const auto expected = crc32_of(bytes.subspan(h.payload_start, crc_at - h.payload_start));
  const auto stored = r.get<std::uint32_t>("checksum");
  if (stored != expected) throw FormatError("checksum mismatch", crc_at);
  if (r.remaining() != 0) throw FormatError("trailing bytes after checksum", r.offset());
}

void put_labels(detail::ByteWriter& w, const Labels& labels, std::size_t rows) {
  if (labels.size() != rows) throw InvalidInput("feature file: label count does not match rows");
  for (auto y : labels) w.put(y);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<unsigned char> encode_features(const Matrix& features, const Labels* labels) {
  if (features.cols() == 0) throw InvalidInput("feature file: zero columns");
  detail::ByteWriter w;
  write_header(w, labels ? SectionTag::labeled : SectionTag::features, features.rows(), features.cols());
  const std::size_t start = w.size();
  put_payload(w, features);
  if (labels) put_labels(w, *labels, features.rows());
  finish(w, start);
  return w.bytes();
}

FeatureFile decode_features(std::span<const unsigned char> bytes) {
  detail::ByteReader r(bytes);
  const Header h = read_header(r);
  if (h.tag == SectionTag::embeddings) throw FormatError("expected a feature section, found embeddings", 8);
  FeatureFile out;
  out.features = read_payload(r, h);
  if (h.has_labels) out.labels = read_labels(r, h.rows);
  check_trailer(r, bytes, h);
  return out;
}

std::vector<unsigned char> encode_embeddings(const Matrix& z, const Matrix& p, const Labels* labels) {
  if (z.rows() != p.rows()) throw InvalidInput("save_embeddings: row counts disagree");
  if (z.cols() == 0 || p.cols() == 0) throw InvalidInput("save_embeddings: empty columns");
  detail::ByteWriter w;
  write_header(w, SectionTag::embeddings, z.rows(), z.cols() + p.cols());
  w.put(static_cast<std::uint64_t>(z.cols()));
  w.put(static_cast<std::uint8_t>(labels != nullptr));
  const std::size_t start = w.size();
  Matrix joined(z.rows(), z.cols() + p.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    std::ranges::copy(z.row(r), joined.row(r).begin());
    std::ranges::copy(p.row(r), joined.row(r).begin() + static_cast<std::ptrdiff_t>(z.cols()));
  }
  put_payload(w, joined);
  if (labels) put_labels(w, *labels, z.rows());
  finish(w, start);
  return w.bytes();
}

Embeddings decode_embeddings(std::span<const unsigned char> bytes) {
  detail::ByteReader r(bytes);
  const Header h = read_header(r);
  if (h.tag != SectionTag::embeddings) throw FormatError("expected an embeddings section", 8);
  const Matrix joined = read_payload(r, h);
  Embeddings out;
  out.z = Matrix(h.rows, h.feature_cols);
  out.p = Matrix(h.rows, h.cols - h.feature_cols);
  for (std::size_t row = 0; row < h.rows; ++row) {
    auto src = joined.row(row);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(h.feature_cols), out.z.row(row).begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(h.feature_cols), src.end(), out.p.row(row).begin());
  }
  if (h.has_labels) out.labels = read_labels(r, h.rows);
  check_trailer(r, bytes, h);
  return out;
}

void save_features(const std::string& path, const Matrix& features, const Labels* labels) {
  if (ends_with(path, ".csv")) {
    const std::string text = encode_features_csv(features, labels);
    detail::write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
    return;
  }
  detail::write_file(path, encode_features(features, labels));
}

FeatureFile load_features(const std::string& path) {
  const auto bytes = detail::read_file(path);
  if (ends_with(path, ".csv")) return decode_features_csv(std::string(bytes.begin(), bytes.end()));
  return decode_features(bytes);
}

void save_embeddings(const std::string& path, const Matrix& z, const Matrix& p, const Labels* labels) {
  detail::write_file(path, encode_embeddings(z, p, labels));
}

Embeddings load_embeddings(const std::string& path) { return decode_embeddings(detail::read_file(path)); }

std::string encode_features_csv(const Matrix& features, const Labels* labels) {
  if (labels && labels->size() != features.rows()) throw InvalidInput("csv: label count does not match rows");
  std::string out;
  for (std::size_t c = 0; c < features.cols(); ++c) {
    if (c) out += ',';
    out += 'f' + std::to_string(c);
  }
  if (labels) out += ",label";
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) {
      if (c) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", features(r, c));
      out += buf;
    }
    if (labels) out += ',' + std::to_string((*labels)[r]);
    out += '\n';
  }
  return out;
}

FeatureFile decode_features_csv(const std::string& text) {
  std::size_t pos = 0;
  auto next_line = [&](std::size_t& start) -> std::optional<std::string_view> {
    if (pos >= text.size()) return std::nullopt;
    start = pos;
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    pos = end + 1;
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };
  auto split = [](std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t from = 0;
    while (true) {
      const std::size_t comma = line.find(',', from);
      fields.push_back(line.substr(from, comma == std::string_view::npos ? std::string_view::npos : comma - from));
      if (comma == std::string_view::npos) break;
      from = comma + 1;
    }
    return fields;
  };

  std::size_t line_start = 0;
  const auto header = next_line(line_start);
  if (!header || header->empty()) throw FormatError("csv: missing header", 0);
  const auto names = split(*header);
  bool has_labels = names.back() == "label";
  const std::size_t dim = names.size() - (has_labels ? 1 : 0);
  if (dim == 0) throw FormatError("csv: no feature columns", 0);
  for (std::size_t c = 0; c < dim; ++c) {
    if (names[c] != "f" + std::to_string(c)) throw FormatError("csv: unexpected header column", 0);
  }

  std::vector<double> values;
  Labels labels;
  std::size_t rows = 0;
  while (auto line = next_line(line_start)) {
    if (line->empty()) continue;
    const auto fields = split(*line);
    if (fields.size() != names.size()) throw FormatError("csv: wrong field count", line_start);
    for (std::size_t c = 0; c < dim; ++c) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(fields[c].data(), fields[c].data() + fields[c].size(), v);
      if (ec != std::errc() || ptr != fields[c].data() + fields[c].size() || !std::isfinite(v)) {
        throw FormatError("csv: bad number", line_start);
      }
      values.push_back(v);
    }
    if (has_labels) {
      std::uint32_t y = 0;
      const auto& f = fields.back();
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), y);
      if (ec != std::errc() || ptr != f.data() + f.size()) throw FormatError("csv: bad label", line_start);
      labels.push_back(y);
    }
    ++rows;
  }
  FeatureFile out;
  out.features = Matrix(rows, dim, std::move(values));
  if (has_labels) out.labels = std::move(labels);
  return out;
}

}  // namespace nrc

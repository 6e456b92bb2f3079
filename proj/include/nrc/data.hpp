#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nrc/matrix.hpp"
#include "nrc/model.hpp"

namespace nrc {

struct Domain {
  Matrix features;
  Labels labels;  // target labels are for evaluation only
};

struct DatasetMetadata {
  std::string name;
  std::uint64_t seed = 0;
  std::string shift;
};

struct DatasetManifest {
  Domain source;
  Domain target;
  std::size_t num_classes = 0;
  std::size_t input_dim = 0;
  DatasetMetadata metadata;
};

/// Covariate shift applied to the target domain: class means are rotated by
/// rotation_degrees about the origin in the first two coordinates, then
/// moved by `translation` along (1, 1)/sqrt(2). Clusters are isotropic
/// Gaussians with standard deviation noise_scale.
struct ShiftParams {
  double rotation_degrees = 30.0;
  double translation = 0.5;
  double noise_scale = 1.0;
  double radius = 4.0;  // source means sit on this circle

  static ShiftParams identity() { return {0.0, 0.0, 1.0, 4.0}; }
};

/// Class means for one domain; row c is the mean of class c.
Matrix synthetic_class_means(std::size_t num_classes, std::size_t input_dim, const ShiftParams& shift,
                             bool target_domain);

/// Seeded two-domain benchmark with n_per_class samples per class per
/// domain, rows shuffled within each domain.
DatasetManifest generate_synthetic_shift(std::size_t num_classes, std::size_t input_dim, std::size_t n_per_class,
                                         const ShiftParams& shift, std::uint64_t seed);

// "NRCF" feature files: magic, u32 version, u8 section tag, u64 rows,
// u64 cols, row-major little-endian f32 payload, optional u32 labels block,
// trailing CRC32 of the payload and label bytes. Embedding sections carry
// an extra u64 feature-column count and u8 label flag after cols; the
// payload then holds [z | p] side by side.

inline constexpr std::uint32_t kFeatureFileVersion = 1;

enum class SectionTag : std::uint8_t { features = 0, labeled = 1, embeddings = 2 };

struct FeatureFile {
  Matrix features;
  std::optional<Labels> labels;
};

struct Embeddings {
  Matrix z;
  Matrix p;
  std::optional<Labels> labels;
};

std::vector<unsigned char> encode_features(const Matrix& features, const Labels* labels = nullptr);
FeatureFile decode_features(std::span<const unsigned char> bytes);

std::vector<unsigned char> encode_embeddings(const Matrix& z, const Matrix& p, const Labels* labels = nullptr);
Embeddings decode_embeddings(std::span<const unsigned char> bytes);

void save_features(const std::string& path, const Matrix& features, const Labels* labels = nullptr);
/// Binary unless the path ends in ".csv".
FeatureFile load_features(const std::string& path);

void save_embeddings(const std::string& path, const Matrix& z, const Matrix& p, const Labels* labels = nullptr);
Embeddings load_embeddings(const std::string& path);

/// CSV with header f0,...,f{d-1}[,label]; values printed with 17 significant
/// digits so doubles survive a round trip.
std::string encode_features_csv(const Matrix& features, const Labels* labels = nullptr);
FeatureFile decode_features_csv(const std::string& text);

std::uint32_t crc32_of(std::span<const unsigned char> bytes);

}  // namespace nrc

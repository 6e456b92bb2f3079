#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "nrc/checkpoint.hpp"
#include "nrc/error.hpp"
#include "nrc/model.hpp"

namespace {

nrc::ModelParams sample_model() {
  nrc::Architecture a;
  a.input_dim = 3;
  a.hidden_dims = {5, 4};
  a.feature_dim = 6;
  a.num_classes = 3;
  auto p = nrc::init_model(a, 77);
  for (std::size_t t = 0; t < p.extractor[0].running_var.size(); ++t) p.extractor[0].running_var[t] = 0.5 + t;
  return p;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const auto params = sample_model();
  const auto bytes = nrc::encode_checkpoint(params);
  EXPECT_EQ(nrc::decode_checkpoint(bytes), params);
  EXPECT_EQ(nrc::encode_checkpoint(nrc::decode_checkpoint(bytes)), bytes);
}

TEST(Checkpoint, RoundTripWithoutBatchNorm) {
  nrc::Architecture a;
  a.batch_norm = false;
  const auto params = nrc::init_model(a, 3);
  EXPECT_EQ(nrc::decode_checkpoint(nrc::encode_checkpoint(params)), params);
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = nrc::encode_checkpoint(sample_model());
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::memcmp(bytes.data(), "NRCM", 4), 0);
  std::uint32_t version = 0, layers = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&layers, bytes.data() + 8, 4);
  EXPECT_EQ(version, nrc::kCheckpointVersion);
  EXPECT_EQ(layers, 3u);
}

TEST(Checkpoint, CorruptionIsRejectedWithOffset) {
  auto bytes = nrc::encode_checkpoint(sample_model());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(nrc::decode_checkpoint(bad_magic), nrc::FormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(nrc::decode_checkpoint(bad_version), nrc::FormatError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  try {
    nrc::decode_checkpoint(truncated);
    FAIL() << "truncated checkpoint accepted";
  } catch (const nrc::FormatError& e) {
    EXPECT_LE(e.offset(), truncated.size());
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(nrc::decode_checkpoint(trailing), nrc::FormatError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "nrc_checkpoint_test.nrcm";
  const auto params = sample_model();
  nrc::save_checkpoint(path.string(), params);
  EXPECT_EQ(nrc::load_checkpoint(path.string()), params);
  std::filesystem::remove(path);
  EXPECT_THROW(nrc::load_checkpoint(path.string()), nrc::IoError);
}

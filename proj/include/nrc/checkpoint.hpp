#pragma once

#include <string>
#include <vector>

#include "nrc/model.hpp"

namespace nrc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "NRCM" checkpoint: magic, u32 version, u32 layer count, per-layer
/// (u64 in, u64 out, u8 batch_norm, u8 relu), u64 classes, then raw
/// little-endian f64 blocks in declaration order: per layer weight, bias and
/// (with batch norm) scale, shift, running mean, running var; then classifier
/// direction, magnitude, bias.
std::vector<unsigned char> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace nrc

// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary parameter archive: model weights plus per-layer quantization and
// estimator state. All integers and doubles are little-endian; doubles are
// stored as their IEEE-754 bit patterns, so load(save(x)) == x exactly.
//
//   "QVDA" u32 version
//   model: u64 layers, hidden, spatial, frames; u8 kind; u64 seed
//   u64 layer count, then per layer in forward order:
//     str name; u64 d_out, d_in; f64[d_out*d_in] weight; f64[d_out] bias
//     spec weight_spec, act_spec; u64 k; k x params; u8 tqe_enabled
//     vec alpha, beta, m
//   u64 FNV-1a checksum of every preceding byte
//
// str = u32 length + bytes, vec = u64 length + f64 values,
// spec = i32 bits, u8 granularity, u8 passthrough,
// params = f64 scale, i64 zero_point, f64 lower, f64 upper, i32 bits.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "qvdit/toy_model.hpp"

namespace qvdit {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
  ToyDiT model;
  QuantState state;
};

std::string encode_archive(const ToyDiT& model, const QuantState& state);
/// Throws ArchiveError on bad magic, unsupported version, truncation or
/// checksum mismatch.
Archive decode_archive(std::string_view bytes);

void save_archive(const std::filesystem::path& path, const ToyDiT& model, const QuantState& state);
Archive load_archive(const std::filesystem::path& path);

/// Throws ArchiveError naming the first layer whose shape differs from what
/// `cfg` would build.
void check_archive_matches(const Archive& archive, const ToyDiTConfig& cfg);

}  // namespace qvdit

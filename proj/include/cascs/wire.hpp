#pragma once

// Wire formats exchanged between the sampling and reconstruction ends.
//
// Measurement file (little-endian):
//   "CASY" | u32 version=1 | u32 H | u32 W | u32 B | u64 matrix hash
//   | u32 first row (0-based, shared by all blocks)
//   | per block, row-major block order: u16 q_i, f32 x q_i
// The block grid is ceil(H/B) x ceil(W/B).
//
// Ratio map JSON: {"block":B,"grid":[[r...],...],"budget_q":q,"bound_k":K}

#include "cascs/allocator.hpp"
#include "cascs/block_codec.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cascs {

inline constexpr std::size_t kMeasurementHeaderBytes = 4 + 4 * 4 + 8 + 4;

std::vector<std::uint8_t> encode_measurements(const BlockMeasurementSet& meas);
BlockMeasurementSet decode_measurements(std::span<const std::uint8_t> bytes);

/// The set as the receiving end sees it: values rounded to f32.
BlockMeasurementSet quantize_to_wire(const BlockMeasurementSet& meas);

void save_measurements(const BlockMeasurementSet& meas, const std::filesystem::path& path);
BlockMeasurementSet load_measurements(const std::filesystem::path& path);

std::string ratio_map_to_json(const RatioMap& r);
RatioMap ratio_map_from_json(const std::string& text);

void save_ratio_map(const RatioMap& r, const std::filesystem::path& path);
RatioMap load_ratio_map(const std::filesystem::path& path);

}  // namespace cascs

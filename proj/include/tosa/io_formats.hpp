#pragma once

// File formats.
//
// Feature file (.tsaf), little-endian:
//   offset 0   "TSAF"
//   offset 4   u8 version = 1
//   offset 5   u32 rows
//   offset 9   u32 cols
//   offset 13  rows * cols f32, row-major
//
// Raw depth (.tsad), little-endian:
//   offset 0   "TSAD"
//   offset 4   u32 width
//   offset 8   u32 height
//   offset 12  width * height f32, row-major
//
// Depth also loads from PGM: binary P5 (8-bit, or 16-bit big-endian when
// maxval > 255) and ASCII P2. Samples are divided by maxval.
//
// Merge trace JSON:
//   {"final_groups": [[ids...], ...],
//    "grid": {"h": H, "w": W},
//    "layers": [{"alpha": a, "layer": i, "pairs": [[ids...], ...], "r": r}, ...]}
// Keys sorted, id arrays ascending, so equal traces serialize to equal bytes.

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tosa/merge_core.hpp"
#include "tosa/numerics.hpp"
#include "tosa/spatial_tokens.hpp"

namespace tosa {

std::vector<unsigned char> encode_feature_file(const Matrix& m);
Matrix decode_feature_file(std::span<const unsigned char> bytes);
void save_feature_file(const std::filesystem::path& path, const Matrix& m);
Matrix load_feature_file(const std::filesystem::path& path);

std::vector<unsigned char> encode_raw_depth(const DepthMap& depth);
// Values are taken as stored; no normalization.
DepthMap decode_raw_depth(std::span<const unsigned char> bytes);

// Quantizes round(v * maxval). maxval > 255 writes 16-bit samples.
std::vector<unsigned char> encode_pgm(const DepthMap& depth, unsigned maxval = 255,
                                      bool binary = true);
// Samples divided by maxval.
DepthMap decode_pgm(std::span<const unsigned char> bytes);

// Dispatches on the leading magic ("TSAD", "P5", "P2").
DepthMap decode_depth(std::span<const unsigned char> bytes);

// Reads any supported depth file. With `normalize` the result is min-max
// rescaled to [0, 1]; otherwise values must already lie in [0, 1].
DepthMap load_depth_file(const std::filesystem::path& path, bool normalize = true);
void save_raw_depth(const std::filesystem::path& path, const DepthMap& depth);
void save_pgm(const std::filesystem::path& path, const DepthMap& depth, unsigned maxval = 255,
              bool binary = true);

std::string trace_to_json(const MergeTrace& trace);
MergeTrace trace_from_json(std::string_view text);
void save_trace(const std::filesystem::path& path, const MergeTrace& trace);
MergeTrace load_trace(const std::filesystem::path& path);

inline constexpr std::size_t kPaletteSize = 32;
// Fixed RGB palette, cycled by group index.
extern const std::array<unsigned, kPaletteSize> kMergePalette;

// One square per patch filled by group colour, with dark edges where
// neighbouring patches belong to different groups. `retained` labels the
// figure title.
std::string render_merge_map(const MergeTrace& trace, const PatchGrid& grid, std::size_t retained);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace tosa

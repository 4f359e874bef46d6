#pragma once

// Depth map -> per-patch (x, y, z) triplets -> sinusoidal spatial tokens.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tosa/numerics.hpp"

namespace tosa {

inline constexpr std::size_t kDefaultDepthLevels = 27;
inline constexpr std::size_t kDefaultSpatialDim = 66;

// Relative depth in [0, 1], row-major pixels.
struct DepthMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;

  float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

// Throws domain error unless every value is finite and in [0, 1].
void validate_depth(const DepthMap& depth);

// Rescales so the minimum maps to 0 and the maximum to 1. A constant map
// becomes all zeros.
DepthMap normalize_min_max(DepthMap depth);

struct PatchGrid {
  std::size_t grid_w = 27;
  std::size_t grid_h = 27;
  std::size_t patch_size = 14;

  std::size_t patch_count() const noexcept { return grid_w * grid_h; }
  std::size_t pixel_width() const noexcept { return grid_w * patch_size; }
  std::size_t pixel_height() const noexcept { return grid_h * patch_size; }
};

struct SpatialTriplet {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t z = 0;
  friend bool operator==(const SpatialTriplet&, const SpatialTriplet&) = default;
};

// Mean depth per patch, flat index r * grid_w + c.
std::vector<double> patch_mean_depth(const DepthMap& depth, const PatchGrid& grid);

// floor(mean_depth * levels), clamped to levels - 1.
std::uint32_t quantize_depth(double mean_depth, std::size_t levels);

// Triplets in raster order. With no depth map every z is 0.
std::vector<SpatialTriplet> spatial_triplets(const DepthMap& depth, const PatchGrid& grid,
                                             std::size_t levels = kDefaultDepthLevels);
std::vector<SpatialTriplet> planar_triplets(const PatchGrid& grid);

// Row k = enc(x_k) || enc(y_k) || enc(z_k), each enc of width token_dim / 3.
Matrix encode_triplets(std::span<const SpatialTriplet> triplets, std::size_t token_dim);

Matrix make_spatial_tokens(const DepthMap& depth, const PatchGrid& grid,
                           std::size_t token_dim = kDefaultSpatialDim,
                           std::size_t levels = kDefaultDepthLevels);

}  // namespace tosa

#pragma once

#include <cstddef>
#include <span>

#include "tosa/merge_core.hpp"
#include "tosa/spatial_tokens.hpp"

namespace tosa {

// Size-weighted mean of within-group coordinate variance, over the patch
// coordinates (x, y, z * grid_w / levels). Variance is the population
// variance summed over the three axes, so a group of two horizontal
// neighbours contributes 0.25. Zero iff every group is a single patch.
// `triplets` empty means a flat scene (z = 0).
double spatial_dispersion(std::span<const PatchGroup> groups, const PatchGrid& grid,
                          std::span<const SpatialTriplet> triplets,
                          std::size_t levels = kDefaultDepthLevels);

double spatial_dispersion(const MergeTrace& trace, const PatchGrid& grid,
                          std::span<const SpatialTriplet> triplets,
                          std::size_t levels = kDefaultDepthLevels);

}  // namespace tosa

#include "tosa/spatial_tokens.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "tosa/error.hpp"

namespace tosa {

void validate_depth(const DepthMap& depth) {
  if (depth.values.size() != depth.width * depth.height) {
    throw Error(ErrorKind::shape, "depth map holds " + std::to_string(depth.values.size()) +
                                      " values for " + std::to_string(depth.width) + "x" +
                                      std::to_string(depth.height));
  }
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    const float v = depth.values[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorKind::domain,
                  "depth value at pixel " + std::to_string(i) + " is outside [0, 1]");
    }
  }
}

DepthMap normalize_min_max(DepthMap depth) {
  if (depth.values.empty()) return depth;
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    if (!std::isfinite(depth.values[i])) {
      throw Error(ErrorKind::non_finite, "depth value at pixel " + std::to_string(i) +
                                             " is not finite");
    }
  }
  const auto [lo_it, hi_it] = std::ranges::minmax_element(depth.values);
  const double lo = *lo_it;
  const double range = static_cast<double>(*hi_it) - lo;
  for (float& v : depth.values) {
    v = range > 0.0 ? static_cast<float>((v - lo) / range) : 0.0f;
  }
  return depth;
}

std::vector<double> patch_mean_depth(const DepthMap& depth, const PatchGrid& grid) {
  if (grid.grid_w == 0 || grid.grid_h == 0 || grid.patch_size == 0) {
    throw Error(ErrorKind::shape, "patch grid must be non-empty");
  }
  if (depth.width != grid.pixel_width() || depth.height != grid.pixel_height()) {
    throw Error(ErrorKind::shape, "depth map is " + std::to_string(depth.width) + "x" +
                                      std::to_string(depth.height) + ", expected " +
                                      std::to_string(grid.pixel_width()) + "x" +
                                      std::to_string(grid.pixel_height()));
  }
  validate_depth(depth);
  const std::size_t p = grid.patch_size;
  std::vector<double> means(grid.patch_count(), 0.0);
  for (std::size_t r = 0; r < grid.grid_h; ++r) {
    for (std::size_t c = 0; c < grid.grid_w; ++c) {
      double sum = 0.0;
      for (std::size_t dy = 0; dy < p; ++dy) {
        for (std::size_t dx = 0; dx < p; ++dx) sum += depth.at(c * p + dx, r * p + dy);
      }
      means[r * grid.grid_w + c] = sum / static_cast<double>(p * p);
    }
  }
  return means;
}

std::uint32_t quantize_depth(double mean_depth, std::size_t levels) {
  if (levels == 0) throw Error(ErrorKind::domain, "depth levels must be >= 1");
  if (!(mean_depth >= 0.0 && mean_depth <= 1.0)) {
    throw Error(ErrorKind::domain, "mean depth " + std::to_string(mean_depth) +
                                       " is outside [0, 1]");
  }
  const auto level = static_cast<std::size_t>(std::floor(mean_depth * static_cast<double>(levels)));
  return static_cast<std::uint32_t>(std::min(level, levels - 1));
}

std::vector<SpatialTriplet> planar_triplets(const PatchGrid& grid) {
  std::vector<SpatialTriplet> out;
  out.reserve(grid.patch_count());
  for (std::size_t r = 0; r < grid.grid_h; ++r) {
    for (std::size_t c = 0; c < grid.grid_w; ++c) {
      out.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r), 0});
    }
  }
  return out;
}

std::vector<SpatialTriplet> spatial_triplets(const DepthMap& depth, const PatchGrid& grid,
                                             std::size_t levels) {
  const auto means = patch_mean_depth(depth, grid);
  auto out = planar_triplets(grid);
  for (std::size_t k = 0; k < out.size(); ++k) out[k].z = quantize_depth(means[k], levels);
  return out;
}

Matrix encode_triplets(std::span<const SpatialTriplet> triplets, std::size_t token_dim) {
  if (token_dim == 0 || token_dim % 6 != 0) {
    throw Error(ErrorKind::invalid_dimension,
                "spatial token width must be a positive multiple of 6, got " +
                    std::to_string(token_dim));
  }
  const std::size_t part = token_dim / 3;
  Matrix out(triplets.size(), token_dim);
  std::map<std::uint32_t, std::vector<float>> cache;
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    auto row = out.row(k);
    const std::uint32_t coords[3] = {triplets[k].x, triplets[k].y, triplets[k].z};
    for (std::size_t c = 0; c < 3; ++c) {
      auto [it, fresh] = cache.try_emplace(coords[c]);
      if (fresh) it->second = sinusoidal_encoding(coords[c], part);
      std::ranges::copy(it->second, row.begin() + static_cast<std::ptrdiff_t>(c * part));
    }
  }
  return out;
}

Matrix make_spatial_tokens(const DepthMap& depth, const PatchGrid& grid, std::size_t token_dim,
                           std::size_t levels) {
  if (token_dim == 0 || token_dim % 6 != 0) {
    throw Error(ErrorKind::invalid_dimension,
                "spatial token width must be a positive multiple of 6, got " +
                    std::to_string(token_dim));
  }
  return encode_triplets(spatial_triplets(depth, grid, levels), token_dim);
}

}  // namespace tosa

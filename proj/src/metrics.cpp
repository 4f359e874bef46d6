#include "tosa/metrics.hpp"

#include <array>
#include <string>

#include "tosa/error.hpp"

namespace tosa {

double spatial_dispersion(std::span<const PatchGroup> groups, const PatchGrid& grid,
                          std::span<const SpatialTriplet> triplets, std::size_t levels) {
  const std::size_t n = grid.patch_count();
  if (!is_partition(groups, n)) {
    throw Error(ErrorKind::invalid_trace, "groups do not partition the patch grid");
  }
  if (!triplets.empty() && triplets.size() != n) {
    throw Error(ErrorKind::shape, "got " + std::to_string(triplets.size()) + " triplets for " +
                                      std::to_string(n) + " patches");
  }
  if (levels == 0) throw Error(ErrorKind::domain, "depth levels must be >= 1");
  const double z_scale = static_cast<double>(grid.grid_w) / static_cast<double>(levels);
  const auto coords = [&](std::uint32_t id) {
    const double x = static_cast<double>(id % grid.grid_w);
    const double y = static_cast<double>(id / grid.grid_w);
    const double z = triplets.empty() ? 0.0 : triplets[id].z * z_scale;
    return std::array<double, 3>{x, y, z};
  };

  double weighted = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    std::array<double, 3> mean{};
    for (auto id : g) {
      const auto p = coords(id);
      for (int a = 0; a < 3; ++a) mean[a] += p[a];
    }
    const double count = static_cast<double>(g.size());
    for (double& m : mean) m /= count;
    double var = 0.0;
    for (auto id : g) {
      const auto p = coords(id);
      for (int a = 0; a < 3; ++a) var += (p[a] - mean[a]) * (p[a] - mean[a]);
    }
    var /= count;
    weighted += count * var;
  }
  return weighted / static_cast<double>(n);
}

double spatial_dispersion(const MergeTrace& trace, const PatchGrid& grid,
                          std::span<const SpatialTriplet> triplets, std::size_t levels) {
  return spatial_dispersion(trace.final_groups, grid, triplets, levels);
}

}  // namespace tosa

#ifndef DFM_DISTANCE_TRANSFORM_HPP_
#define DFM_DISTANCE_TRANSFORM_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace dfm {

/// Result of a nearest-site transform on an H×W grid.
struct NearestSiteMap {
  int height = 0;
  int width = 0;
  /// Linear index (row * width + col) of the nearest site, or -1 if there
  /// are no sites at all.
  std::vector<std::int32_t> site;
  /// Squared Euclidean distance in pixel units, -1 when there is no site.
  std::vector<std::int64_t> squared_distance;
};

/// Exact Euclidean nearest-site transform with argmin tracking.
///
/// Separable lower-envelope algorithm (Felzenszwalb-Huttenlocher) in exact
/// integer/rational arithmetic, O(HW). Among equidistant sites the one with
/// the smallest (row, col) is returned, so the result is a total function
/// of the input.
NearestSiteMap nearest_site_transform(int height, int width,
                                      std::span<const std::uint8_t> is_site);

/// Squared Euclidean distance (physical units) from every voxel of a D×H×W
/// grid to the nearest site, with per-axis spacing (sz, sy, sx). Voxels get
/// +inf when the site set is empty.
std::vector<double> squared_distance_3d(int depth, int height, int width,
                                        std::span<const std::uint8_t> is_site,
                                        std::array<double, 3> spacing);

}  // namespace dfm

#endif  // DFM_DISTANCE_TRANSFORM_HPP_

#ifndef DFM_METRICS_HPP_
#define DFM_METRICS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfm/label_mask.hpp"

namespace dfm {

/// D×H×W label volume, row-major.
struct LabelVolume {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> labels;

  LabelVolume() = default;
  LabelVolume(int d, int h, int w, std::vector<std::int32_t> values);
  /// Stacks equally sized slices along depth.
  static LabelVolume stack(const std::vector<LabelMask>& slices);

  std::size_t size() const { return labels.size(); }
  bool same_shape(const LabelVolume& o) const {
    return depth == o.depth && height == o.height && width == o.width;
  }
};

struct StructureResult {
  std::string structure;
  double dice = 0.0;
  std::optional<double> hausdorff_mm;  // empty when undefined
};

/// 2|A∩B| / (|A|+|B|) for class c; 1 when both sets are empty.
double dice_3d(const LabelVolume& pred, const LabelVolume& gt, int c);

/// Exact symmetric Hausdorff distance in mm between the class-c voxel sets.
/// spacing is (sz, sy, sx). Throws std::domain_error("undefined Hausdorff")
/// when either set is empty.
double hausdorff_3d(const LabelVolume& pred, const LabelVolume& gt, int c,
                    std::array<double, 3> spacing);

/// 95th percentile of the pooled directed surface distances (both
/// directions). Same preconditions as hausdorff_3d.
double hausdorff95_3d(const LabelVolume& pred, const LabelVolume& gt, int c,
                      std::array<double, 3> spacing);

struct StratifiedAccuracy {
  std::vector<int> distances;     // nonempty buckets only, ascending
  std::vector<double> accuracy;   // same length as distances
  std::vector<std::size_t> counts;
};

/// Accumulates correct/total pixel counts per rounded distance-to-boundary.
class StratifiedCounter {
 public:
  explicit StratifiedCounter(int max_distance);

  void add(const LabelMask& pred, const LabelMask& gt);
  StratifiedAccuracy result() const;

 private:
  int max_distance_;
  std::vector<std::size_t> correct_;
  std::vector<std::size_t> total_;
};

/// Per bucket d in 1..max_d: fraction of pixels whose gt distance to the
/// nearest differently labelled pixel rounds to d and whose prediction
/// matches gt. Empty buckets are left out.
StratifiedAccuracy boundary_distance_accuracy(const LabelMask& pred, const LabelMask& gt,
                                              int max_distance);

}  // namespace dfm

#endif  // DFM_METRICS_HPP_

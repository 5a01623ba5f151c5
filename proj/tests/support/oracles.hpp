#ifndef DFM_TESTS_ORACLES_HPP_
#define DFM_TESTS_ORACLES_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dfm/direction_field.hpp"
#include "dfm/label_mask.hpp"
#include "dfm/metrics.hpp"

namespace dfm::oracle {

/// Exhaustive search over all differently labelled pixels; ties go to the
/// smallest (row, col).
DirectionField brute_force_direction_field(const LabelMask& mask);

/// Distance (pixels) from every pixel to the nearest differently labelled
/// pixel by exhaustive search; +inf when none exists.
std::vector<double> brute_force_boundary_distance(const LabelMask& mask);

/// max(h(A,B), h(B,A)) by exhaustive pairwise search.
double brute_force_hausdorff(const LabelVolume& pred, const LabelVolume& gt, int c,
                             std::array<double, 3> spacing);

/// Per-bucket counting with brute_force_boundary_distance.
StratifiedAccuracy brute_force_stratified(const LabelMask& pred, const LabelMask& gt,
                                          int max_distance);

/// Random blobs (ellipses and rectangles) of labels 1..k over background.
LabelMask random_blob_mask(std::mt19937_64& rng, int h, int w, int k);

// Double-precision reference of clamped bilinear sampling and the
// rectification recursion, written independently of the library.
using PlaneStack = std::vector<std::vector<double>>;  // [channel][y*w+x]

PlaneStack ref_bilinear(const PlaneStack& f, int h, int w, const std::vector<double>& xs,
                        const std::vector<double>& ys);
/// `field` holds dx then dy, each h*w.
PlaneStack ref_rectify(const PlaneStack& f0, int h, int w, const std::vector<double>& field,
                       int steps);

/// max |a-b| / max(|a|, |b|, floor)
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                          double floor = 1e-6);

}  // namespace dfm::oracle

#endif  // DFM_TESTS_ORACLES_HPP_

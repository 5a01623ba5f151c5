#ifndef DFM_DIRECTION_FIELD_HPP_
#define DFM_DIRECTION_FIELD_HPP_

#include <vector>

#include "dfm/label_mask.hpp"
#include "dfm/tensor.hpp"

namespace dfm {

/// 2×H×W vector field. Channel 0 is the x (column) component, channel 1 the
/// y (row) component.
///
/// Ground-truth fields hold unit vectors on foreground and (0, 0) on
/// background; predicted fields are raw network outputs with the same layout.
class DirectionField {
 public:
  DirectionField() = default;
  DirectionField(int height, int width) : values_({2, height, width}) {}
  explicit DirectionField(Tensor values);

  int height() const { return values_.dim(1); }
  int width() const { return values_.dim(2); }

  float x(int y, int x) const { return values_.at(0, y, x); }
  float y(int y, int x) const { return values_.at(1, y, x); }
  void set(int y, int x, float vx, float vy) {
    values_.at(0, y, x) = vx;
    values_.at(1, y, x) = vy;
  }

  const Tensor& tensor() const { return values_; }
  Tensor& tensor() { return values_; }

 private:
  Tensor values_;
};

/// Per-class boundary sets. sets[c] holds B_c = {q : label(q) != c} for every
/// foreground class c present in the mask; absent classes (and index 0) get
/// an all-false map.
struct BoundarySets {
  std::vector<BoolMap> sets;  // indexed 0..K
};

BoundarySets compute_boundary(const LabelMask& mask);

/// Ground-truth direction field: for every foreground pixel p of class c, the
/// unit vector from the nearest pixel b with label != c to p. Ties between
/// equidistant b go to the smallest (row, col).
///
/// Throws std::domain_error("no boundary for class c") when class c covers the
/// whole image.
DirectionField compute_direction_field(const LabelMask& mask);

/// Euclidean distance (pixels) from every pixel to the nearest pixel with a
/// different label; +inf where the whole image carries one label.
std::vector<double> distance_to_boundary(const LabelMask& mask);

struct PolarField {
  int height = 0;
  int width = 0;
  std::vector<float> angle;      // atan2(y, x) in [-pi, pi], 0 where magnitude is 0
  std::vector<float> magnitude;  // Euclidean norm
};

PolarField field_to_polar(const DirectionField& df);

}  // namespace dfm

#endif  // DFM_DIRECTION_FIELD_HPP_

#ifndef DFM_LABEL_MASK_HPP_
#define DFM_LABEL_MASK_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dfm {

/// H×W boolean map, row-major.
struct BoolMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BoolMap() = default;
  BoolMap(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  bool at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

/// 2D class map: 0 is background, 1..K are foreground structures.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(int height, int width, int num_classes);
  LabelMask(int height, int width, int num_classes, std::vector<std::int32_t> labels);

  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return labels_.size(); }

  std::int32_t at(int y, int x) const {
    return labels_[static_cast<std::size_t>(y) * width_ + x];
  }
  void set(int y, int x, std::int32_t label);

  std::span<const std::int32_t> labels() const { return labels_; }

  /// Pixel count per label value, indexed 0..K.
  std::vector<std::size_t> class_counts() const;
  /// Foreground classes with at least one pixel, ascending.
  std::vector<int> present_foreground() const;

  bool operator==(const LabelMask& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_classes_ = 1;
  std::vector<std::int32_t> labels_;
};

}  // namespace dfm

#endif  // DFM_LABEL_MASK_HPP_

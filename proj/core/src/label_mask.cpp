#include "dfm/label_mask.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dfm {

std::size_t BoolMap::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

LabelMask::LabelMask(int height, int width, int num_classes)
    : LabelMask(height, width, num_classes,
                std::vector<std::int32_t>(static_cast<std::size_t>(std::max(height, 0)) *
                                              std::max(width, 0),
                                          0)) {}

LabelMask::LabelMask(int height, int width, int num_classes,
                     std::vector<std::int32_t> labels)
    : height_(height), width_(width), num_classes_(num_classes), labels_(std::move(labels)) {
  if (height_ < 1 || width_ < 1) {
    throw std::invalid_argument("label mask must be at least 1x1");
  }
  if (num_classes_ < 1) {
    throw std::invalid_argument("label mask needs at least one foreground class");
  }
  if (labels_.size() != static_cast<std::size_t>(height_) * width_) {
    throw std::invalid_argument("label count does not match mask shape");
  }
  for (std::int32_t v : labels_) {
    if (v < 0 || v > num_classes_) {
      throw std::invalid_argument("label value " + std::to_string(v) + " outside [0, " +
                                  std::to_string(num_classes_) + "]");
    }
  }
}

void LabelMask::set(int y, int x, std::int32_t label) {
  if (label < 0 || label > num_classes_) {
    throw std::invalid_argument("label value outside class range");
  }
  labels_[static_cast<std::size_t>(y) * width_ + x] = label;
}

std::vector<std::size_t> LabelMask::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_) + 1, 0);
  for (std::int32_t v : labels_) ++counts[static_cast<std::size_t>(v)];
  return counts;
}

std::vector<int> LabelMask::present_foreground() const {
  const auto counts = class_counts();
  std::vector<int> present;
  for (int c = 1; c <= num_classes_; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) present.push_back(c);
  }
  return present;
}

}  // namespace dfm

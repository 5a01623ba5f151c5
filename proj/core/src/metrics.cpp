#include "dfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dfm/direction_field.hpp"
#include "dfm/distance_transform.hpp"

namespace dfm {
namespace {

void check_shapes(const LabelVolume& a, const LabelVolume& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("prediction and ground truth shapes differ");
}

std::vector<std::uint8_t> binarize(const LabelVolume& v, int c) {
  std::vector<std::uint8_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v.labels[i] == c;
  return out;
}

// Directed distances from every voxel of `from` to the set `to`.
std::vector<double> directed(const LabelVolume& shape, const std::vector<std::uint8_t>& from,
                             const std::vector<std::uint8_t>& to,
                             const std::array<double, 3>& spacing) {
  const auto sq = squared_distance_3d(shape.depth, shape.height, shape.width, to, spacing);
  std::vector<double> out;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]) out.push_back(std::sqrt(sq[i]));
  }
  return out;
}

void check_spacing(const std::array<double, 3>& spacing) {
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("spacing must be positive");
  }
}

}  // namespace

LabelVolume::LabelVolume(int d, int h, int w, std::vector<std::int32_t> values)
    : depth(d), height(h), width(w), labels(std::move(values)) {
  if (d < 1 || h < 1 || w < 1) throw std::invalid_argument("volume dimensions must be positive");
  if (labels.size() != static_cast<std::size_t>(d) * h * w) {
    throw std::invalid_argument("label count does not match volume shape");
  }
}

LabelVolume LabelVolume::stack(const std::vector<LabelMask>& slices) {
  if (slices.empty()) throw std::invalid_argument("cannot stack zero slices");
  const int h = slices.front().height();
  const int w = slices.front().width();
  std::vector<std::int32_t> values;
  values.reserve(slices.size() * static_cast<std::size_t>(h) * w);
  for (const auto& s : slices) {
    if (s.height() != h || s.width() != w) throw std::invalid_argument("slice shapes differ");
    values.insert(values.end(), s.labels().begin(), s.labels().end());
  }
  return LabelVolume(static_cast<int>(slices.size()), h, w, std::move(values));
}

double dice_3d(const LabelVolume& pred, const LabelVolume& gt, int c) {
  check_shapes(pred, gt);
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool in_a = pred.labels[i] == c;
    const bool in_b = gt.labels[i] == c;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double hausdorff_3d(const LabelVolume& pred, const LabelVolume& gt, int c,
                    std::array<double, 3> spacing) {
  check_shapes(pred, gt);
  check_spacing(spacing);
  const auto a = binarize(pred, c);
  const auto b = binarize(gt, c);
  if (std::find(a.begin(), a.end(), 1) == a.end() || std::find(b.begin(), b.end(), 1) == b.end()) {
    throw std::domain_error("undefined Hausdorff");
  }
  double h = 0.0;
  for (double d : directed(pred, a, b, spacing)) h = std::max(h, d);
  for (double d : directed(pred, b, a, spacing)) h = std::max(h, d);
  return h;
}

double hausdorff95_3d(const LabelVolume& pred, const LabelVolume& gt, int c,
                      std::array<double, 3> spacing) {
  check_shapes(pred, gt);
  check_spacing(spacing);
  const auto a = binarize(pred, c);
  const auto b = binarize(gt, c);
  if (std::find(a.begin(), a.end(), 1) == a.end() || std::find(b.begin(), b.end(), 1) == b.end()) {
    throw std::domain_error("undefined Hausdorff");
  }
  auto all = directed(pred, a, b, spacing);
  const auto back = directed(pred, b, a, spacing);
  all.insert(all.end(), back.begin(), back.end());
  std::sort(all.begin(), all.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(all.size())));
  return all[std::max<std::size_t>(rank, 1) - 1];
}

StratifiedCounter::StratifiedCounter(int max_distance)
    : max_distance_(max_distance),
      correct_(static_cast<std::size_t>(std::max(max_distance, 0)) + 1, 0),
      total_(static_cast<std::size_t>(std::max(max_distance, 0)) + 1, 0) {
  if (max_distance < 1) throw std::invalid_argument("max distance must be at least 1");
}

void StratifiedCounter::add(const LabelMask& pred, const LabelMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw std::invalid_argument("prediction and ground truth shapes differ");
  }
  const auto dist = distance_to_boundary(gt);
  const auto p = pred.labels();
  const auto g = gt.labels();
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (!std::isfinite(dist[i])) continue;
    const long bucket = std::lround(dist[i]);
    if (bucket < 1 || bucket > max_distance_) continue;
    ++total_[static_cast<std::size_t>(bucket)];
    if (p[i] == g[i]) ++correct_[static_cast<std::size_t>(bucket)];
  }
}

StratifiedAccuracy StratifiedCounter::result() const {
  StratifiedAccuracy out;
  for (int d = 1; d <= max_distance_; ++d) {
    const auto n = total_[static_cast<std::size_t>(d)];
    if (n == 0) continue;
    out.distances.push_back(d);
    out.accuracy.push_back(static_cast<double>(correct_[static_cast<std::size_t>(d)]) /
                           static_cast<double>(n));
    out.counts.push_back(n);
  }
  return out;
}

StratifiedAccuracy boundary_distance_accuracy(const LabelMask& pred, const LabelMask& gt,
                                              int max_distance) {
  StratifiedCounter counter(max_distance);
  counter.add(pred, gt);
  return counter.result();
}

}  // namespace dfm

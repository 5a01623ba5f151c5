#include "dfm/direction_field.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dfm/distance_transform.hpp"

namespace dfm {

DirectionField::DirectionField(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 3 || values_.dim(0) != 2) {
    throw std::invalid_argument("direction field must be 2xHxW, got " +
                                values_.shape_string());
  }
}

namespace {

std::vector<std::uint8_t> sites_not_equal(const LabelMask& mask, int label) {
  const auto labels = mask.labels();
  std::vector<std::uint8_t> sites(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) sites[i] = labels[i] != label ? 1 : 0;
  return sites;
}

}  // namespace

BoundarySets compute_boundary(const LabelMask& mask) {
  BoundarySets out;
  out.sets.assign(static_cast<std::size_t>(mask.num_classes()) + 1,
                  BoolMap(mask.height(), mask.width()));
  for (int c : mask.present_foreground()) {
    out.sets[static_cast<std::size_t>(c)].data = sites_not_equal(mask, c);
  }
  return out;
}

DirectionField compute_direction_field(const LabelMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  DirectionField df(h, w);
  const auto labels = mask.labels();
  for (int c : mask.present_foreground()) {
    const auto sites = sites_not_equal(mask, c);
    const NearestSiteMap nearest = nearest_site_transform(h, w, sites);
    if (nearest.site[0] < 0) {
      throw std::domain_error("no boundary for class " + std::to_string(c));
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (labels[i] != c) continue;
        const int b = nearest.site[i];
        const double dx = static_cast<double>(x - b % w);
        const double dy = static_cast<double>(y - b / w);
        const double norm = std::sqrt(dx * dx + dy * dy);
        df.set(y, x, static_cast<float>(dx / norm), static_cast<float>(dy / norm));
      }
    }
  }
  return df;
}

std::vector<double> distance_to_boundary(const LabelMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  const auto labels = mask.labels();
  const auto counts = mask.class_counts();
  std::vector<double> dist(labels.size(), std::numeric_limits<double>::infinity());
  for (int c = 0; c <= mask.num_classes(); ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) continue;
    const NearestSiteMap nearest = nearest_site_transform(h, w, sites_not_equal(mask, c));
    if (nearest.site[0] < 0) continue;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) dist[i] = std::sqrt(static_cast<double>(nearest.squared_distance[i]));
    }
  }
  return dist;
}

PolarField field_to_polar(const DirectionField& df) {
  PolarField out;
  out.height = df.height();
  out.width = df.width();
  const std::size_t n = static_cast<std::size_t>(out.height) * out.width;
  out.angle.assign(n, 0.0f);
  out.magnitude.assign(n, 0.0f);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * out.width + x;
      const double vx = df.x(y, x);
      const double vy = df.y(y, x);
      const double mag = std::hypot(vx, vy);
      out.magnitude[i] = static_cast<float>(mag);
      if (mag > 0.0) out.angle[i] = static_cast<float>(std::atan2(vy, vx));
    }
  }
  return out;
}

}  // namespace dfm

#include "dfm/frf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace dfm {
namespace {

// Precomputed bilinear taps for one output pixel.
struct Tap {
  std::int32_t i00, i01, i10, i11;  // flat spatial indices
  float wx, wy;
  bool x_free, y_free;  // false when the coordinate was clamped
};

void check_map(const FeatureMap& f, const char* what) {
  if (f.rank() != 3) {
    throw std::invalid_argument(std::string(what) + " must be CxHxW, got " + f.shape_string());
  }
}

std::vector<Tap> plan_taps(int h, int w, const float* xs, const float* ys) {
  std::vector<Tap> taps(static_cast<std::size_t>(h) * w);
  const float xmax = static_cast<float>(w - 1);
  const float ymax = static_cast<float>(h - 1);
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const float x = xs[i];
    const float y = ys[i];
    const float xc = std::clamp(x, 0.0f, xmax);
    const float yc = std::clamp(y, 0.0f, ymax);
    const int x0 = static_cast<int>(std::floor(xc));
    const int y0 = static_cast<int>(std::floor(yc));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    Tap& t = taps[i];
    t.i00 = y0 * w + x0;
    t.i01 = y0 * w + x1;
    t.i10 = y1 * w + x0;
    t.i11 = y1 * w + x1;
    t.wx = xc - static_cast<float>(x0);
    t.wy = yc - static_cast<float>(y0);
    t.x_free = x >= 0.0f && x <= xmax;
    t.y_free = y >= 0.0f && y <= ymax;
  }
  return taps;
}

void sample_forward(const float* in, float* out, int channels, std::size_t plane,
                    const std::vector<Tap>& taps) {
  for (int c = 0; c < channels; ++c) {
    const float* src = in + c * plane;
    float* dst = out + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const Tap& t = taps[i];
      const float top = (1.0f - t.wx) * src[t.i00] + t.wx * src[t.i01];
      const float bot = (1.0f - t.wx) * src[t.i10] + t.wx * src[t.i11];
      dst[i] = (1.0f - t.wy) * top + t.wy * bot;
    }
  }
}

// Accumulates d(out)/d(in)^T * g into grad_in and the coordinate gradient
// into grad_x / grad_y.
void sample_backward(const float* in, const float* g, float* grad_in, float* grad_x,
                     float* grad_y, int channels, std::size_t plane,
                     const std::vector<Tap>& taps) {
  for (int c = 0; c < channels; ++c) {
    const float* src = in + c * plane;
    const float* gc = g + c * plane;
    float* gi = grad_in + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const Tap& t = taps[i];
      const float go = gc[i];
      if (go == 0.0f) continue;
      gi[t.i00] += go * (1.0f - t.wx) * (1.0f - t.wy);
      gi[t.i01] += go * t.wx * (1.0f - t.wy);
      gi[t.i10] += go * (1.0f - t.wx) * t.wy;
      gi[t.i11] += go * t.wx * t.wy;
      if (t.x_free) {
        grad_x[i] += go * ((1.0f - t.wy) * (src[t.i01] - src[t.i00]) +
                           t.wy * (src[t.i11] - src[t.i10]));
      }
      if (t.y_free) {
        grad_y[i] += go * ((1.0f - t.wx) * (src[t.i10] - src[t.i00]) +
                           t.wx * (src[t.i11] - src[t.i01]));
      }
    }
  }
}

Tensor displaced_grid(const DirectionField& df) {
  const int h = df.height();
  const int w = df.width();
  Tensor coords({2, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      coords.at(0, y, x) = static_cast<float>(x) + df.x(y, x);
      coords.at(1, y, x) = static_cast<float>(y) + df.y(y, x);
    }
  }
  return coords;
}

void check_pair(const FeatureMap& f, const DirectionField& df) {
  check_map(f, "feature map");
  if (f.dim(1) != df.height() || f.dim(2) != df.width()) {
    throw std::invalid_argument("feature map " + f.shape_string() +
                                " does not match direction field " +
                                df.tensor().shape_string());
  }
}

}  // namespace

FeatureMap bilinear_sample(const FeatureMap& features, const Tensor& coords) {
  check_map(features, "feature map");
  if (coords.rank() != 3 || coords.dim(0) != 2 || coords.dim(1) != features.dim(1) ||
      coords.dim(2) != features.dim(2)) {
    throw std::invalid_argument("sample coordinates " + coords.shape_string() +
                                " do not match features " + features.shape_string());
  }
  const int h = features.dim(1), w = features.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const auto taps = plan_taps(h, w, coords.data(), coords.data() + plane);
  FeatureMap out(features.shape());
  sample_forward(features.data(), out.data(), features.dim(0), plane, taps);
  return out;
}

BilinearSampleGrad bilinear_sample_backward(const FeatureMap& features, const Tensor& coords,
                                            const FeatureMap& grad_output) {
  if (!grad_output.same_shape(features)) {
    throw std::invalid_argument("gradient shape does not match features");
  }
  const int h = features.dim(1), w = features.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const auto taps = plan_taps(h, w, coords.data(), coords.data() + plane);
  BilinearSampleGrad grad{FeatureMap(features.shape()), Tensor({2, h, w})};
  sample_backward(features.data(), grad_output.data(), grad.features.data(),
                  grad.coords.data(), grad.coords.data() + plane, features.dim(0), plane,
                  taps);
  return grad;
}

FeatureMap frf_step(const FeatureMap& prev, const DirectionField& df) {
  check_pair(prev, df);
  return bilinear_sample(prev, displaced_grid(df));
}

FeatureMap frf_rectify(const FeatureMap& f0, const DirectionField& df, const FrfConfig& cfg) {
  if (cfg.steps < 0) throw std::invalid_argument("frf steps must be >= 0");
  check_pair(f0, df);
  if (cfg.steps == 0) return f0;
  const int h = df.height(), w = df.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const Tensor coords = displaced_grid(df);
  const auto taps = plan_taps(h, w, coords.data(), coords.data() + plane);
  FeatureMap cur = f0;
  FeatureMap next(f0.shape());
  for (int k = 0; k < cfg.steps; ++k) {
    sample_forward(cur.data(), next.data(), f0.dim(0), plane, taps);
    std::swap(cur, next);
  }
  return cur;
}

FrfGrad frf_rectify_backward(const FeatureMap& f0, const DirectionField& df,
                             const FrfConfig& cfg, const FeatureMap& grad_output) {
  if (cfg.steps < 0) throw std::invalid_argument("frf steps must be >= 0");
  check_pair(f0, df);
  if (!grad_output.same_shape(f0)) {
    throw std::invalid_argument("gradient shape does not match features");
  }
  const int channels = f0.dim(0), h = df.height(), w = df.width();
  FrfGrad grad{grad_output, Tensor({2, h, w})};
  if (cfg.steps == 0) return grad;

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const Tensor coords = displaced_grid(df);
  const auto taps = plan_taps(h, w, coords.data(), coords.data() + plane);

  // Forward replay: states[k] = F^k for k < steps.
  std::vector<FeatureMap> states;
  states.reserve(static_cast<std::size_t>(cfg.steps));
  states.push_back(f0);
  for (int k = 1; k < cfg.steps; ++k) {
    FeatureMap next(f0.shape());
    sample_forward(states.back().data(), next.data(), channels, plane, taps);
    states.push_back(std::move(next));
  }

  FeatureMap upstream = grad_output;
  FeatureMap downstream(f0.shape());
  for (int k = cfg.steps; k >= 1; --k) {
    downstream.fill(0.0f);
    sample_backward(states[static_cast<std::size_t>(k - 1)].data(), upstream.data(),
                    downstream.data(), grad.field.data(), grad.field.data() + plane, channels,
                    plane, taps);
    std::swap(upstream, downstream);
  }
  grad.features = std::move(upstream);
  return grad;
}

FeatureMap frf_fuse(const FeatureMap& f0, const FeatureMap& fN) {
  check_map(f0, "feature map");
  if (!f0.same_shape(fN)) {
    throw std::invalid_argument("cannot fuse " + fN.shape_string() + " with " +
                                f0.shape_string());
  }
  FeatureMap out({2 * f0.dim(0), f0.dim(1), f0.dim(2)});
  std::memcpy(out.data(), fN.data(), fN.size() * sizeof(float));
  std::memcpy(out.data() + fN.size(), f0.data(), f0.size() * sizeof(float));
  return out;
}

}  // namespace dfm

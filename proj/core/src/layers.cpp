#include "dfm/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace dfm {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void check_nchw(const Tensor& x, int channels, const char* layer) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw std::invalid_argument(std::string(layer) + ": expected Nx" + std::to_string(channels) +
                                "xHxW input, got " + x.shape_string());
  }
}

// col[(c*k + ky)*k + kx][n*HW + y*W + x] = x[n][c][y + ky - pad][x + kx - pad]
void im2col(const Tensor& x, int kernel, std::vector<float>& col) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int pad = kernel / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t cols = static_cast<std::size_t>(n) * hw;
  col.resize(static_cast<std::size_t>(c) * kernel * kernel * cols);
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        float* row = col.data() + ((static_cast<std::size_t>(ci) * kernel + ky) * kernel + kx) * cols;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
        for (int b = 0; b < n; ++b) {
          const float* src = x.data() + (static_cast<std::size_t>(b) * c + ci) * hw;
          float* dst = row + static_cast<std::size_t>(b) * hw;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - pad;
            float* d = dst + static_cast<std::size_t>(y) * w;
            if (sy < 0 || sy >= h || x_hi <= x_lo) {
              std::fill(d, d + w, 0.0f);
              continue;
            }
            const float* s = src + static_cast<std::size_t>(sy) * w + dx;
            std::fill(d, d + x_lo, 0.0f);
            std::memcpy(d + x_lo, s + x_lo, sizeof(float) * (x_hi - x_lo));
            std::fill(d + x_hi, d + w, 0.0f);
          }
        }
      }
    }
  }
}

void col2im(const std::vector<float>& col, int kernel, Tensor& grad_in) {
  const int n = grad_in.dim(0), c = grad_in.dim(1), h = grad_in.dim(2), w = grad_in.dim(3);
  const int pad = kernel / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t cols = static_cast<std::size_t>(n) * hw;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const float* row =
            col.data() + ((static_cast<std::size_t>(ci) * kernel + ky) * kernel + kx) * cols;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
        for (int b = 0; b < n; ++b) {
          float* dst = grad_in.data() + (static_cast<std::size_t>(b) * c + ci) * hw;
          const float* src = row + static_cast<std::size_t>(b) * hw;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            float* d = dst + static_cast<std::size_t>(sy) * w + dx;
            const float* s = src + static_cast<std::size_t>(y) * w;
            for (int xx = x_lo; xx < x_hi; ++xx) d[xx] += s[xx];
          }
        }
      }
    }
  }
}

// [C, N*HW] <-> N×C×H×W
void to_channel_major(const Tensor& x, std::vector<float>& out) {
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  out.resize(x.size());
  for (int b = 0; b < n; ++b) {
    for (int ci = 0; ci < c; ++ci) {
      std::memcpy(out.data() + (static_cast<std::size_t>(ci) * n + b) * hw,
                  x.data() + (static_cast<std::size_t>(b) * c + ci) * hw, hw * sizeof(float));
    }
  }
}

void from_channel_major(const float* src, Tensor& x) {
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  for (int b = 0; b < n; ++b) {
    for (int ci = 0; ci < c; ++ci) {
      std::memcpy(x.data() + (static_cast<std::size_t>(b) * c + ci) * hw,
                  src + (static_cast<std::size_t>(ci) * n + b) * hw, hw * sizeof(float));
    }
  }
}

Tensor conv_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, int in, int out,
                    int kernel) {
  check_nchw(x, in, "conv2d");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const Eigen::Index cols = static_cast<Eigen::Index>(n) * h * w;
  const Eigen::Index k = static_cast<Eigen::Index>(in) * kernel * kernel;
  std::vector<float> col;
  if (kernel == 1) {
    to_channel_major(x, col);
  } else {
    im2col(x, kernel, col);
  }
  std::vector<float> result(static_cast<std::size_t>(out) * cols);
  MatrixMap res(result.data(), out, cols);
  res.noalias() = ConstMatrixMap(weight.data(), out, k) * ConstMatrixMap(col.data(), k, cols);
  if (bias) {
    for (int o = 0; o < out; ++o) res.row(o).array() += (*bias)[static_cast<std::size_t>(o)];
  }
  Tensor y({n, out, h, w});
  from_channel_major(result.data(), y);
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, bool bias)
    : in_(in_channels), out_(out_channels), kernel_(kernel), has_bias_(bias) {
  if (in_ < 1 || out_ < 1) throw std::invalid_argument("conv2d channels must be >= 1");
  if (kernel_ != 1 && kernel_ != 3) throw std::invalid_argument("conv2d kernel must be 1 or 3");
  weight_ = Parameter{name + ".weight", Tensor({out_, in_, kernel_, kernel_}),
                      Tensor({out_, in_, kernel_, kernel_})};
  if (has_bias_) bias_ = Parameter{name + ".bias", Tensor({out_}), Tensor({out_})};
}

void Conv2d::init_he(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in_) * kernel_ * kernel_;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (float& v : weight_.value.values()) v = static_cast<float>(dist(rng));
  if (has_bias_) bias_.value.fill(0.0f);
}

Tensor Conv2d::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Conv2d::infer(const Tensor& x) const {
  return conv_forward(x, weight_.value, has_bias_ ? &bias_.value : nullptr, in_, out_, kernel_);
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const int n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  if (grad_out.rank() != 4 || grad_out.dim(0) != n || grad_out.dim(1) != out_ ||
      grad_out.dim(2) != h || grad_out.dim(3) != w) {
    throw std::invalid_argument("conv2d: gradient shape mismatch");
  }
  const Eigen::Index cols = static_cast<Eigen::Index>(n) * h * w;
  const Eigen::Index k = static_cast<Eigen::Index>(in_) * kernel_ * kernel_;

  std::vector<float> g;
  to_channel_major(grad_out, g);
  ConstMatrixMap gm(g.data(), out_, cols);

  std::vector<float> col;
  if (kernel_ == 1) {
    to_channel_major(input_, col);
  } else {
    im2col(input_, kernel_, col);
  }
  MatrixMap(weight_.grad.data(), out_, k).noalias() +=
      gm * ConstMatrixMap(col.data(), k, cols).transpose();
  if (has_bias_) {
    // Plain loop: Eigen's vectorised sum depends on buffer alignment.
    for (int o = 0; o < out_; ++o) {
      double sum = 0.0;
      for (const float* p = g.data() + o * cols; p != g.data() + (o + 1) * cols; ++p) sum += *p;
      bias_.grad[static_cast<std::size_t>(o)] += static_cast<float>(sum);
    }
  }

  std::vector<float> dcol(static_cast<std::size_t>(k) * cols);
  MatrixMap(dcol.data(), k, cols).noalias() =
      ConstMatrixMap(weight_.value.data(), out_, k).transpose() * gm;
  Tensor grad_in(input_.shape());
  if (kernel_ == 1) {
    from_channel_major(dcol.data(), grad_in);
  } else {
    col2im(dcol, kernel_, grad_in);
  }
  return grad_in;
}

void Conv2d::collect(std::vector<Parameter*>& params) {
  params.push_back(&weight_);
  if (has_bias_) params.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = Parameter{name + ".gamma", Tensor({channels}, 1.0f), Tensor({channels})};
  beta_ = Parameter{name + ".beta", Tensor({channels}), Tensor({channels})};
  running_mean_ = Buffer{name + ".running_mean", Tensor({channels})};
  running_var_ = Buffer{name + ".running_var", Tensor({channels}, 1.0f)};
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  check_nchw(x, channels_, "batchnorm");
  const int n = x.dim(0);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const double m = static_cast<double>(n) * hw;
  Tensor y(x.shape());
  xhat_ = Tensor(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0f);
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int b = 0; b < n; ++b) {
      const float* p = x.data() + (static_cast<std::size_t>(b) * channels_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) sum += p[i];
    }
    const double mean = sum / m;
    for (int b = 0; b < n; ++b) {
      const float* p = x.data() + (static_cast<std::size_t>(b) * channels_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / m;
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
    inv_std_[static_cast<std::size_t>(c)] = inv_std;
    const float g = gamma_.value[static_cast<std::size_t>(c)];
    const float bt = beta_.value[static_cast<std::size_t>(c)];
    const float meanf = static_cast<float>(mean);
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const float xh = (x[off + i] - meanf) * inv_std;
        xhat_[off + i] = xh;
        y[off + i] = g * xh + bt;
      }
    }
    const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
    running_mean_.value[static_cast<std::size_t>(c)] = static_cast<float>(
        (1.0 - momentum_) * running_mean_.value[static_cast<std::size_t>(c)] + momentum_ * mean);
    running_var_.value[static_cast<std::size_t>(c)] = static_cast<float>(
        (1.0 - momentum_) * running_var_.value[static_cast<std::size_t>(c)] +
        momentum_ * unbiased);
  }
  return y;
}

Tensor BatchNorm2d::infer(const Tensor& x) const {
  check_nchw(x, channels_, "batchnorm");
  const int n = x.dim(0);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor y(x.shape());
  for (int c = 0; c < channels_; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const float scale = gamma_.value[ci] / std::sqrt(running_var_.value[ci] + eps_);
    const float shift = beta_.value[ci] - running_mean_.value[ci] * scale;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  if (!grad_out.same_shape(xhat_)) throw std::invalid_argument("batchnorm: gradient shape");
  const int n = grad_out.dim(0);
  const std::size_t hw = static_cast<std::size_t>(grad_out.dim(2)) * grad_out.dim(3);
  const double m = static_cast<double>(n) * hw;
  Tensor grad_in(grad_out.shape());
  for (int c = 0; c < channels_; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double sum_g = 0.0, sum_gx = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += static_cast<double>(grad_out[off + i]) * xhat_[off + i];
      }
    }
    gamma_.grad[ci] += static_cast<float>(sum_gx);
    beta_.grad[ci] += static_cast<float>(sum_g);
    const double k = gamma_.value[ci] * inv_std_[ci] / m;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        grad_in[off + i] =
            static_cast<float>(k * (m * grad_out[off + i] - sum_g - xhat_[off + i] * sum_gx));
      }
    }
  }
  return grad_in;
}

void BatchNorm2d::collect(std::vector<Parameter*>& params) {
  params.push_back(&gamma_);
  params.push_back(&beta_);
}

void BatchNorm2d::collect(std::vector<Buffer*>& buffers) {
  buffers.push_back(&running_mean_);
  buffers.push_back(&running_var_);
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x) {
  output_ = infer(x);
  return output_;
}

Tensor ReLU::infer(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.values()) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) const {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output_[i] > 0.0f)) g[i] = 0.0f;
  }
  return g;
}

// ---------------------------------------------------------------------------
// MaxPool2x2

namespace {

Tensor maxpool_impl(const Tensor& x, std::vector<std::int32_t>* argmax) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw std::invalid_argument("maxpool: spatial dims must be even, got " + x.shape_string());
  }
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  Tensor y({n, c, oh, ow});
  if (argmax) argmax->assign(y.size(), 0);
  for (int p = 0; p < n * c; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const int base = (2 * oy) * w + 2 * ox;
        int best = base;
        for (const int cand : {base + 1, base + w, base + w + 1}) {
          if (src[cand] > src[best]) best = cand;
        }
        const std::size_t oi = (static_cast<std::size_t>(p) * oh + oy) * ow + ox;
        y[oi] = src[best];
        if (argmax) (*argmax)[oi] = best;
      }
    }
  }
  return y;
}

}  // namespace

Tensor MaxPool2x2::forward(const Tensor& x) {
  in_shape_ = x.shape();
  return maxpool_impl(x, &argmax_);
}

Tensor MaxPool2x2::infer(const Tensor& x) { return maxpool_impl(x, nullptr); }

Tensor MaxPool2x2::backward(const Tensor& grad_out) const {
  Tensor g(in_shape_);
  const std::size_t in_plane = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
  const std::size_t out_plane = in_plane / 4;
  for (std::size_t oi = 0; oi < grad_out.size(); ++oi) {
    const std::size_t p = oi / out_plane;
    g[p * in_plane + static_cast<std::size_t>(argmax_[oi])] += grad_out[oi];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Upsampling and concatenation

namespace {

struct Lerp {
  int i0, i1;
  float t;
};

std::vector<Lerp> upsample_axis(int in) {
  std::vector<Lerp> taps(static_cast<std::size_t>(in) * 2);
  for (int o = 0; o < 2 * in; ++o) {
    const float src = std::max(0.0f, (static_cast<float>(o) + 0.5f) * 0.5f - 0.5f);
    const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = Lerp{i0, i1, src - static_cast<float>(i0)};
  }
  return taps;
}

}  // namespace

Tensor upsample2x(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("upsample: expected NCHW input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ty = upsample_axis(h);
  const auto tx = upsample_axis(w);
  Tensor y({n, c, 2 * h, 2 * w});
  for (int p = 0; p < n * c; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * h * w;
    float* dst = y.data() + static_cast<std::size_t>(p) * 4 * h * w;
    for (int oy = 0; oy < 2 * h; ++oy) {
      const Lerp& ly = ty[static_cast<std::size_t>(oy)];
      const float* r0 = src + static_cast<std::size_t>(ly.i0) * w;
      const float* r1 = src + static_cast<std::size_t>(ly.i1) * w;
      for (int ox = 0; ox < 2 * w; ++ox) {
        const Lerp& lx = tx[static_cast<std::size_t>(ox)];
        const float top = (1.0f - lx.t) * r0[lx.i0] + lx.t * r0[lx.i1];
        const float bot = (1.0f - lx.t) * r1[lx.i0] + lx.t * r1[lx.i1];
        dst[static_cast<std::size_t>(oy) * 2 * w + ox] = (1.0f - ly.t) * top + ly.t * bot;
      }
    }
  }
  return y;
}

Tensor upsample2x_backward(const Tensor& grad_out, const std::vector<int>& in_shape) {
  const int n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
  const auto ty = upsample_axis(h);
  const auto tx = upsample_axis(w);
  Tensor g(in_shape);
  for (int p = 0; p < n * c; ++p) {
    const float* src = grad_out.data() + static_cast<std::size_t>(p) * 4 * h * w;
    float* dst = g.data() + static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < 2 * h; ++oy) {
      const Lerp& ly = ty[static_cast<std::size_t>(oy)];
      float* r0 = dst + static_cast<std::size_t>(ly.i0) * w;
      float* r1 = dst + static_cast<std::size_t>(ly.i1) * w;
      for (int ox = 0; ox < 2 * w; ++ox) {
        const Lerp& lx = tx[static_cast<std::size_t>(ox)];
        const float go = src[static_cast<std::size_t>(oy) * 2 * w + ox];
        r0[lx.i0] += go * (1.0f - ly.t) * (1.0f - lx.t);
        r0[lx.i1] += go * (1.0f - ly.t) * lx.t;
        r1[lx.i0] += go * ly.t * (1.0f - lx.t);
        r1[lx.i1] += go * ly.t * lx.t;
      }
    }
  }
  return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw std::invalid_argument("concat: incompatible shapes " + a.shape_string() + " and " +
                                b.shape_string());
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  Tensor y({n, ca + cb, a.dim(2), a.dim(3)});
  for (int i = 0; i < n; ++i) {
    float* dst = y.data() + static_cast<std::size_t>(i) * (ca + cb) * hw;
    std::memcpy(dst, a.data() + static_cast<std::size_t>(i) * ca * hw, ca * hw * sizeof(float));
    std::memcpy(dst + ca * hw, b.data() + static_cast<std::size_t>(i) * cb * hw,
                cb * hw * sizeof(float));
  }
  return y;
}

void split_channels(const Tensor& g, int channels_a, Tensor& grad_a, Tensor& grad_b) {
  const int n = g.dim(0), c = g.dim(1), h = g.dim(2), w = g.dim(3);
  const int cb = c - channels_a;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  grad_a = Tensor({n, channels_a, h, w});
  grad_b = Tensor({n, cb, h, w});
  for (int i = 0; i < n; ++i) {
    const float* src = g.data() + static_cast<std::size_t>(i) * c * hw;
    std::memcpy(grad_a.data() + static_cast<std::size_t>(i) * channels_a * hw, src,
                channels_a * hw * sizeof(float));
    std::memcpy(grad_b.data() + static_cast<std::size_t>(i) * cb * hw, src + channels_a * hw,
                cb * hw * sizeof(float));
  }
}

// ---------------------------------------------------------------------------
// DoubleConv

DoubleConv::DoubleConv(const std::string& name, int in_channels, int out_channels)
    : conv1_(name + ".conv1", in_channels, out_channels, 3, false),
      conv2_(name + ".conv2", out_channels, out_channels, 3, false),
      bn1_(name + ".bn1", out_channels),
      bn2_(name + ".bn2", out_channels) {}

void DoubleConv::init_he(std::mt19937_64& rng) {
  conv1_.init_he(rng);
  conv2_.init_he(rng);
}

Tensor DoubleConv::forward(const Tensor& x) {
  return relu2_.forward(bn2_.forward(conv2_.forward(relu1_.forward(bn1_.forward(conv1_.forward(x))))));
}

Tensor DoubleConv::infer(const Tensor& x) const {
  return ReLU::infer(bn2_.infer(conv2_.infer(ReLU::infer(bn1_.infer(conv1_.infer(x))))));
}

Tensor DoubleConv::backward(const Tensor& grad_out) {
  return conv1_.backward(bn1_.backward(relu1_.backward(
      conv2_.backward(bn2_.backward(relu2_.backward(grad_out))))));
}

void DoubleConv::collect(std::vector<Parameter*>& params) {
  conv1_.collect(params);
  bn1_.collect(params);
  conv2_.collect(params);
  bn2_.collect(params);
}

void DoubleConv::collect(std::vector<Buffer*>& buffers) {
  bn1_.collect(buffers);
  bn2_.collect(buffers);
}

}  // namespace dfm

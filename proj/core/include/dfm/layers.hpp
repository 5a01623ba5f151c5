#ifndef DFM_LAYERS_HPP_
#define DFM_LAYERS_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dfm/tensor.hpp"

namespace dfm {

/// Trainable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Non-trainable persistent state (batch-norm running statistics).
struct Buffer {
  std::string name;
  Tensor value;
};

// All layers take N×C×H×W tensors. forward() caches what backward() needs and
// is meant for training; infer() is const and cache-free so a trained model
// can serve concurrent callers.

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, bool bias);

  /// He (Kaiming) normal initialization: std = sqrt(2 / fan_in); zero bias.
  void init_he(std::mt19937_64& rng);

  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);

  void collect(std::vector<Parameter*>& params);
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  bool has_bias_ = false;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  Tensor forward(const Tensor& x);  // batch statistics; updates running stats
  Tensor infer(const Tensor& x) const;  // running statistics
  Tensor backward(const Tensor& grad_out);

  void collect(std::vector<Parameter*>& params);
  void collect(std::vector<Buffer*>& buffers);

 private:
  int channels_ = 0;
  float momentum_ = 0.1f;
  float eps_ = 1e-5f;
  Parameter gamma_;
  Parameter beta_;
  Buffer running_mean_;
  Buffer running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  static Tensor infer(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;

 private:
  Tensor output_;
};

/// 2×2 max pooling, stride 2. Spatial dims must be even.
class MaxPool2x2 {
 public:
  Tensor forward(const Tensor& x);
  static Tensor infer(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;

 private:
  std::vector<int> in_shape_;
  std::vector<std::int32_t> argmax_;
};

/// 2× bilinear upsampling with half-pixel centers (align_corners = false).
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& grad_out, const std::vector<int>& in_shape);

/// Channel concatenation of two N×C×H×W tensors, and its split.
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, int channels_a, Tensor& grad_a, Tensor& grad_b);

/// conv3x3 -> BN -> ReLU -> conv3x3 -> BN -> ReLU
class DoubleConv {
 public:
  DoubleConv() = default;
  DoubleConv(const std::string& name, int in_channels, int out_channels);

  void init_he(std::mt19937_64& rng);
  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Parameter*>& params);
  void collect(std::vector<Buffer*>& buffers);

 private:
  Conv2d conv1_, conv2_;
  BatchNorm2d bn1_, bn2_;
  ReLU relu1_, relu2_;
};

}  // namespace dfm

#endif  // DFM_LAYERS_HPP_

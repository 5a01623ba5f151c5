#ifndef DFM_MODEL_HPP_
#define DFM_MODEL_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfm/frf.hpp"
#include "dfm/layers.hpp"
#include "dfm/tensor.hpp"

namespace dfm {

struct ModelConfig {
  int in_channels = 1;
  int num_classes = 4;  // background + structures
  int base_channels = 64;
  int depth = 4;
  int frf_steps = 5;

  void validate() const;
  /// Spatial dims must be multiples of this.
  int size_multiple() const { return 1 << depth; }

  bool operator==(const ModelConfig&) const = default;
};

/// Batched network outputs, all N×?×H×W.
struct ModelOutputs {
  Tensor features;         // F0, base_channels
  Tensor initial_logits;   // num_classes
  Tensor direction_field;  // 2
  Tensor final_logits;     // num_classes
};

/// Upstream gradients for backward(); an empty tensor means zero.
struct OutputGrads {
  Tensor initial_logits;
  Tensor direction_field;
  Tensor final_logits;
};

/// U-Net backbone with three 1×1 heads: initial segmentation, direction
/// field, and a final classifier over [F^N; F^0] where F^N is the
/// rectified feature map.
class DfmModel {
 public:
  DfmModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Training-mode forward (batch-norm batch statistics); caches activations
  /// for backward().
  ModelOutputs forward(const Tensor& images);
  /// Inference with running statistics. Accepts N×C×H×W or C×H×W.
  ModelOutputs predict(const Tensor& images) const;

  /// Accumulates parameter gradients for the last forward() call.
  void backward(const OutputGrads& grads);
  void zero_grad();

  std::vector<Parameter*> parameters();
  std::vector<Buffer*> buffers();
  std::size_t parameter_count();

 private:
  struct UpStage {
    Conv2d reduce;  // 1×1 after bilinear upsampling
    DoubleConv block;
    std::vector<int> in_shape;
  };

  void check_input(const Tensor& images) const;

  ModelConfig cfg_;
  DoubleConv inc_;
  std::vector<MaxPool2x2> pools_;
  std::vector<DoubleConv> downs_;
  std::vector<UpStage> ups_;  // ups_[l-1] maps level l to level l-1
  Conv2d seg_head_;
  Conv2d df_head_;
  Conv2d final_head_;

  // Cached by forward() for backward().
  Tensor features_;
  Tensor field_;
};

DfmModel build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Adam with bias correction.
class Adam {
 public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(const std::vector<Parameter*>& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<const Parameter*, std::pair<std::vector<float>, std::vector<float>>> state_;
};

// Checkpoint archive: "DFM-CKPT v1" line, a key-value document holding the
// model config ("model.*") and free-form metadata ("meta.*"), then every
// parameter and buffer as name, shape and little-endian float32 payload.
struct Checkpoint {
  ModelConfig config;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const std::string& path, DfmModel& model,
                     const std::map<std::string, std::string>& metadata);
/// Reads the config and metadata, builds a model and restores its state.
/// Throws if tensor names or shapes disagree with the stored config.
DfmModel load_checkpoint(const std::string& path, Checkpoint* info = nullptr);

}  // namespace dfm

#endif  // DFM_MODEL_HPP_

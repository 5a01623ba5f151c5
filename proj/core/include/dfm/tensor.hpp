#ifndef DFM_TENSOR_HPP_
#define DFM_TENSOR_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dfm {

/// Dense row-major float array of rank 1 to 4.
///
/// Layer code works on NCHW tensors; single-sample maps (FeatureMap,
/// logits) are rank 3 C×H×W.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(std::initializer_list<int> shape, float fill = 0.0f)
      : Tensor(std::vector<int>(shape), fill) {}
  Tensor(std::vector<int> shape, std::vector<float> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 accessors (C×H×W).
  float& at(int c, int y, int x);
  float at(int c, int y, int x) const;
  // Rank-4 accessors (N×C×H×W).
  float& at(int n, int c, int y, int x);
  float at(int n, int c, int y, int x) const;

  void fill(float value);
  void reshape(std::vector<int> shape);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

using FeatureMap = Tensor;  // C×H×W

std::size_t shape_volume(const std::vector<int>& shape);

}  // namespace dfm

#endif  // DFM_TENSOR_HPP_

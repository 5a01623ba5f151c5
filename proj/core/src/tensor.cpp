#include "dfm/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace dfm {

std::size_t shape_volume(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, float fill)
    : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
  if (shape_.empty() || shape_.size() > 4) {
    throw std::invalid_argument("tensor rank must be in [1, 4]");
  }
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_.empty() || shape_.size() > 4) {
    throw std::invalid_argument("tensor rank must be in [1, 4]");
  }
  if (data_.size() != shape_volume(shape_)) {
    throw std::invalid_argument("tensor value count does not match shape " +
                                shape_string());
  }
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw std::out_of_range("tensor axis");
  return shape_[static_cast<std::size_t>(axis)];
}

float& Tensor::at(int c, int y, int x) {
  return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
}

float Tensor::at(int c, int y, int x) const {
  return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
}

float& Tensor::at(int n, int c, int y, int x) {
  return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) *
                   shape_[3] +
               x];
}

float Tensor::at(int n, int c, int y, int x) const {
  return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) *
                   shape_[3] +
               x];
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::reshape(std::vector<int> shape) {
  if (shape_volume(shape) != data_.size()) {
    throw std::invalid_argument("reshape changes element count");
  }
  shape_ = std::move(shape);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace dfm

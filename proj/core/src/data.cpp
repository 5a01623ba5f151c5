#include "dfm/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "dfm/nifti.hpp"

namespace fs = std::filesystem;

namespace dfm {

int ClassNames::id_of(const std::string& name) const {
  for (std::size_t i = 1; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

ClassNames ClassNames::parse(const std::string& csv) {
  ClassNames out;
  out.names = {"background"};
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    item = first == std::string::npos ? "" : item.substr(first, item.find_last_not_of(" \t") - first + 1);
    if (item.empty()) throw std::invalid_argument("empty class name in '" + csv + "'");
    out.names.push_back(item);
  }
  if (out.names.size() < 2) throw std::invalid_argument("no class names in '" + csv + "'");
  return out;
}

void VolumeSample::validate() const {
  if (depth < 1 || height < 1 || width < 1) {
    throw std::invalid_argument(case_id + ": volume dimensions must be positive");
  }
  const std::size_t n = static_cast<std::size_t>(depth) * height * width;
  if (image.size() != n) throw std::invalid_argument(case_id + ": image size mismatch");
  if (label && label->size() != n) throw std::invalid_argument(case_id + ": label size mismatch");
}

std::vector<float> resize_bilinear(const float* src, int h, int w, int out_h, int out_w) {
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      const double top = src[y0 * w + x0] * (1 - tx) + src[y0 * w + x1] * tx;
      const double bot = src[y1 * w + x0] * (1 - tx) + src[y1 * w + x1] * tx;
      out[static_cast<std::size_t>(oy) * out_w + ox] = static_cast<float>(top * (1 - ty) + bot * ty);
    }
  }
  return out;
}

std::vector<std::int32_t> resize_nearest(const std::int32_t* src, int h, int w, int out_h,
                                         int out_w) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    const int y = std::min(h - 1, static_cast<int>(std::floor((oy + 0.5) * h / out_h)));
    for (int ox = 0; ox < out_w; ++ox) {
      const int x = std::min(w - 1, static_cast<int>(std::floor((ox + 0.5) * w / out_w)));
      out[static_cast<std::size_t>(oy) * out_w + ox] = src[y * w + x];
    }
  }
  return out;
}

void zscore(std::vector<float>& values) {
  if (values.empty()) return;
  double mean = 0.0;
  for (float v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (float v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var);
  if (!(sd > 1e-8)) {
    std::fill(values.begin(), values.end(), 0.0f);
    return;
  }
  for (float& v : values) v = static_cast<float>((v - mean) / sd);
}

void refresh_targets(SliceSample& s) {
  s.df_gt = compute_direction_field(s.label);
  s.weight = class_balance_weights(s.label);
}

std::vector<SliceSample> slice_and_preprocess(const VolumeSample& volume, int size,
                                              int num_classes) {
  volume.validate();
  if (!volume.label) throw std::invalid_argument(volume.case_id + ": volume has no labels");
  if (size < 1) throw std::invalid_argument("target size must be positive");
  const int h = volume.height;
  const int w = volume.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<SliceSample> out;
  out.reserve(static_cast<std::size_t>(volume.depth));
  for (int z = 0; z < volume.depth; ++z) {
    std::vector<float> img = resize_bilinear(volume.image.data() + z * plane, h, w, size, size);
    zscore(img);
    SliceSample s;
    s.image = Tensor({1, size, size}, std::move(img));
    s.label = LabelMask(size, size, num_classes,
                        resize_nearest(volume.label->data() + z * plane, h, w, size, size));
    refresh_targets(s);
    s.case_id = volume.case_id;
    s.slice_index = z;
    s.spacing = {volume.spacing[0], volume.spacing[1] * h / size, volume.spacing[2] * w / size};
    out.push_back(std::move(s));
  }
  return out;
}

AugmentParams draw_augment(std::mt19937_64& rng, int height, int width,
                           double max_shift_fraction, double max_degrees) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  AugmentParams p;
  p.shift_x = unit(rng) * max_shift_fraction * width;
  p.shift_y = unit(rng) * max_shift_fraction * height;
  p.angle = unit(rng) * max_degrees * std::numbers::pi / 180.0;
  return p;
}

SliceSample augment(const SliceSample& s, const AugmentParams& params) {
  const int h = s.label.height();
  const int w = s.label.width();
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double c = std::cos(params.angle);
  const double sn = std::sin(params.angle);

  SliceSample out;
  out.image = Tensor({1, h, w});
  out.label = LabelMask(h, w, s.label.num_classes());
  const float* img = s.image.data();
  float* dst = out.image.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // inverse map: source = R(-angle) (p - centre - shift) + centre
      const double dx = x - cx - params.shift_x;
      const double dy = y - cy - params.shift_y;
      const double sx = c * dx + sn * dy + cx;
      const double sy = -sn * dx + c * dy + cy;

      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const double tx = sx - fx;
      const double ty = sy - fy;
      double acc = 0.0;
      for (int j = 0; j < 2; ++j) {
        const int yy = y0 + j;
        if (yy < 0 || yy >= h) continue;
        const double wy = j ? ty : 1.0 - ty;
        for (int i = 0; i < 2; ++i) {
          const int xx = x0 + i;
          if (xx < 0 || xx >= w) continue;
          acc += wy * (i ? tx : 1.0 - tx) * img[yy * w + xx];
        }
      }
      dst[y * w + x] = static_cast<float>(acc);

      const int nx = static_cast<int>(std::floor(sx + 0.5));
      const int ny = static_cast<int>(std::floor(sy + 0.5));
      if (nx >= 0 && nx < w && ny >= 0 && ny < h) out.label.set(y, x, s.label.at(ny, nx));
    }
  }
  refresh_targets(out);
  out.case_id = s.case_id;
  out.slice_index = s.slice_index;
  out.spacing = s.spacing;
  return out;
}

SliceSample augment(const SliceSample& s, std::mt19937_64& rng) {
  return augment(s, draw_augment(rng, s.label.height(), s.label.width()));
}

VolumeSample load_volume_pair(const std::string& image_path, const std::string& label_path,
                              const std::string& case_id, int num_classes) {
  const NiftiVolume img = read_nifti(image_path);
  const NiftiVolume lab = read_nifti(label_path);
  if (img.depth != lab.depth || img.height != lab.height || img.width != lab.width) {
    throw std::runtime_error(label_path + ": label dimensions do not match " + image_path);
  }
  VolumeSample v;
  v.depth = img.depth;
  v.height = img.height;
  v.width = img.width;
  v.spacing = img.spacing;
  v.case_id = case_id;
  v.image.assign(img.values.begin(), img.values.end());
  std::vector<std::int32_t> labels(lab.values.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double value = lab.values[i];
    if (value != std::round(value) || value < 0 || value > num_classes) {
      throw std::runtime_error(label_path + ": label value " + std::to_string(value) +
                               " outside {0.." + std::to_string(num_classes) + "}");
    }
    labels[i] = static_cast<std::int32_t>(value);
  }
  v.label = std::move(labels);
  return v;
}

std::vector<VolumeSample> load_acdc_case(const std::string& dir, int num_classes) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  static const std::regex frame_re(R"((patient\d+_frame\d+)\.nii(\.gz)?)");
  std::vector<std::pair<std::string, fs::path>> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, frame_re)) frames.emplace_back(m[1].str(), entry.path());
  }
  std::sort(frames.begin(), frames.end());
  std::vector<VolumeSample> out;
  for (const auto& [id, image_path] : frames) {
    fs::path gt = image_path.parent_path() / (id + "_gt.nii.gz");
    if (!fs::exists(gt)) gt = image_path.parent_path() / (id + "_gt.nii");
    if (!fs::exists(gt)) continue;
    out.push_back(load_volume_pair(image_path.string(), gt.string(), id, num_classes));
  }
  if (out.empty()) throw std::runtime_error(dir + ": no annotated frames found");
  return out;
}

std::vector<std::string> list_acdc_patients(const std::string& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("ACDC root not found: " + root);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("patient", 0) == 0) {
      out.push_back(entry.path().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dfm

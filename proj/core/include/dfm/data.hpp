#ifndef DFM_DATA_HPP_
#define DFM_DATA_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dfm/direction_field.hpp"
#include "dfm/label_mask.hpp"
#include "dfm/losses.hpp"
#include "dfm/tensor.hpp"

namespace dfm {

/// Integer label -> structure name. Index 0 is background.
struct ClassNames {
  std::vector<std::string> names{"background", "RV", "MYO", "LV"};  // ACDC convention

  int num_foreground() const { return static_cast<int>(names.size()) - 1; }
  /// Label id for a structure name; -1 if unknown.
  int id_of(const std::string& name) const;
  /// Parses "RV,MYO,LV" (labels 1..K in order).
  static ClassNames parse(const std::string& csv);
};

/// A labelled (or unlabelled) 3D volume, row-major D×H×W.
struct VolumeSample {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::vector<float> image;
  std::optional<std::vector<std::int32_t>> label;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // (sz, sy, sx) mm
  std::string case_id;

  void validate() const;
};

struct SliceSample {
  Tensor image;  // 1×S×S, z-scored
  LabelMask label;
  DirectionField df_gt;
  WeightMap weight;
  std::string case_id;
  int slice_index = 0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // adjusted for the resize
};

/// Loads every annotated frame (patientXXX_frameYY.nii.gz with a matching
/// *_gt.nii.gz) from one ACDC patient directory, sorted by frame.
std::vector<VolumeSample> load_acdc_case(const std::string& dir, int num_classes = 3);

/// Patient directories below an ACDC root (e.g. .../training), sorted.
std::vector<std::string> list_acdc_patients(const std::string& root);

/// Slices a volume axially, resizes each slice to size×size (bilinear image,
/// nearest label), z-scores the image per slice and derives the direction
/// field and class-balance weights from the resized label.
std::vector<SliceSample> slice_and_preprocess(const VolumeSample& volume, int size = 256,
                                              int num_classes = 3);

/// Rebuilds df_gt and weight from the current label.
void refresh_targets(SliceSample& s);

struct AugmentParams {
  double shift_x = 0.0;  // pixels
  double shift_y = 0.0;
  double angle = 0.0;  // radians, counter-clockwise about the image centre
};

/// Uniform shifts within +-fraction of width/height and angles in
/// [-max_degrees, max_degrees].
AugmentParams draw_augment(std::mt19937_64& rng, int height, int width,
                           double max_shift_fraction = 0.125, double max_degrees = 180.0);

/// Applies one rigid transform to image (bilinear, zero fill) and label
/// (nearest, zero fill), then recomputes df_gt and weight.
SliceSample augment(const SliceSample& s, const AugmentParams& params);
SliceSample augment(const SliceSample& s, std::mt19937_64& rng);

// Resampling helpers (half-pixel centres).
std::vector<float> resize_bilinear(const float* src, int h, int w, int out_h, int out_w);
std::vector<std::int32_t> resize_nearest(const std::int32_t* src, int h, int w, int out_h,
                                         int out_w);
/// Per-slice z-score; constant input maps to zeros.
void zscore(std::vector<float>& values);

// --- synthetic cardiac-like phantoms ---------------------------------------

struct SynthOptions {
  int size = 256;
  double noise = 0.06;   // additive Gaussian noise (intensity units)
  int max_distractors = 2;
};

/// One 1×size×size raw-intensity phantom: LV ellipse (label 3) inside a MYO
/// ring (label 2) with an RV crescent (label 1) against the ring, on a
/// textured background. Papillary muscles inside the LV carry myocardium
/// intensity but the LV label. Each class has at least 20 pixels.
VolumeSample synth_volume(std::mt19937_64& rng, const SynthOptions& opts = {});

/// synth_volume followed by slice_and_preprocess at the same size.
SliceSample synth_sample(std::mt19937_64& rng, int size = 256);
SliceSample synth_sample(std::mt19937_64& rng, const SynthOptions& opts);

/// Seed of the i-th sample of a synthetic set.
std::uint64_t synth_seed(std::uint64_t base_seed, std::uint64_t index);

struct SynthManifestEntry {
  std::string id;
  std::string image_path;
  std::string label_path;
  std::uint64_t seed = 0;
};

/// Writes count phantoms as NIfTI image/label pairs plus manifest.tsv
/// (id, image path, seed per line). Returns the manifest entries.
std::vector<SynthManifestEntry> write_synthetic_dataset(const std::string& out_dir, int count,
                                                        std::uint64_t seed,
                                                        const SynthOptions& opts = {});
std::vector<SynthManifestEntry> read_synthetic_manifest(const std::string& dir);
VolumeSample load_volume_pair(const std::string& image_path, const std::string& label_path,
                              const std::string& case_id, int num_classes = 3);

}  // namespace dfm

#endif  // DFM_DATA_HPP_

#ifndef DFM_CONFIG_HPP_
#define DFM_CONFIG_HPP_

#include <cstdint>
#include <string>

#include "dfm/losses.hpp"
#include "dfm/model.hpp"

namespace dfm {

// Flat "key = value" run configuration. '#' starts a comment.
//
//   dataset         synthetic | acdc
//   data_root       ACDC training directory (falls back to $DFM_DATA_ROOT)
//   fold            ACDC cross-validation fold, 0..4
//   synth_train     synthetic training samples
//   synth_val       synthetic validation samples
//   synth_seed      seed of the synthetic set
//   input_size      slices are resized to input_size x input_size
//   epochs, batch_size, learning_rate
//   frf_steps       rectification steps N (0 disables rectification)
//   alpha           angle-term weight
//   lambda_df       direction-field loss weight (0 trains a plain U-Net)
//   epsilon_acos    cosine clamp margin
//   squared_l2      use the squared L2 distance in the field loss
//   base_channels, depth
//   augment         random shift/rotation each epoch
//   seed            initialisation, shuffling and augmentation
//   max_distance    largest distance bucket of the stratified accuracy
//   class_names     comma separated names of labels 1..K
//   output_dir      logs, checkpoints and reports
struct TrainConfig {
  std::string dataset = "synthetic";
  std::string data_root;
  int fold = 0;
  int synth_train = 200;
  int synth_val = 50;
  std::uint64_t synth_seed = 1234;
  int input_size = 256;
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int frf_steps = 5;
  double alpha = 1.0;
  double lambda_df = 1.0;
  double epsilon_acos = 1e-7;
  bool squared_l2 = false;
  int base_channels = 64;
  int depth = 4;
  bool augment = true;
  std::uint64_t seed = 0;
  int max_distance = 20;
  std::string class_names = "RV,MYO,LV";
  std::string output_dir = "runs/default";

  void validate() const;
  ModelConfig model_config() const;
  LossConfig loss_config() const;
  /// Canonical "key = value" text; parse_config(to_text()) round-trips.
  std::string to_text() const;
  /// FNV-1a of to_text() without output_dir, as 16 hex digits.
  std::string hash() const;
};

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace dfm

#endif  // DFM_CONFIG_HPP_

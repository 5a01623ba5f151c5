#ifndef DFM_HARNESS_HPP_
#define DFM_HARNESS_HPP_

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfm/config.hpp"
#include "dfm/data.hpp"
#include "dfm/metrics.hpp"
#include "dfm/model.hpp"

namespace dfm {

/// Preprocessed slices of one case (a volume, or a single synthetic slice).
struct CaseSlices {
  std::string case_id;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<SliceSample> slices;
};

struct Dataset {
  std::string description;
  std::vector<CaseSlices> cases;

  std::size_t slice_count() const;
  /// Side length shared by every slice; 0 when empty.
  int slice_size() const;
};

/// Synthetic samples offset .. offset+count-1 of the set with this seed.
Dataset make_synthetic_dataset(int count, std::uint64_t seed, int size, int offset = 0);

/// ACDC patients of one split: "train" (fold excluded), "val" (patients
/// whose sorted index % 5 == fold) or "all".
Dataset load_acdc_dataset(const std::string& root, int fold, const std::string& split, int size);

/// Dataset spec strings:
///   synthetic:count=50,seed=1234,size=64[,offset=200]
///   acdc:root=<dir>,fold=0,split=val      (root defaults to $DFM_DATA_ROOT)
///   dir:<path>   a directory with manifest.tsv or *_gt.nii(.gz) label files
/// `size` is the slice size used when the spec does not fix one.
Dataset load_dataset(const std::string& spec, int size);

struct TrainSplit {
  Dataset train;
  Dataset val;
};

TrainSplit load_training_data(const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_ce_initial = 0.0;
  double train_ce_final = 0.0;
  double train_df = 0.0;
  double val_loss = 0.0;
  double val_mean_dice = 0.0;
};

struct TrainResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::string log_path;
  std::vector<EpochLog> history;
  int best_epoch = 0;
  double best_val_dice = 0.0;
};

/// Adam training on the combined loss; one CSV row per epoch, best (by
/// validation mean Dice) and last checkpoints in cfg.output_dir.
/// Throws std::runtime_error on a non-finite loss after writing
/// nonfinite_dump.txt.
TrainResult train(const TrainConfig& cfg);
TrainResult train(const TrainConfig& cfg, const TrainSplit& data);

struct EvalReport {
  std::vector<StructureResult> rows;  // LV, RV, MYO, then any other names
  StructureResult mean;               // arithmetic mean of rows
  std::vector<int> hd_missing;        // cases with undefined Hausdorff, per row
  std::map<std::string, std::vector<StructureResult>> per_case;
  StratifiedAccuracy final_head;
  StratifiedAccuracy initial_head;
  std::map<std::string, std::string> metadata;

  std::string summary_csv() const;
  std::string per_case_csv() const;
  std::string stratified_csv() const;
};

/// Slice-wise inference, per-case 3D reassembly, Dice/Hausdorff per
/// structure and the stratified accuracy of both segmentation heads.
EvalReport evaluate(const DfmModel& model, const Dataset& data, const ClassNames& names,
                    int max_distance = 20);
/// Loads a checkpoint and a dataset spec. Throws when the slice size or
/// class count of the data disagree with the checkpoint.
EvalReport evaluate_checkpoint(const std::string& checkpoint, const std::string& data_spec,
                               int max_distance = 20);

/// eval_summary.csv, eval_cases.csv, stratified.csv, stratified.png,
/// eval_meta.txt
void write_report(const EvalReport& report, const std::string& dir);

struct AblationRow {
  int steps = 0;
  double mean_dice = 0.0;
  std::optional<double> mean_hd;
};

/// One training run per N (same seed and data), each evaluated on the
/// validation split. Writes ablation.csv into cfg.output_dir.
std::vector<AblationRow> ablate_steps(const TrainConfig& cfg, const std::vector<int>& steps);

std::string revision();

}  // namespace dfm

#endif  // DFM_HARNESS_HPP_

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dfm/config.hpp"
#include "dfm/data.hpp"
#include "dfm/direction_field.hpp"
#include "dfm/field_io.hpp"
#include "dfm/harness.hpp"
#include "dfm/metrics.hpp"
#include "dfm/nifti.hpp"
#include "dfm/png.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_steps(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

void print_report(const dfm::EvalReport& report) {
  std::cout << report.summary_csv();
  for (const auto& [k, v] : report.metadata) std::cout << "# " << k << " = " << v << '\n';
}

int cmd_gt_df(const std::string& mask_path, const std::string& out, const std::string& viz,
              int slice, int classes) {
  const dfm::NiftiVolume vol = dfm::read_nifti(mask_path);
  if (slice < 0 || slice >= vol.depth) throw std::invalid_argument("slice index out of range");
  const std::size_t plane = static_cast<std::size_t>(vol.height) * vol.width;
  std::vector<std::int32_t> labels(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    labels[i] = static_cast<std::int32_t>(std::lround(vol.values[slice * plane + i]));
  }
  const dfm::LabelMask mask(vol.height, vol.width, classes, std::move(labels));
  const dfm::DirectionField df = dfm::compute_direction_field(mask);
  dfm::write_direction_field(out, df);
  if (!viz.empty()) dfm::write_png(viz, dfm::render_direction_field(df));
  return 0;
}

dfm::LabelVolume read_labels(const std::string& path) {
  const dfm::NiftiVolume v = dfm::read_nifti(path);
  std::vector<std::int32_t> labels(v.values.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<std::int32_t>(std::lround(v.values[i]));
  }
  return dfm::LabelVolume(v.depth, v.height, v.width, std::move(labels));
}

bool is_nifti(const fs::path& p) {
  const std::string n = p.filename().string();
  return n.ends_with(".nii") || n.ends_with(".nii.gz");
}

int cmd_metrics(const std::string& pred_dir, const std::string& gt_dir, bool header_spacing,
                int max_distance, const std::string& class_csv, const std::string& out_dir) {
  const dfm::ClassNames names = dfm::ClassNames::parse(class_csv);
  std::vector<fs::path> gts;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && is_nifti(e.path())) gts.push_back(e.path());
  }
  std::sort(gts.begin(), gts.end());
  if (gts.empty()) throw std::runtime_error("no NIfTI files in " + gt_dir);

  std::ostringstream cases;
  cases << "case_id,structure,dice,hd_mm\n";
  std::vector<double> dice_sum(static_cast<std::size_t>(names.num_foreground()) + 1, 0.0);
  std::vector<double> hd_sum(dice_sum.size(), 0.0);
  std::vector<int> hd_n(dice_sum.size(), 0);
  dfm::StratifiedCounter strat(max_distance);
  int n_cases = 0;
  for (const auto& gt_path : gts) {
    std::string name = gt_path.filename().string();
    fs::path pred_path = fs::path(pred_dir) / name;
    if (!fs::exists(pred_path)) {
      const auto pos = name.find("_gt.");
      if (pos != std::string::npos) pred_path = fs::path(pred_dir) / name.erase(pos, 3);
    }
    if (!fs::exists(pred_path)) {
      spdlog::warn("no prediction for {}", gt_path.string());
      continue;
    }
    const dfm::LabelVolume gt = read_labels(gt_path.string());
    const dfm::LabelVolume pred = read_labels(pred_path.string());
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    if (header_spacing) spacing = dfm::read_nifti(gt_path.string()).spacing;
    std::string id = gt_path.filename().string();
    id = id.substr(0, id.find(".nii"));
    for (int c = 1; c <= names.num_foreground(); ++c) {
      const double d = dfm::dice_3d(pred, gt, c);
      std::string hd = "NA";
      try {
        const double h = dfm::hausdorff_3d(pred, gt, c, spacing);
        hd_sum[static_cast<std::size_t>(c)] += h;
        ++hd_n[static_cast<std::size_t>(c)];
        hd = std::to_string(h);
      } catch (const std::domain_error&) {
      }
      dice_sum[static_cast<std::size_t>(c)] += d;
      cases << id << ',' << names.names[static_cast<std::size_t>(c)] << ',' << d << ',' << hd << '\n';
    }
    const std::size_t plane = static_cast<std::size_t>(gt.height) * gt.width;
    for (int z = 0; z < gt.depth; ++z) {
      auto slice = [&](const dfm::LabelVolume& v) {
        return dfm::LabelMask(v.height, v.width, names.num_foreground(),
                              {v.labels.begin() + z * plane, v.labels.begin() + (z + 1) * plane});
      };
      strat.add(slice(pred), slice(gt));
    }
    ++n_cases;
  }
  if (n_cases == 0) throw std::runtime_error("no prediction/ground-truth pairs found");
  double mean_dice = 0.0, mean_hd = 0.0;
  bool hd_ok = true;
  for (int c = 1; c <= names.num_foreground(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double d = dice_sum[i] / n_cases;
    mean_dice += d;
    std::string hd = "NA";
    if (hd_n[i] > 0) {
      mean_hd += hd_sum[i] / hd_n[i];
      hd = std::to_string(hd_sum[i] / hd_n[i]);
    } else {
      hd_ok = false;
    }
    cases << "ALL," << names.names[i] << ',' << d << ',' << hd << '\n';
  }
  const double k = names.num_foreground();
  cases << "ALL,Mean," << mean_dice / k << ',' << (hd_ok ? std::to_string(mean_hd / k) : "NA")
        << '\n';

  std::ostringstream strat_csv;
  strat_csv << "distance,accuracy\n";
  const auto s = strat.result();
  for (std::size_t i = 0; i < s.distances.size(); ++i) {
    strat_csv << s.distances[i] << ',' << s.accuracy[i] << '\n';
  }
  if (out_dir.empty()) {
    std::cout << cases.str() << '\n' << strat_csv.str();
  } else {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "metrics.csv") << cases.str();
    std::ofstream(fs::path(out_dir) / "stratified.csv") << strat_csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directional feature maps for cardiac MRI segmentation"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  std::string config_path;
  std::uint64_t seed = 0;
  std::string output_dir;
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = train->add_option("--seed", seed, "Override the seed");
  train->add_option("--output", output_dir, "Override output_dir");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ckpt, data_spec, eval_out;
  int max_distance = 20;
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_spec, "Dataset spec (synthetic:..., acdc:..., dir:...)")
      ->required();
  eval->add_option("--out", eval_out, "Report directory");
  eval->add_option("--max-distance", max_distance, "Largest stratified-accuracy bucket");

  auto* ablate = app.add_subcommand("ablate", "Train/evaluate one model per step count");
  std::string steps_csv = "0,1,3,5,7";
  ablate->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--steps", steps_csv, "Comma separated step counts");

  auto* gtdf = app.add_subcommand("gt-df", "Ground-truth direction field of a label mask");
  std::string mask_path, df_out, viz;
  int slice = 0, classes = 3;
  gtdf->add_option("--mask", mask_path, "Label NIfTI")->required()->check(CLI::ExistingFile);
  gtdf->add_option("--out", df_out, "Output field file")->required();
  gtdf->add_option("--viz", viz, "Optional PNG visualisation");
  gtdf->add_option("--slice", slice, "Slice index for 3D masks");
  gtdf->add_option("--classes", classes, "Number of foreground classes");

  auto* synth = app.add_subcommand("synth", "Write a synthetic phantom dataset");
  int count = 0, size = 256;
  std::uint64_t synth_seed = 1234;
  std::string synth_out;
  synth->add_option("--count", count, "Number of samples")->required();
  synth->add_option("--seed", synth_seed, "Dataset seed");
  synth->add_option("--size", size, "Image side length");
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* metrics = app.add_subcommand("metrics", "Score prediction volumes against ground truth");
  std::string pred_dir, gt_dir, metrics_out, class_csv = "RV,MYO,LV";
  bool header_spacing = false;
  metrics->add_option("--pred", pred_dir, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--gt", gt_dir, "Ground-truth directory")->required()->check(CLI::ExistingDirectory);
  metrics->add_flag("--spacing-from-header", header_spacing, "Use NIfTI voxel spacing");
  metrics->add_option("--max-distance", max_distance, "Largest stratified-accuracy bucket");
  metrics->add_option("--classes", class_csv, "Names of labels 1..K");
  metrics->add_option("--out", metrics_out, "Write CSVs here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      dfm::TrainConfig cfg = dfm::load_config(config_path);
      if (seed_opt->count() > 0) cfg.seed = seed;
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      const dfm::TrainResult r = dfm::train(cfg);
      std::cout << "best checkpoint: " << r.best_checkpoint << " (epoch " << r.best_epoch
                << ", val Dice " << r.best_val_dice << ")\n"
                << "last checkpoint: " << r.last_checkpoint << '\n';
    } else if (eval->parsed()) {
      const dfm::EvalReport report = dfm::evaluate_checkpoint(ckpt, data_spec, max_distance);
      if (!eval_out.empty()) dfm::write_report(report, eval_out);
      print_report(report);
    } else if (ablate->parsed()) {
      const dfm::TrainConfig cfg = dfm::load_config(config_path);
      const auto rows = dfm::ablate_steps(cfg, parse_steps(steps_csv));
      std::cout << "steps,mean_dice,mean_hd_mm\n";
      for (const auto& r : rows) {
        std::cout << r.steps << ',' << r.mean_dice << ','
                  << (r.mean_hd ? std::to_string(*r.mean_hd) : "NA") << '\n';
      }
    } else if (gtdf->parsed()) {
      return cmd_gt_df(mask_path, df_out, viz, slice, classes);
    } else if (synth->parsed()) {
      dfm::SynthOptions opts;
      opts.size = size;
      const auto entries = dfm::write_synthetic_dataset(synth_out, count, synth_seed, opts);
      std::cout << "wrote " << entries.size() << " samples to " << synth_out << '\n';
    } else if (metrics->parsed()) {
      return cmd_metrics(pred_dir, gt_dir, header_spacing, max_distance, class_csv, metrics_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

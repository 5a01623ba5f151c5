#include "dfm/harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dfm/png.hpp"

#ifndef DFM_REVISION
#define DFM_REVISION "unknown"
#endif

namespace fs = std::filesystem;

namespace dfm {
namespace {

constexpr int kEvalBatch = 8;

std::map<std::string, std::string> parse_kv_list(const std::string& body) {
  std::map<std::string, std::string> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected key=value in '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

std::string take(std::map<std::string, std::string>& kv, const std::string& key,
                 const std::string& fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::string v = it->second;
  kv.erase(it);
  return v;
}

void reject_leftovers(const std::map<std::string, std::string>& kv, const std::string& spec) {
  if (!kv.empty()) {
    throw std::invalid_argument("unknown dataset option '" + kv.begin()->first + "' in " + spec);
  }
}

std::string data_root_or_env(const std::string& root) {
  if (!root.empty()) return root;
  if (const char* env = std::getenv("DFM_DATA_ROOT")) return env;
  throw std::runtime_error("no ACDC root given and DFM_DATA_ROOT is not set");
}

CaseSlices to_case(const VolumeSample& v, int size, int num_classes) {
  CaseSlices c;
  c.case_id = v.case_id;
  c.slices = slice_and_preprocess(v, size, num_classes);
  c.spacing = c.slices.front().spacing;
  return c;
}

Tensor stack_images(const std::vector<const SliceSample*>& batch) {
  const int s = batch.front()->label.height();
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  Tensor images({static_cast<int>(batch.size()), 1, s, s});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::copy_n(batch[i]->image.data(), plane, images.data() + i * plane);
  }
  return images;
}

Tensor sample_of(const Tensor& batch, int n) {
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  const std::size_t len = static_cast<std::size_t>(c) * h * w;
  Tensor out({c, h, w});
  std::copy_n(batch.data() + n * len, len, out.data());
  return out;
}

void put_sample(Tensor& batch, int n, const Tensor& grad, float scale) {
  const std::size_t len = grad.size();
  float* dst = batch.data() + n * len;
  for (std::size_t i = 0; i < len; ++i) dst[i] = grad[i] * scale;
}

LabelMask argmax_labels(const Tensor& logits, int n, int num_classes) {
  const int k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const float* base = logits.data() + static_cast<std::size_t>(n) * k * plane;
  std::vector<std::int32_t> labels(plane);
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    for (int c = 1; c < k; ++c) {
      if (base[c * plane + p] > base[best * plane + p]) best = c;
    }
    labels[p] = best;
  }
  return LabelMask(h, w, num_classes, std::move(labels));
}

struct CasePrediction {
  std::vector<LabelMask> final_labels;
  std::vector<LabelMask> initial_labels;
  double loss_sum = 0.0;
};

CasePrediction predict_case(const DfmModel& model, const CaseSlices& c, const LossConfig* loss) {
  const int k = model.config().num_classes - 1;
  CasePrediction out;
  for (std::size_t start = 0; start < c.slices.size(); start += kEvalBatch) {
    const std::size_t end = std::min(c.slices.size(), start + kEvalBatch);
    std::vector<const SliceSample*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&c.slices[i]);
    const ModelOutputs o = model.predict(stack_images(batch));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int n = static_cast<int>(i);
      out.final_labels.push_back(argmax_labels(o.final_logits, n, k));
      out.initial_labels.push_back(argmax_labels(o.initial_logits, n, k));
      if (loss) {
        const SliceSample& s = *batch[i];
        out.loss_sum += total_loss(
            cross_entropy(sample_of(o.initial_logits, n), s.label),
            cross_entropy(sample_of(o.final_logits, n), s.label),
            direction_field_loss(sample_of(o.direction_field, n), s.df_gt, s.weight, *loss), *loss);
      }
    }
  }
  return out;
}

LabelVolume gt_volume(const CaseSlices& c) {
  std::vector<LabelMask> masks;
  for (const auto& s : c.slices) masks.push_back(s.label);
  return LabelVolume::stack(masks);
}

// Report order: LV, RV, MYO first (when present), then remaining labels.
std::vector<int> report_order(const ClassNames& names) {
  std::vector<int> order;
  for (const char* n : {"LV", "RV", "MYO"}) {
    const int id = names.id_of(n);
    if (id > 0) order.push_back(id);
  }
  for (int c = 1; c <= names.num_foreground(); ++c) {
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  }
  return order;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : "NA"; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

double mean_val_dice(const DfmModel& model, const Dataset& val, const ClassNames& names,
                     const LossConfig& loss, double* val_loss) {
  double dice_sum = 0.0;
  double loss_sum = 0.0;
  const auto order = report_order(names);
  for (const auto& c : val.cases) {
    const CasePrediction p = predict_case(model, c, &loss);
    loss_sum += p.loss_sum;
    const LabelVolume pred = LabelVolume::stack(p.final_labels);
    const LabelVolume gt = gt_volume(c);
    double case_sum = 0.0;
    for (int id : order) case_sum += dice_3d(pred, gt, id);
    dice_sum += case_sum / static_cast<double>(order.size());
  }
  *val_loss = loss_sum / static_cast<double>(std::max<std::size_t>(val.slice_count(), 1));
  return dice_sum / static_cast<double>(std::max<std::size_t>(val.cases.size(), 1));
}

[[noreturn]] void abort_non_finite(const TrainConfig& cfg, int epoch, long step,
                                   const std::vector<const SliceSample*>& batch,
                                   const std::vector<std::array<double, 3>>& terms) {
  std::ostringstream dump;
  dump << "non-finite loss at epoch " << epoch << ", step " << step << '\n';
  dump << "case_id\tslice\tce_initial\tce_final\tdf_loss\n";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    dump << batch[i]->case_id << '\t' << batch[i]->slice_index << '\t' << fmt_double(terms[i][0])
         << '\t' << fmt_double(terms[i][1]) << '\t' << fmt_double(terms[i][2]) << '\n';
  }
  const fs::path path = fs::path(cfg.output_dir) / "nonfinite_dump.txt";
  write_text(path, dump.str());
  spdlog::error("{}", dump.str());
  throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                           "; diagnostics in " + path.string());
}

std::map<std::string, std::string> checkpoint_metadata(const TrainConfig& cfg, int epoch,
                                                       double val_dice) {
  return {{"input_size", std::to_string(cfg.input_size)},
          {"class_names", cfg.class_names},
          {"seed", std::to_string(cfg.seed)},
          {"config_hash", cfg.hash()},
          {"revision", revision()},
          {"epoch", std::to_string(epoch)},
          {"val_mean_dice", fmt_double(val_dice)},
          {"lambda_df", fmt_double(cfg.lambda_df)},
          {"alpha", fmt_double(cfg.alpha)},
          {"dataset", cfg.dataset}};
}

}  // namespace

std::string revision() { return DFM_REVISION; }

std::size_t Dataset::slice_count() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.slices.size();
  return n;
}

int Dataset::slice_size() const {
  for (const auto& c : cases) {
    if (!c.slices.empty()) return c.slices.front().label.height();
  }
  return 0;
}

Dataset make_synthetic_dataset(int count, std::uint64_t seed, int size, int offset) {
  if (count < 1) throw std::invalid_argument("synthetic count must be positive");
  Dataset d;
  d.description = "synthetic:count=" + std::to_string(count) + ",seed=" + std::to_string(seed) +
                  ",size=" + std::to_string(size) + ",offset=" + std::to_string(offset);
  SynthOptions opts;
  opts.size = size;
  for (int i = offset; i < offset + count; ++i) {
    std::mt19937_64 rng(synth_seed(seed, static_cast<std::uint64_t>(i)));
    VolumeSample v = synth_volume(rng, opts);
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    v.case_id = id;
    d.cases.push_back(to_case(v, size, 3));
  }
  return d;
}

Dataset load_acdc_dataset(const std::string& root, int fold, const std::string& split, int size) {
  if (split != "train" && split != "val" && split != "all") {
    throw std::invalid_argument("ACDC split must be train, val or all");
  }
  if (fold < 0 || fold > 4) throw std::invalid_argument("fold must be in 0..4");
  const std::string dir = data_root_or_env(root);
  const auto patients = list_acdc_patients(dir);
  if (patients.empty()) throw std::runtime_error("no patient directories under " + dir);
  Dataset d;
  d.description = "acdc:root=" + dir + ",fold=" + std::to_string(fold) + ",split=" + split;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const bool in_val = static_cast<int>(i % 5) == fold;
    if ((split == "val" && !in_val) || (split == "train" && in_val)) continue;
    for (const auto& v : load_acdc_case(patients[i])) d.cases.push_back(to_case(v, size, 3));
  }
  return d;
}

Dataset load_dataset(const std::string& spec, int size) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("dataset spec needs a kind: " + spec);
  const std::string kind = spec.substr(0, colon);
  const std::string body = spec.substr(colon + 1);
  if (kind == "synthetic") {
    auto kv = parse_kv_list(body);
    const int count = std::stoi(take(kv, "count", "50"));
    const auto seed = std::stoull(take(kv, "seed", "1234"));
    const int sz = std::stoi(take(kv, "size", std::to_string(size)));
    const int offset = std::stoi(take(kv, "offset", "0"));
    reject_leftovers(kv, spec);
    return make_synthetic_dataset(count, seed, sz, offset);
  }
  if (kind == "acdc") {
    auto kv = parse_kv_list(body);
    const std::string root = take(kv, "root", "");
    const int fold = std::stoi(take(kv, "fold", "0"));
    const std::string split = take(kv, "split", "val");
    reject_leftovers(kv, spec);
    return load_acdc_dataset(root, fold, split, size);
  }
  if (kind == "dir") {
    if (!fs::is_directory(body)) throw std::runtime_error("dataset directory not found: " + body);
    Dataset d;
    d.description = spec;
    if (fs::exists(fs::path(body) / "manifest.tsv")) {
      for (const auto& e : read_synthetic_manifest(body)) {
        d.cases.push_back(to_case(load_volume_pair((fs::path(body) / e.image_path).string(),
                                                   (fs::path(body) / e.label_path).string(), e.id),
                                  size, 3));
      }
      return d;
    }
    std::vector<std::pair<std::string, fs::path>> pairs;
    for (const auto& entry : fs::recursive_directory_iterator(body)) {
      const std::string name = entry.path().filename().string();
      for (const std::string suffix : {"_gt.nii.gz", "_gt.nii"}) {
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
          const std::string id = name.substr(0, name.size() - suffix.size());
          pairs.emplace_back(id, entry.path());
          break;
        }
      }
    }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [id, gt] : pairs) {
      fs::path image = gt.parent_path() / (id + ".nii.gz");
      if (!fs::exists(image)) image = gt.parent_path() / (id + ".nii");
      if (!fs::exists(image)) throw std::runtime_error("no image for label " + gt.string());
      d.cases.push_back(to_case(load_volume_pair(image.string(), gt.string(), id), size, 3));
    }
    if (d.cases.empty()) throw std::runtime_error("no *_gt.nii(.gz) labels under " + body);
    return d;
  }
  throw std::invalid_argument("unknown dataset kind '" + kind + "'");
}

TrainSplit load_training_data(const TrainConfig& cfg) {
  cfg.validate();
  TrainSplit split;
  if (cfg.dataset == "synthetic") {
    split.train = make_synthetic_dataset(cfg.synth_train, cfg.synth_seed, cfg.input_size, 0);
    split.val = make_synthetic_dataset(cfg.synth_val, cfg.synth_seed, cfg.input_size,
                                       cfg.synth_train);
  } else {
    split.train = load_acdc_dataset(cfg.data_root, cfg.fold, "train", cfg.input_size);
    split.val = load_acdc_dataset(cfg.data_root, cfg.fold, "val", cfg.input_size);
  }
  return split;
}

TrainResult train(const TrainConfig& cfg) { return train(cfg, load_training_data(cfg)); }

TrainResult train(const TrainConfig& cfg, const TrainSplit& data) {
  cfg.validate();
  if (data.train.slice_count() == 0 || data.val.slice_count() == 0) {
    throw std::runtime_error("training and validation sets must not be empty");
  }
  if (data.train.slice_size() != cfg.input_size || data.val.slice_size() != cfg.input_size) {
    throw std::invalid_argument("dataset slice size does not match input_size");
  }
  fs::create_directories(cfg.output_dir);
  write_text(fs::path(cfg.output_dir) / "config.txt", cfg.to_text());

  const ClassNames names = ClassNames::parse(cfg.class_names);
  const LossConfig loss = cfg.loss_config();
  DfmModel model(cfg.model_config(), cfg.seed);
  Adam adam(cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);

  std::vector<const SliceSample*> pool;
  for (const auto& c : data.train.cases) {
    for (const auto& s : c.slices) pool.push_back(&s);
  }

  TrainResult result;
  result.log_path = (fs::path(cfg.output_dir) / "train_log.csv").string();
  result.best_checkpoint = (fs::path(cfg.output_dir) / "best.ckpt").string();
  result.last_checkpoint = (fs::path(cfg.output_dir) / "last.ckpt").string();
  std::ofstream log(result.log_path);
  if (!log) throw std::runtime_error("cannot write " + result.log_path);
  log << "epoch,train_loss,train_ce_initial,train_ce_final,train_df,val_loss,val_mean_dice\n";

  spdlog::info("training {} slices, validating on {}; {} parameters", pool.size(),
               data.val.slice_count(), model.parameter_count());
  result.best_val_dice = -1.0;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog e;
    e.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<SliceSample> augmented;
      std::vector<const SliceSample*> batch;
      if (cfg.augment) {
        augmented.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) augmented.push_back(augment(*pool[order[i]], rng));
        for (const auto& s : augmented) batch.push_back(&s);
      } else {
        for (std::size_t i = start; i < end; ++i) batch.push_back(pool[order[i]]);
      }
      const int n = static_cast<int>(batch.size());
      const float scale = 1.0f / static_cast<float>(n);

      model.zero_grad();
      const ModelOutputs out = model.forward(stack_images(batch));
      OutputGrads grads;
      grads.initial_logits = Tensor(out.initial_logits.shape());
      grads.final_logits = Tensor(out.final_logits.shape());
      if (loss.lambda_df > 0.0) grads.direction_field = Tensor(out.direction_field.shape());

      std::vector<std::array<double, 3>> terms(batch.size());
      bool finite = true;
      for (int i = 0; i < n; ++i) {
        const SliceSample& s = *batch[static_cast<std::size_t>(i)];
        const LossGrad ce_i = cross_entropy_with_grad(sample_of(out.initial_logits, i), s.label);
        const LossGrad ce_f = cross_entropy_with_grad(sample_of(out.final_logits, i), s.label);
        put_sample(grads.initial_logits, i, ce_i.grad, scale);
        put_sample(grads.final_logits, i, ce_f.grad, scale);
        double df_value;
        const Tensor pred_df = sample_of(out.direction_field, i);
        if (loss.lambda_df > 0.0) {
          const LossGrad df = direction_field_loss_with_grad(pred_df, s.df_gt, s.weight, loss);
          put_sample(grads.direction_field, i, df.grad,
                     scale * static_cast<float>(loss.lambda_df));
          df_value = df.value;
        } else {
          df_value = direction_field_loss(pred_df, s.df_gt, s.weight, loss);
        }
        terms[static_cast<std::size_t>(i)] = {ce_i.value, ce_f.value, df_value};
        const double total = total_loss(ce_i.value, ce_f.value, df_value, loss);
        finite = finite && std::isfinite(total);
        e.train_ce_initial += ce_i.value;
        e.train_ce_final += ce_f.value;
        e.train_df += df_value;
        e.train_loss += total;
      }
      if (!finite) abort_non_finite(cfg, epoch, step, batch, terms);
      model.backward(grads);
      adam.step(model.parameters());
      ++step;
    }
    const double count = static_cast<double>(pool.size());
    e.train_loss /= count;
    e.train_ce_initial /= count;
    e.train_ce_final /= count;
    e.train_df /= count;
    e.val_mean_dice = mean_val_dice(model, data.val, names, loss, &e.val_loss);
    if (!std::isfinite(e.val_loss)) {
      throw std::runtime_error("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    log << e.epoch << ',' << fmt_double(e.train_loss) << ',' << fmt_double(e.train_ce_initial)
        << ',' << fmt_double(e.train_ce_final) << ',' << fmt_double(e.train_df) << ','
        << fmt_double(e.val_loss) << ',' << fmt_double(e.val_mean_dice) << '\n';
    log.flush();
    result.history.push_back(e);

    if (e.val_mean_dice > result.best_val_dice) {
      result.best_val_dice = e.val_mean_dice;
      result.best_epoch = epoch;
      save_checkpoint(result.best_checkpoint, model, checkpoint_metadata(cfg, epoch, e.val_mean_dice));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    spdlog::info("epoch {}/{}: train loss {:.4f}, val loss {:.4f}, val Dice {:.4f} ({:.1f}s)",
                 epoch, cfg.epochs, e.train_loss, e.val_loss, e.val_mean_dice, secs);
  }
  save_checkpoint(result.last_checkpoint, model,
                  checkpoint_metadata(cfg, cfg.epochs, result.history.back().val_mean_dice));
  return result;
}

EvalReport evaluate(const DfmModel& model, const Dataset& data, const ClassNames& names,
                    int max_distance) {
  if (names.num_foreground() + 1 != model.config().num_classes) {
    throw std::invalid_argument("class names do not match the model's class count");
  }
  if (data.cases.empty()) throw std::invalid_argument("evaluation dataset is empty");
  const auto order = report_order(names);
  StratifiedCounter final_counter(max_distance);
  StratifiedCounter initial_counter(max_distance);

  std::vector<double> dice_sum(order.size(), 0.0);
  std::vector<double> hd_sum(order.size(), 0.0);
  std::vector<int> hd_count(order.size(), 0);
  EvalReport report;
  report.hd_missing.assign(order.size(), 0);
  for (const auto& c : data.cases) {
    const CasePrediction p = predict_case(model, c, nullptr);
    for (std::size_t i = 0; i < c.slices.size(); ++i) {
      final_counter.add(p.final_labels[i], c.slices[i].label);
      initial_counter.add(p.initial_labels[i], c.slices[i].label);
    }
    const LabelVolume pred = LabelVolume::stack(p.final_labels);
    const LabelVolume gt = gt_volume(c);
    auto& rows = report.per_case[c.case_id];
    for (std::size_t r = 0; r < order.size(); ++r) {
      StructureResult res;
      res.structure = names.names[static_cast<std::size_t>(order[r])];
      res.dice = dice_3d(pred, gt, order[r]);
      try {
        res.hausdorff_mm = hausdorff_3d(pred, gt, order[r], c.spacing);
      } catch (const std::domain_error&) {
        ++report.hd_missing[r];
      }
      dice_sum[r] += res.dice;
      if (res.hausdorff_mm) {
        hd_sum[r] += *res.hausdorff_mm;
        ++hd_count[r];
      }
      rows.push_back(res);
    }
  }

  const double cases = static_cast<double>(data.cases.size());
  report.mean.structure = "Mean";
  double mean_dice = 0.0, mean_hd = 0.0;
  bool hd_defined = true;
  for (std::size_t r = 0; r < order.size(); ++r) {
    StructureResult row;
    row.structure = names.names[static_cast<std::size_t>(order[r])];
    row.dice = dice_sum[r] / cases;
    if (hd_count[r] > 0) row.hausdorff_mm = hd_sum[r] / hd_count[r];
    mean_dice += row.dice;
    if (row.hausdorff_mm) {
      mean_hd += *row.hausdorff_mm;
    } else {
      hd_defined = false;
    }
    report.rows.push_back(row);
  }
  report.mean.dice = mean_dice / static_cast<double>(order.size());
  if (hd_defined) report.mean.hausdorff_mm = mean_hd / static_cast<double>(order.size());
  report.final_head = final_counter.result();
  report.initial_head = initial_counter.result();
  report.metadata["dataset"] = data.description;
  report.metadata["cases"] = std::to_string(data.cases.size());
  report.metadata["revision"] = revision();
  return report;
}

EvalReport evaluate_checkpoint(const std::string& checkpoint, const std::string& data_spec,
                               int max_distance) {
  Checkpoint info;
  const DfmModel model = load_checkpoint(checkpoint, &info);
  const auto size_it = info.metadata.find("input_size");
  if (size_it == info.metadata.end()) {
    throw std::runtime_error(checkpoint + ": missing input_size metadata");
  }
  const int size = std::stoi(size_it->second);
  const auto names_it = info.metadata.find("class_names");
  const ClassNames names = names_it == info.metadata.end() ? ClassNames{}
                                                           : ClassNames::parse(names_it->second);
  const Dataset data = load_dataset(data_spec, size);
  if (data.slice_size() != size) {
    throw std::invalid_argument("dataset slice size " + std::to_string(data.slice_size()) +
                                " does not match checkpoint input size " + std::to_string(size));
  }
  EvalReport report = evaluate(model, data, names, max_distance);
  report.metadata["checkpoint"] = checkpoint;
  for (const char* key : {"config_hash", "seed", "epoch"}) {
    const auto it = info.metadata.find(key);
    if (it != info.metadata.end()) report.metadata[key] = it->second;
  }
  const auto rev = info.metadata.find("revision");
  if (rev != info.metadata.end()) report.metadata["train_revision"] = rev->second;
  return report;
}

std::string EvalReport::summary_csv() const {
  std::ostringstream out;
  out << "structure,dice,hausdorff_mm,hd_missing_cases\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r].structure << ',' << fmt_double(rows[r].dice) << ','
        << fmt_optional(rows[r].hausdorff_mm) << ',' << hd_missing[r] << '\n';
  }
  out << "Mean," << fmt_double(mean.dice) << ',' << fmt_optional(mean.hausdorff_mm) << ",\n";
  return out.str();
}

std::string EvalReport::per_case_csv() const {
  std::ostringstream out;
  out << "case_id,structure,dice,hd_mm\n";
  for (const auto& [id, rs] : per_case) {
    for (const auto& r : rs) {
      out << id << ',' << r.structure << ',' << fmt_double(r.dice) << ','
          << fmt_optional(r.hausdorff_mm) << '\n';
    }
  }
  return out.str();
}

std::string EvalReport::stratified_csv() const {
  std::ostringstream out;
  out << "head,distance,accuracy,pixels\n";
  const std::pair<const char*, const StratifiedAccuracy*> heads[] = {{"final", &final_head},
                                                                     {"initial", &initial_head}};
  for (const auto& [name, s] : heads) {
    for (std::size_t i = 0; i < s->distances.size(); ++i) {
      out << name << ',' << s->distances[i] << ',' << fmt_double(s->accuracy[i]) << ','
          << s->counts[i] << '\n';
    }
  }
  return out.str();
}

void write_report(const EvalReport& report, const std::string& dir) {
  fs::create_directories(dir);
  write_text(fs::path(dir) / "eval_summary.csv", report.summary_csv());
  write_text(fs::path(dir) / "eval_cases.csv", report.per_case_csv());
  write_text(fs::path(dir) / "stratified.csv", report.stratified_csv());
  std::ostringstream meta;
  for (const auto& [k, v] : report.metadata) meta << k << " = " << v << '\n';
  write_text(fs::path(dir) / "eval_meta.txt", meta.str());

  auto series = [](const StratifiedAccuracy& s, std::array<std::uint8_t, 3> color) {
    PlotSeries p;
    p.color = color;
    for (std::size_t i = 0; i < s.distances.size(); ++i) {
      p.x.push_back(s.distances[i]);
      p.y.push_back(s.accuracy[i]);
    }
    return p;
  };
  if (!report.final_head.distances.empty()) {
    write_png((fs::path(dir) / "stratified.png").string(),
              render_line_plot({series(report.final_head, {200, 30, 30}),
                                series(report.initial_head, {30, 60, 200})}));
  }
}

std::vector<AblationRow> ablate_steps(const TrainConfig& cfg, const std::vector<int>& steps) {
  if (steps.empty()) throw std::invalid_argument("step list is empty");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 0) throw std::invalid_argument("step counts must be >= 0");
    for (std::size_t j = 0; j < i; ++j) {
      if (steps[i] == steps[j]) throw std::invalid_argument("step counts must be distinct");
    }
  }
  cfg.validate();
  const TrainSplit data = load_training_data(cfg);
  const ClassNames names = ClassNames::parse(cfg.class_names);
  std::vector<AblationRow> rows;
  for (int n : steps) {
    TrainConfig run = cfg;
    run.frf_steps = n;
    run.output_dir = (fs::path(cfg.output_dir) / ("steps_" + std::to_string(n))).string();
    spdlog::info("ablation: N = {}", n);
    const TrainResult tr = train(run, data);
    const EvalReport report = evaluate(load_checkpoint(tr.best_checkpoint), data.val, names,
                                       cfg.max_distance);
    write_report(report, run.output_dir);
    rows.push_back({n, report.mean.dice, report.mean.hausdorff_mm});
  }
  std::ostringstream csv;
  csv << "steps,mean_dice,mean_hd_mm\n";
  for (const auto& r : rows) {
    csv << r.steps << ',' << fmt_double(r.mean_dice) << ',' << fmt_optional(r.mean_hd) << '\n';
  }
  fs::create_directories(cfg.output_dir);
  write_text(fs::path(cfg.output_dir) / "ablation.csv", csv.str());
  return rows;
}

}  // namespace dfm

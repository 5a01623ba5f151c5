#include "dfm/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dfm {
namespace {

Tensor slice_sample(const Tensor& batch, int n) {
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  const std::size_t count = static_cast<std::size_t>(c) * h * w;
  std::vector<float> values(batch.data() + n * count, batch.data() + (n + 1) * count);
  return Tensor({c, h, w}, std::move(values));
}

void store_sample(Tensor& batch, int n, const Tensor& sample) {
  std::memcpy(batch.data() + n * sample.size(), sample.data(), sample.size() * sizeof(float));
}

void add_into(Tensor& acc, const Tensor& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

// Applies FRF + fusion to each sample of the batch.
Tensor rectify_and_fuse(const Tensor& features, const Tensor& field, int steps) {
  const int n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
  Tensor fused({n, 2 * c, h, w});
  const FrfConfig frf{steps};
  for (int i = 0; i < n; ++i) {
    const Tensor f0 = slice_sample(features, i);
    const DirectionField df(slice_sample(field, i));
    store_sample(fused, i, frf_fuse(f0, frf_rectify(f0, df, frf)));
  }
  return fused;
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("in_channels must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (frf_steps < 0) throw std::invalid_argument("frf_steps must be >= 0");
}

DfmModel::DfmModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int b = cfg_.base_channels;
  inc_ = DoubleConv("enc.inc", cfg_.in_channels, b);
  for (int l = 1; l <= cfg_.depth; ++l) {
    pools_.emplace_back();
    downs_.emplace_back("enc.down" + std::to_string(l), b << (l - 1), b << l);
  }
  for (int l = 1; l <= cfg_.depth; ++l) {
    const std::string name = "dec.up" + std::to_string(l);
    ups_.push_back(UpStage{Conv2d(name + ".reduce", b << l, b << (l - 1), 1, true),
                           DoubleConv(name + ".block", b << l, b << (l - 1)),
                           {}});
  }
  seg_head_ = Conv2d("head.seg", b, cfg_.num_classes, 1, true);
  df_head_ = Conv2d("head.df", b, 2, 1, true);
  final_head_ = Conv2d("head.final", 2 * b, cfg_.num_classes, 1, true);

  std::mt19937_64 rng(seed);
  inc_.init_he(rng);
  for (auto& d : downs_) d.init_he(rng);
  for (auto& u : ups_) {
    u.reduce.init_he(rng);
    u.block.init_he(rng);
  }
  seg_head_.init_he(rng);
  df_head_.init_he(rng);
  final_head_.init_he(rng);
}

DfmModel build_model(const ModelConfig& cfg, std::uint64_t seed) { return DfmModel(cfg, seed); }

void DfmModel::check_input(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != cfg_.in_channels) {
    throw std::invalid_argument("model input must be Nx" + std::to_string(cfg_.in_channels) +
                                "xHxW, got " + images.shape_string());
  }
  const int m = cfg_.size_multiple();
  if (images.dim(2) % m != 0 || images.dim(3) % m != 0) {
    throw std::invalid_argument("input height and width must be divisible by 2^depth = " +
                                std::to_string(m) + ", got " + images.shape_string());
  }
}

ModelOutputs DfmModel::forward(const Tensor& images) {
  check_input(images);
  std::vector<Tensor> skips;
  skips.reserve(static_cast<std::size_t>(cfg_.depth) + 1);
  skips.push_back(inc_.forward(images));
  for (int l = 1; l <= cfg_.depth; ++l) {
    const auto li = static_cast<std::size_t>(l - 1);
    skips.push_back(downs_[li].forward(pools_[li].forward(skips.back())));
  }
  Tensor x = skips.back();
  for (int l = cfg_.depth; l >= 1; --l) {
    UpStage& up = ups_[static_cast<std::size_t>(l - 1)];
    up.in_shape = x.shape();
    const Tensor reduced = up.reduce.forward(upsample2x(x));
    x = up.block.forward(concat_channels(skips[static_cast<std::size_t>(l - 1)], reduced));
  }

  ModelOutputs out;
  out.features = x;
  out.initial_logits = seg_head_.forward(x);
  out.direction_field = df_head_.forward(x);
  out.final_logits =
      final_head_.forward(rectify_and_fuse(x, out.direction_field, cfg_.frf_steps));
  features_ = out.features;
  field_ = out.direction_field;
  return out;
}

ModelOutputs DfmModel::predict(const Tensor& images) const {
  if (images.rank() == 3) {
    Tensor batch = images;
    batch.reshape({1, images.dim(0), images.dim(1), images.dim(2)});
    return predict(batch);
  }
  check_input(images);
  std::vector<Tensor> skips;
  skips.push_back(inc_.infer(images));
  for (int l = 1; l <= cfg_.depth; ++l) {
    skips.push_back(downs_[static_cast<std::size_t>(l - 1)].infer(MaxPool2x2::infer(skips.back())));
  }
  Tensor x = skips.back();
  for (int l = cfg_.depth; l >= 1; --l) {
    const UpStage& up = ups_[static_cast<std::size_t>(l - 1)];
    const Tensor reduced = up.reduce.infer(upsample2x(x));
    x = up.block.infer(concat_channels(skips[static_cast<std::size_t>(l - 1)], reduced));
  }
  ModelOutputs out;
  out.features = x;
  out.initial_logits = seg_head_.infer(x);
  out.direction_field = df_head_.infer(x);
  out.final_logits =
      final_head_.infer(rectify_and_fuse(x, out.direction_field, cfg_.frf_steps));
  return out;
}

void DfmModel::backward(const OutputGrads& grads) {
  if (features_.empty()) throw std::logic_error("backward() called before forward()");
  const int n = features_.dim(0), c = features_.dim(1);

  Tensor g_features(features_.shape());
  Tensor g_field(field_.shape());
  if (!grads.direction_field.empty()) g_field = grads.direction_field;

  if (!grads.final_logits.empty()) {
    const Tensor g_fused = final_head_.backward(grads.final_logits);
    Tensor g_rectified, g_original;
    split_channels(g_fused, c, g_rectified, g_original);
    add_into(g_features, g_original);
    const FrfConfig frf{cfg_.frf_steps};
    for (int i = 0; i < n; ++i) {
      const DirectionField df(slice_sample(field_, i));
      const FrfGrad fg =
          frf_rectify_backward(slice_sample(features_, i), df, frf, slice_sample(g_rectified, i));
      const std::size_t fo = static_cast<std::size_t>(i) * fg.features.size();
      for (std::size_t k = 0; k < fg.features.size(); ++k) g_features[fo + k] += fg.features[k];
      const std::size_t go = static_cast<std::size_t>(i) * fg.field.size();
      for (std::size_t k = 0; k < fg.field.size(); ++k) g_field[go + k] += fg.field[k];
    }
  }
  if (!grads.initial_logits.empty()) add_into(g_features, seg_head_.backward(grads.initial_logits));
  add_into(g_features, df_head_.backward(g_field));

  // Decoder, top level first.
  std::vector<Tensor> skip_grads(static_cast<std::size_t>(cfg_.depth));
  Tensor g = std::move(g_features);
  for (int l = 1; l <= cfg_.depth; ++l) {
    UpStage& up = ups_[static_cast<std::size_t>(l - 1)];
    const Tensor g_cat = up.block.backward(g);
    const int skip_channels = cfg_.base_channels << (l - 1);
    Tensor g_skip, g_reduced;
    split_channels(g_cat, skip_channels, g_skip, g_reduced);
    skip_grads[static_cast<std::size_t>(l - 1)] = std::move(g_skip);
    g = upsample2x_backward(up.reduce.backward(g_reduced), up.in_shape);
  }
  // Encoder, bottom level first.
  for (int l = cfg_.depth; l >= 1; --l) {
    const auto li = static_cast<std::size_t>(l - 1);
    g = pools_[li].backward(downs_[li].backward(g));
    add_into(g, skip_grads[li]);
  }
  inc_.backward(g);
}

void DfmModel::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0f);
}

std::vector<Parameter*> DfmModel::parameters() {
  std::vector<Parameter*> params;
  inc_.collect(params);
  for (auto& d : downs_) d.collect(params);
  for (auto& u : ups_) {
    u.reduce.collect(params);
    u.block.collect(params);
  }
  seg_head_.collect(params);
  df_head_.collect(params);
  final_head_.collect(params);
  return params;
}

std::vector<Buffer*> DfmModel::buffers() {
  std::vector<Buffer*> bufs;
  inc_.collect(bufs);
  for (auto& d : downs_) d.collect(bufs);
  for (auto& u : ups_) u.block.collect(bufs);
  return bufs;
}

std::size_t DfmModel::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
}

void Adam::step(const std::vector<Parameter*>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double step = lr_ * std::sqrt(c2) / c1;
  for (Parameter* p : params) {
    auto& [m, v] = state_[p];
    if (m.empty()) {
      m.assign(p->value.size(), 0.0f);
      v.assign(p->value.size(), 0.0f);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g);
      v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
      p->value[i] -= static_cast<float>(step * m[i] / (std::sqrt(static_cast<double>(v[i])) +
                                                       eps_ * std::sqrt(c2)));
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointMagic = "DFM-CKPT v1";

std::uint32_t le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  os << "tensor " << name << ' ' << t.rank();
  for (int d : t.shape()) os << ' ' << d;
  os << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::uint32_t bits = le32(std::bit_cast<std::uint32_t>(t[i]));
    os.write(reinterpret_cast<const char*>(&bits), 4);
  }
}

std::string config_document(const ModelConfig& cfg,
                            const std::map<std::string, std::string>& metadata) {
  std::ostringstream doc;
  doc << "format_version = 1\n";
  doc << "model.in_channels = " << cfg.in_channels << '\n';
  doc << "model.num_classes = " << cfg.num_classes << '\n';
  doc << "model.base_channels = " << cfg.base_channels << '\n';
  doc << "model.depth = " << cfg.depth << '\n';
  doc << "model.frf_steps = " << cfg.frf_steps << '\n';
  for (const auto& [k, v] : metadata) {
    if (v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata values must be single-line");
    }
    doc << "meta." << k << " = " << v << '\n';
  }
  return doc.str();
}

int parse_int(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  const int v = std::stoi(value, &pos);
  if (pos != value.size()) throw std::runtime_error("checkpoint: bad integer for " + key);
  return v;
}

Checkpoint parse_config_document(const std::string& doc) {
  Checkpoint ck;
  bool have_version = false;
  int seen = 0;
  std::istringstream is(doc);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "format_version") {
      if (value != "1") throw std::runtime_error("checkpoint: unsupported format_version " + value);
      have_version = true;
    } else if (key == "model.in_channels") {
      ck.config.in_channels = parse_int(key, value), ++seen;
    } else if (key == "model.num_classes") {
      ck.config.num_classes = parse_int(key, value), ++seen;
    } else if (key == "model.base_channels") {
      ck.config.base_channels = parse_int(key, value), ++seen;
    } else if (key == "model.depth") {
      ck.config.depth = parse_int(key, value), ++seen;
    } else if (key == "model.frf_steps") {
      ck.config.frf_steps = parse_int(key, value), ++seen;
    } else if (key.rfind("meta.", 0) == 0) {
      ck.metadata[key.substr(5)] = value;
    } else {
      throw std::runtime_error("checkpoint: unknown key '" + key + "'");
    }
  }
  if (!have_version || seen != 5) throw std::runtime_error("checkpoint: incomplete model config");
  ck.config.validate();
  return ck;
}

}  // namespace

void save_checkpoint(const std::string& path, DfmModel& model,
                     const std::map<std::string, std::string>& metadata) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string doc = config_document(model.config(), metadata);
  os << kCheckpointMagic << '\n' << "config " << doc.size() << '\n' << doc;
  for (Parameter* p : model.parameters()) write_tensor(os, p->name, p->value);
  for (Buffer* b : model.buffers()) write_tensor(os, b->name, b->value);
  os << "end\n";
  if (!os) throw std::runtime_error("failed writing checkpoint " + path);
}

DfmModel load_checkpoint(const std::string& path, Checkpoint* info) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic) {
    throw std::runtime_error(path + ": not a DFM checkpoint");
  }
  std::string tag;
  std::size_t doc_size = 0;
  if (!std::getline(is, line)) throw std::runtime_error(path + ": truncated checkpoint");
  std::istringstream(line) >> tag >> doc_size;
  if (tag != "config") throw std::runtime_error(path + ": missing config section");
  std::string doc(doc_size, '\0');
  if (!is.read(doc.data(), static_cast<std::streamsize>(doc_size))) {
    throw std::runtime_error(path + ": truncated config section");
  }
  const Checkpoint ck = parse_config_document(doc);
  DfmModel model(ck.config, 0);

  std::map<std::string, Tensor*> slots;
  for (Parameter* p : model.parameters()) slots[p->name] = &p->value;
  for (Buffer* b : model.buffers()) slots[b->name] = &b->value;
  std::size_t restored = 0;
  while (std::getline(is, line)) {
    if (line == "end") break;
    std::istringstream hs(line);
    std::string name;
    int rank = 0;
    hs >> tag >> name >> rank;
    if (tag != "tensor" || rank < 1 || rank > 4) {
      throw std::runtime_error(path + ": malformed tensor header '" + line + "'");
    }
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int& d : shape) hs >> d;
    auto it = slots.find(name);
    if (it == slots.end()) throw std::runtime_error(path + ": unexpected tensor " + name);
    if (it->second->shape() != shape) {
      throw std::runtime_error(path + ": shape mismatch for " + name);
    }
    for (std::size_t i = 0; i < it->second->size(); ++i) {
      std::uint32_t bits = 0;
      if (!is.read(reinterpret_cast<char*>(&bits), 4)) {
        throw std::runtime_error(path + ": truncated tensor " + name);
      }
      (*it->second)[i] = std::bit_cast<float>(le32(bits));
    }
    ++restored;
  }
  if (line != "end" || restored != slots.size()) {
    throw std::runtime_error(path + ": checkpoint is missing tensors");
  }
  if (info) *info = ck;
  return model;
}

}  // namespace dfm

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "dfm/layers.hpp"
#include "dfm/losses.hpp"
#include "dfm/model.hpp"
#include "oracles.hpp"

using namespace dfm;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::vector<int> shape, float sd = 1.0f) {
  std::normal_distribution<float> n(0.0f, sd);
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = n(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// Central difference of f w.r.t. t[i], using the step float storage realized.
double numeric_grad(Tensor& t, std::size_t i, double step, const std::function<double()>& f) {
  const float orig = t[i];
  t[i] = static_cast<float>(orig + step);
  const double hi_v = t[i];
  const double up = f();
  t[i] = static_cast<float>(orig - step);
  const double lo_v = t[i];
  const double down = f();
  t[i] = orig;
  return (up - down) / (hi_v - lo_v);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("dfm_test_" + name)).string();
}

}  // namespace

TEST(Layers, ConvGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int kernel : {1, 3}) {
    Conv2d conv("c", 3, 4, kernel, true);
    conv.init_he(rng);
    Tensor x = random_tensor(rng, {2, 3, 5, 6});
    const Tensor r = random_tensor(rng, {2, 4, 5, 6});
    conv.forward(x);
    const Tensor gx = conv.backward(r);
    auto loss = [&] { return dot(conv.infer(x), r); };
    std::vector<double> a, n;
    for (std::size_t i = 0; i < x.size(); i += 7) {
      n.push_back(numeric_grad(x, i, 1e-2, loss));
      a.push_back(gx[i]);
    }
    for (std::size_t i = 0; i < conv.weight().value.size(); i += 5) {
      n.push_back(numeric_grad(conv.weight().value, i, 1e-2, loss));
      a.push_back(conv.weight().grad[i]);
    }
    for (std::size_t i = 0; i < conv.bias().value.size(); ++i) {
      n.push_back(numeric_grad(conv.bias().value, i, 1e-2, loss));
      a.push_back(conv.bias().grad[i]);
    }
    EXPECT_LT(oracle::max_relative_error(a, n, 1e-2), 1e-3) << "kernel " << kernel;
  }
}

TEST(Layers, BatchNormGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  BatchNorm2d bn("bn", 3);
  Tensor x = random_tensor(rng, {4, 3, 3, 3}, 2.0f);
  const Tensor r = random_tensor(rng, {4, 3, 3, 3});
  bn.forward(x);
  const Tensor gx = bn.backward(r);
  // Training-mode output as a function of x (running statistics untouched).
  auto loss = [&] {
    BatchNorm2d fresh("bn", 3);
    return dot(fresh.forward(x), r);
  };
  std::vector<double> a, n;
  for (std::size_t i = 0; i < x.size(); i += 3) {
    n.push_back(numeric_grad(x, i, 1e-2, loss));
    a.push_back(gx[i]);
  }
  EXPECT_LT(oracle::max_relative_error(a, n, 1e-2), 2e-2);
}

TEST(Layers, BatchNormInferenceUsesRunningStatistics) {
  std::mt19937_64 rng(3);
  BatchNorm2d bn("bn", 2);
  const Tensor x = random_tensor(rng, {3, 2, 2, 2});
  const Tensor fresh = bn.infer(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fresh[i], x[i] / std::sqrt(1.0f + 1e-5f), 1e-6);
  bn.forward(x);
  const Tensor after = bn.infer(x);
  bool changed = false;
  for (std::size_t i = 0; i < x.size(); ++i) changed |= after[i] != fresh[i];
  EXPECT_TRUE(changed);
}

TEST(Layers, PoolUpsampleConcatGradients) {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor(rng, {1, 2, 4, 6});
  const Tensor r_pool = random_tensor(rng, {1, 2, 2, 3});
  MaxPool2x2 pool;
  pool.forward(x);
  const Tensor gp = pool.backward(r_pool);
  const Tensor r_up = random_tensor(rng, {1, 2, 8, 12});
  const Tensor gu = upsample2x_backward(r_up, x.shape());
  std::vector<double> a, n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    n.push_back(numeric_grad(x, i, 1e-3, [&] { return dot(MaxPool2x2::infer(x), r_pool); }));
    a.push_back(gp[i]);
    n.push_back(numeric_grad(x, i, 1e-2, [&] { return dot(upsample2x(x), r_up); }));
    a.push_back(gu[i]);
  }
  EXPECT_LT(oracle::max_relative_error(a, n, 1e-2), 1e-3);

  const Tensor y = random_tensor(rng, {1, 3, 4, 6});
  const Tensor cat = concat_channels(x, y);
  EXPECT_EQ(cat.shape(), (std::vector<int>{1, 5, 4, 6}));
  Tensor ga, gb;
  split_channels(cat, 2, ga, gb);
  EXPECT_TRUE(std::equal(ga.values().begin(), ga.values().end(), x.values().begin()));
  EXPECT_TRUE(std::equal(gb.values().begin(), gb.values().end(), y.values().begin()));
  EXPECT_THROW(MaxPool2x2::infer(Tensor({1, 1, 3, 4})), std::invalid_argument);
}

TEST(Layers, UpsampleMatchesHalfPixelBilinear) {
  const Tensor x({1, 1, 1, 2}, std::vector<float>{0, 4});
  const Tensor up = upsample2x(x);
  ASSERT_EQ(up.shape(), (std::vector<int>{1, 1, 2, 4}));
  const std::vector<float> want{0, 1, 3, 4};
  for (int i = 0; i < 4; ++i) {
    EXPECT_FLOAT_EQ(up[i], want[i]);
    EXPECT_FLOAT_EQ(up[4 + i], want[i]);
  }
}

TEST(ModelConfig, DefaultsAndValidation) {
  const ModelConfig cfg;
  EXPECT_EQ(cfg.base_channels, 64);
  EXPECT_EQ(cfg.depth, 4);
  EXPECT_EQ(cfg.num_classes, 4);
  EXPECT_EQ(cfg.frf_steps, 5);
  ModelConfig bad = cfg;
  bad.num_classes = 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.base_channels = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.depth = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.frf_steps = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Model, DirectionHeadHas130Parameters) {
  ModelConfig cfg;
  cfg.depth = 1;
  DfmModel model = build_model(cfg, 0);
  std::size_t df_params = 0;
  for (Parameter* p : model.parameters()) {
    if (p->name.rfind("head.df", 0) == 0) df_params += p->value.size();
  }
  EXPECT_EQ(df_params, 130u);
}

TEST(Model, FullScaleShapes) {
  DfmModel model = build_model(ModelConfig{}, 0);
  const ModelOutputs out = model.predict(Tensor({1, 256, 256}));
  EXPECT_EQ(out.features.shape(), (std::vector<int>{1, 64, 256, 256}));
  EXPECT_EQ(out.initial_logits.shape(), (std::vector<int>{1, 4, 256, 256}));
  EXPECT_EQ(out.direction_field.shape(), (std::vector<int>{1, 2, 256, 256}));
  EXPECT_EQ(out.final_logits.shape(), (std::vector<int>{1, 4, 256, 256}));
}

TEST(Model, ShapesFollowInputAndDivisibilityIsEnforced) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.depth = 2;
  DfmModel model(cfg, 1);
  for (auto [h, w] : {std::pair{8, 8}, {12, 20}, {4, 16}}) {
    const ModelOutputs out = model.forward(Tensor({2, 1, h, w}));
    EXPECT_EQ(out.final_logits.shape(), (std::vector<int>{2, 4, h, w}));
    EXPECT_EQ(out.direction_field.shape(), (std::vector<int>{2, 2, h, w}));
  }
  try {
    model.predict(Tensor({1, 1, 10, 8}));
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("divisible by 2^depth = 4"), std::string::npos);
  }
}

TEST(Model, SameSeedSameParametersAndOutputs) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.depth = 2;
  DfmModel a(cfg, 7), b(cfg, 7), c(cfg, 8);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i]->value.values().begin(), pa[i]->value.values().end(),
                           pb[i]->value.values().begin()));
    differs |= !std::equal(pa[i]->value.values().begin(), pa[i]->value.values().end(),
                           pc[i]->value.values().begin());
  }
  EXPECT_TRUE(differs);
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor(rng, {2, 1, 8, 8});
  const ModelOutputs o1 = a.forward(x);
  const ModelOutputs o2 = b.forward(x);
  EXPECT_TRUE(std::equal(o1.final_logits.values().begin(), o1.final_logits.values().end(),
                         o2.final_logits.values().begin()));
}

TEST(Model, EveryParameterGroupReceivesGradient) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 2;
    DfmModel model(cfg, seed);
    std::mt19937_64 rng(seed);
    const Tensor x = random_tensor(rng, {2, 1, 8, 8});
    const ModelOutputs out = model.forward(x);
    OutputGrads g{random_tensor(rng, out.initial_logits.shape()),
                  random_tensor(rng, out.direction_field.shape()),
                  random_tensor(rng, out.final_logits.shape())};
    model.zero_grad();
    model.backward(g);
    for (Parameter* p : model.parameters()) {
      double norm = 0.0;
      for (float v : p->grad.values()) norm += std::fabs(v);
      EXPECT_GT(norm, 0.0) << p->name << " seed " << seed;
    }
  }
}

TEST(Model, DirectionHeadWeightHasNonzeroFiniteDifference) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.depth = 1;
  cfg.frf_steps = 2;
  DfmModel model(cfg, 5);
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(rng, {1, 1, 8, 8});
  const Tensor r = random_tensor(rng, {1, 4, 8, 8});
  // Only the final logits depend on the field (through the rectification).
  Parameter* w = nullptr;
  for (Parameter* p : model.parameters())
    if (p->name == "head.df.weight") w = p;
  ASSERT_NE(w, nullptr);
  auto loss = [&] { return dot(model.predict(x).final_logits, r); };
  double max_abs = 0.0;
  for (std::size_t i = 0; i < w->value.size(); ++i) {
    max_abs = std::max(max_abs, std::fabs(numeric_grad(w->value, i, 1e-2, loss)));
  }
  EXPECT_GT(max_abs, 1e-4);
}

TEST(Model, BaselineWithoutRectificationStillTrains) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.depth = 1;
  cfg.frf_steps = 0;
  DfmModel model(cfg, 3);
  Adam adam(1e-2);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {2, 1, 8, 8});
  LabelMask gt(8, 8, 3);
  for (int y = 2; y < 6; ++y)
    for (int xx = 2; xx < 6; ++xx) gt.set(y, xx, 3);
  auto step_loss = [&] {
    model.zero_grad();
    const ModelOutputs out = model.forward(x);
    OutputGrads g{Tensor(out.initial_logits.shape()), {}, Tensor(out.final_logits.shape())};
    double total = 0.0;
    for (int n = 0; n < 2; ++n) {
      Tensor logits({4, 8, 8});
      std::copy_n(out.final_logits.data() + n * 256, 256, logits.data());
      const LossGrad ce = cross_entropy_with_grad(logits, gt);
      std::copy_n(ce.grad.data(), 256, g.final_logits.data() + n * 256);
      total += ce.value;
    }
    model.backward(g);
    adam.step(model.parameters());
    return total;
  };
  const double first = step_loss();
  double last = first;
  for (int i = 0; i < 30; ++i) last = step_loss();
  EXPECT_LT(last, 0.5 * first);
}

TEST(Adam, FirstStepMovesEachWeightByTheLearningRate) {
  Parameter p{"p", Tensor({3}, std::vector<float>{1, -2, 3}), Tensor({3}, std::vector<float>{0.5f, -4, 1e-3f})};
  Adam adam(0.1);
  adam.step({&p});
  EXPECT_NEAR(p.value[0], 0.9, 1e-6);
  EXPECT_NEAR(p.value[1], -1.9, 1e-6);
  EXPECT_NEAR(p.value[2], 2.9, 1e-4);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Checkpoint, RoundTripRestoresOutputsBitwise) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.depth = 2;
  cfg.frf_steps = 3;
  DfmModel model(cfg, 11);
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor(rng, {2, 1, 8, 8});
  model.forward(x);  // moves the running statistics
  const std::string path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, model, {{"note", "hello"}});
  Checkpoint info;
  const DfmModel back = load_checkpoint(path, &info);
  EXPECT_EQ(info.config, cfg);
  EXPECT_EQ(info.metadata.at("note"), "hello");
  const ModelOutputs a = model.predict(x);
  const ModelOutputs b = back.predict(x);
  EXPECT_TRUE(std::equal(a.final_logits.values().begin(), a.final_logits.values().end(),
                         b.final_logits.values().begin()));
  EXPECT_TRUE(std::equal(a.direction_field.values().begin(), a.direction_field.values().end(),
                         b.direction_field.values().begin()));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.depth = 1;
  DfmModel model(cfg, 0);
  const std::string path = temp_path("corrupt.ckpt");
  save_checkpoint(path, model, {});
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) { std::ofstream(path, std::ios::binary) << b; };

  write(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  write("not a checkpoint\n");
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::string renamed = bytes;
  renamed.replace(renamed.find("head.df.weight"), 14, "head.dx.weight");
  write(renamed);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::string wrong = bytes;
  wrong.replace(wrong.find("model.base_channels = 2"), 23, "model.base_channels = 3");
  write(wrong);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  EXPECT_THROW(load_checkpoint(temp_path("missing.ckpt")), std::runtime_error);
  std::filesystem::remove(path);
}

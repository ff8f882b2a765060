#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "roa/errors.hpp"
#include "roa/trainer.hpp"

using namespace roa;

namespace {

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (Index i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.input_height = 128;
  cfg.input_width = 352;
  cfg.base_channels = 4;
  cfg.fpn_channels = 8;
  cfg.roa_channels = 4;
  cfg.kernel_size = 3;
  cfg.se_reduction = 2;
  cfg.aspp_dilations = {1, 2};
  return cfg;
}

TrainOptions tiny_options() {
  TrainOptions o;
  o.model = tiny_model();
  o.adam.lr = 1e-2;
  return o;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("roa_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(RoaLoss, EqualMapsGiveZero) {
  const auto a = random_tensor({6, 1, 16, 44}, 1);
  EXPECT_EQ(roa_loss(a, a), 0.0);
}

TEST(RoaLoss, ZerosAgainstOnes) {
  Tensor<double> zeros({6, 1, 16, 44}), ones({6, 1, 16, 44});
  ones.fill(1.0);
  EXPECT_DOUBLE_EQ(roa_loss(zeros, ones), 1.0);
  EXPECT_DOUBLE_EQ(roa_loss(zeros, ones, Reduction::kSum), 6.0 * 16 * 44);
}

TEST(RoaLoss, MatchesLoop) {
  const auto p = random_tensor({6, 1, 16, 44}, 2);
  const auto l = random_tensor({6, 1, 16, 44}, 3);
  double sum = 0.0;
  for (Index i = 0; i < p.numel(); ++i) sum += std::abs(p[i] - l[i]);
  EXPECT_NEAR(roa_loss(p, l), sum / static_cast<double>(p.numel()), 1e-9);
  EXPECT_NEAR(roa_loss(p, l, Reduction::kSum), sum, 1e-9);
}

TEST(RoaLoss, ShapeMismatch) {
  Tensor<double> a({6, 1, 16, 44}), b({6, 1, 16, 43});
  EXPECT_THROW(roa_loss(a, b), ShapeMismatch);
}

TEST(TotalLoss, Examples) {
  EXPECT_DOUBLE_EQ(total_loss(1, 1, 1).total, 5.0);
  EXPECT_NEAR(total_loss(0.5, 0.2, 0.3).total, 1.4, 1e-12);
  const auto r = total_loss(0.5, 0.2, 0.3);
  EXPECT_EQ(r.l_det, 0.5);
  EXPECT_EQ(r.l_depth, 0.2);
  EXPECT_EQ(r.l_roa, 0.3);
}

TEST(TotalLoss, RejectsNonFinite) {
  EXPECT_THROW(total_loss(std::nan(""), 0, 0), NonFinite);
  EXPECT_THROW(total_loss(0, INFINITY, 0), NonFinite);
  EXPECT_THROW(total_loss(0, 0, -INFINITY), NonFinite);
}

TEST(TotalLoss, LinearInEachTerm) {
  const LossWeights w{2.5, 0.75};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng), s = u(rng);
    const double base = total_loss(a, b, c, w).total;
    EXPECT_NEAR(total_loss(a + s, b, c, w).total - base, s, 1e-9);
    EXPECT_NEAR(total_loss(a, b + s, c, w).total - base, 2.5 * s, 1e-9);
    EXPECT_NEAR(total_loss(a, b, c + s, w).total - base, 0.75 * s, 1e-9);
  }
  EXPECT_THROW(LossWeights({-1.0, 1.0}).validate(), InvalidArgument);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Tensor<double> p = random_tensor({3, 4}, 5, -1, 1), m({3, 4}), v({3, 4});
  const Tensor<double> before = p, g({3, 4});
  for (int step = 1; step <= 5; ++step) adam_update(p, g, m, v, step, {});
  for (Index i = 0; i < p.numel(); ++i) EXPECT_EQ(p[i], before[i]);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g/|g| (up to eps).
  Tensor<double> p({2}), m({2}), v({2}), g({2});
  p[0] = 1.0, p[1] = -2.0;
  g[0] = 0.3, g[1] = -7.0;
  adam_update(p, g, m, v, 1, AdamOptions{0.01, 0.9, 0.999, 1e-8});
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-9);
}

TEST(Adam, MinimizesQuadratic) {
  ParameterStore<double> store(1);
  store.get_or_init("x", {1}, Init::kZero, true)[0] = 1.0;
  AdamState<double> state;
  for (int i = 0; i < 200; ++i) {
    Tensor<double> g({1});
    g[0] = 2.0 * store.at("x")[0];
    optimizer_step(store, {{"x", g}}, state, AdamOptions{0.1});
  }
  EXPECT_EQ(state.step, 200);
  EXPECT_LT(std::abs(store.at("x")[0]), 1e-3);
}

TEST(Adam, RejectsBadGradients) {
  ParameterStore<double> store(1);
  store.get_or_init("w", {2, 2}, Init::kOne, true);
  store.get_or_init("running_mean", {2}, Init::kZero, false);
  AdamState<double> state;
  EXPECT_THROW(optimizer_step(store, {{"w", Tensor<double>({4})}}, state), ShapeMismatch);
  EXPECT_THROW(optimizer_step(store, {{"missing", Tensor<double>({1})}}, state), InvalidArgument);
  EXPECT_THROW(optimizer_step(store, {{"running_mean", Tensor<double>({2})}}, state), InvalidArgument);
  EXPECT_EQ(state.step, 0);
  EXPECT_EQ(store.at("w")[0], 1.0);
}

TEST(MakeBatch, ShapesAndLabels) {
  const Scene scene = gen_synthetic(3, 20);
  const auto batch = make_batch(scene, tiny_model());
  EXPECT_EQ(batch.images.shape(), (Shape{6, 3, 128, 352}));
  EXPECT_EQ(batch.labels.shape(), (Shape{6, 1, 8, 22}));
  double total = 0.0;
  for (Index i = 0; i < batch.labels.numel(); ++i) {
    EXPECT_GE(batch.labels[i], 0.0f);
    total += batch.labels[i];
  }
  EXPECT_GT(total, 0.0);
}

TEST(Trainer, ZeroStepsChangesNothing) {
  Trainer a({gen_synthetic(1, 10)}, tiny_options());
  Trainer b({gen_synthetic(1, 10)}, tiny_options());
  EXPECT_TRUE(a.run(0).empty());
  ASSERT_EQ(a.store().entries().size(), b.store().entries().size());
  EXPECT_GT(a.store().count(), 0);
  for (const auto& [name, e] : a.store().entries()) {
    const auto& other = b.store().at(name);
    for (Index i = 0; i < e.value.numel(); ++i) ASSERT_EQ(e.value[i], other[i]) << name;
  }
}

TEST(Trainer, DeterministicAndLearning) {
  Trainer a({gen_synthetic(1, 10)}, tiny_options());
  Trainer b({gen_synthetic(1, 10)}, tiny_options());
  const auto ca = a.run(4), cb = b.run(4);
  for (std::size_t i = 0; i < ca.size(); ++i) {
    EXPECT_EQ(ca[i].step, static_cast<std::int64_t>(i));
    EXPECT_EQ(ca[i].l_roa, cb[i].l_roa);
    EXPECT_EQ(ca[i].total, ca[i].l_roa);
  }
  EXPECT_LT(ca.back().l_roa, ca.front().l_roa);
  EXPECT_EQ(a.adam_state().step, 4);
}

TEST(Trainer, ResumeReproducesNextStep) {
  const std::vector<Scene> scenes{gen_synthetic(1, 10), gen_synthetic(2, 10)};
  Trainer straight(scenes, tiny_options());
  straight.run(3);
  const auto dir = temp_dir("resume");
  straight.save_checkpoint(dir);
  const auto expected = straight.run(2);

  TrainOptions other = tiny_options();
  other.model.kernel_size = 5;  // replaced by the stored configuration
  Trainer resumed = Trainer::resume(dir, scenes, other);
  EXPECT_EQ(resumed.options().model.kernel_size, 3);
  EXPECT_EQ(resumed.steps_done(), 3);
  const auto got = resumed.run(2);
  ASSERT_EQ(got.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(got[i].step, expected[i].step);
    EXPECT_EQ(got[i].l_roa, expected[i].l_roa);
  }

  ParameterStore<float> loaded(0);
  const ModelConfig cfg = load_model(dir, loaded);
  EXPECT_EQ(cfg.to_text(), tiny_model().to_text());
  EXPECT_EQ(loaded.count(), straight.store().count());
  std::filesystem::remove_all(dir);
}

TEST(Trainer, ResumeMissingDirectory) {
  EXPECT_THROW(Trainer::resume(temp_dir("absent"), {gen_synthetic(1, 1)}, tiny_options()), IoError);
}

TEST(Trainer, RejectsEmptySceneList) { EXPECT_THROW(Trainer({}, tiny_options()), InvalidArgument); }

TEST(LossCsv, Format) {
  std::ostringstream out;
  write_loss_csv(out, {{0, 0.5, 1.5}, {1, 0.25, 1.25}});
  EXPECT_EQ(out.str(), "step,l_roa,total\n0,0.5,1.5\n1,0.25,1.25\n");
}

TEST(LrSchedule, CosineDecaysToZero) {
  TrainOptions o;
  o.adam.lr = 0.01;
  EXPECT_EQ(scheduled_lr(o, 50), 0.01);
  o.schedule = LrSchedule::kCosine;
  o.schedule_steps = 100;
  EXPECT_DOUBLE_EQ(scheduled_lr(o, 0), 0.01);
  EXPECT_NEAR(scheduled_lr(o, 50), 0.005, 1e-15);
  EXPECT_NEAR(scheduled_lr(o, 100), 0.0, 1e-18);
  EXPECT_NEAR(scheduled_lr(o, 150), 0.0, 1e-18);
  for (int s = 1; s <= 100; ++s) EXPECT_LE(scheduled_lr(o, s), scheduled_lr(o, s - 1));
  EXPECT_EQ(parse_lr_schedule("cosine"), LrSchedule::kCosine);
  EXPECT_THROW(parse_lr_schedule("step"), InvalidArgument);
}

TEST(Trainer, ResumeKeepsSchedule) {
  TrainOptions o = tiny_options();
  o.schedule = LrSchedule::kCosine;
  o.schedule_steps = 4;
  const std::vector<Scene> scenes{gen_synthetic(5, 8)};
  Trainer straight(scenes, o);
  straight.run(2);
  const auto dir = temp_dir("schedule");
  straight.save_checkpoint(dir);
  const auto expected = straight.run(2);
  Trainer resumed = Trainer::resume(dir, scenes, tiny_options());
  EXPECT_EQ(resumed.options().schedule, LrSchedule::kCosine);
  EXPECT_EQ(resumed.options().schedule_steps, 4);
  const auto got = resumed.run(2);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(got[i].l_roa, expected[i].l_roa);
  std::filesystem::remove_all(dir);
}

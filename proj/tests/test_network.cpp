#include <gtest/gtest.h>

#include <cmath>

#include "roa/errors.hpp"
#include "roa/gradient_suite.hpp"
#include "roa/network.hpp"

using namespace roa;

namespace {

ModelConfig small_config(ScaleMode mode = ScaleMode::kMultiScale) {
  ModelConfig cfg;
  cfg.input_height = 64;
  cfg.input_width = 96;
  cfg.base_channels = 4;
  cfg.fpn_channels = 8;
  cfg.roa_channels = 4;
  cfg.kernel_size = 3;
  cfg.se_reduction = 2;
  cfg.aspp_dilations = {1, 2};
  cfg.scale_mode = mode;
  return cfg;
}

struct Outputs {
  std::array<Tensor<double>, 4> levels;
  Tensor<double> fpn, roa, features, loss;
};

Outputs forward(ParameterStore<double>& store, const Tensor<double>& image, const Tensor<double>* labels,
                const ModelConfig& cfg, NormMode mode = NormMode::kEval) {
  Tape<double> tape;
  Scope<double> s(tape, store, mode, false);
  const auto r = full_forward(s, tape.constant(image), labels ? tape.constant(*labels) : Var<double>{}, cfg);
  Outputs o;
  for (int i = 0; i < 4; ++i) o.levels[static_cast<std::size_t>(i)] = r.pyramid.levels[static_cast<std::size_t>(i)].value();
  o.fpn = r.fpn_out.value();
  o.roa = r.roa_pred.value();
  o.features = r.features.value();
  if (r.l_roa.valid()) o.loss = r.l_roa.value();
  return o;
}

Tensor<double> image(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return random_uniform<double>(std::move(s), 0.0, 1.0, rng);
}

}  // namespace

TEST(Backbone, StridesAtPaperResolution) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  ParameterStore<float> store(1);
  Tape<float> tape;
  Scope<float> s(tape, store, NormMode::kEval, false);
  const auto pyr = backbone_forward(s, tape.constant(Tensor<float>({1, 3, 256, 704}, 0.5f)), cfg);
  const Shape want[4] = {{1, 4, 64, 176}, {1, 8, 32, 88}, {1, 16, 16, 44}, {1, 32, 8, 22}};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(pyr.levels[static_cast<std::size_t>(i)].shape(), want[i]);
}

TEST(Backbone, ZeroInputGivesZeroPyramid) {
  ParameterStore<double> store(2);
  const auto o = forward(store, Tensor<double>({2, 3, 64, 96}), nullptr, small_config(), NormMode::kTrain);
  for (const auto& l : o.levels)
    for (double v : l.data()) EXPECT_EQ(v, 0.0);
  for (double v : o.fpn.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, WidthCovariance) {
  ParameterStore<double> store(3);
  const auto cfg = small_config();
  const auto a = forward(store, image({1, 3, 64, 96}, 1), nullptr, cfg);
  const auto b = forward(store, image({1, 3, 64, 192}, 1), nullptr, cfg);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(b.levels[i].dim(3), 2 * a.levels[i].dim(3));
  EXPECT_THROW(forward(store, image({1, 3, 64, 80}, 1), nullptr, cfg), ShapeMismatch);
}

TEST(Fpn, EqualsSumOfResampledLaterals) {
  ParameterStore<double> store(4);
  const auto cfg = small_config();
  const auto img = image({2, 3, 64, 96}, 2);
  const auto o = forward(store, img, nullptr, cfg);
  // Rebuild the fused map from the stored weights with independent pieces.
  Tape<double> tape;
  Var<double> fused;
  for (int level = 0; level < 4; ++level) {
    const std::string p = "fpn.lateral" + std::to_string(level) + ".";
    const auto lat = conv2d(tape.constant(o.levels[level]), tape.constant(store.at(p + "weight")),
                            tape.constant(store.at(p + "bias")), {});
    Var<double> r = lat;
    if (level == 0) r = avg_downsample(lat, 4);
    if (level == 1) r = avg_downsample(lat, 2);
    if (level == 3) r = bilinear_upsample(lat, 2);
    fused = fused.valid() ? add(fused, r) : r;
  }
  const auto want = conv2d(fused, tape.constant(store.at("fpn.out.weight")), tape.constant(store.at("fpn.out.bias")),
                           {1, 1, 1});
  EXPECT_LT(max_abs_diff(o.fpn, want.value()), 1e-12);
  EXPECT_EQ(o.fpn.shape(), (Shape{2, 8, 4, 6}));
}

TEST(RoaHead, ShapeAndNonNegativeInEveryMode) {
  for (ScaleMode mode : {ScaleMode::kSameScale, ScaleMode::kFpnFeature, ScaleMode::kMultiScale}) {
    ParameterStore<double> store(5);
    const auto o = forward(store, image({2, 3, 64, 96}, 3), nullptr, small_config(mode), NormMode::kTrain);
    EXPECT_EQ(o.roa.shape(), (Shape{2, 1, 4, 6})) << to_string(mode);
    for (double v : o.roa.data()) EXPECT_GE(v, 0.0);
    EXPECT_EQ(o.features.shape(), o.fpn.shape());
  }
}

TEST(RoaHead, MultiScaleEqualsPerLevelComposition) {
  ParameterStore<double> store(6);
  const auto cfg = small_config();
  const auto o = forward(store, image({1, 3, 64, 96}, 4), nullptr, cfg);
  Tape<double> tape;
  Scope<double> s(tape, store, NormMode::kEval, false);
  Var<double> total;
  for (int level = 0; level < 4; ++level) {
    const std::string name = "level" + std::to_string(level);
    const std::string p = "roa.proj_" + name + ".";
    const auto proj = conv2d(tape.constant(o.levels[level]), tape.constant(store.at(p + "weight")),
                             tape.constant(store.at(p + "bias")), {});
    Scope<double> lkb = s.sub("roa.lkb_" + name);
    const auto y = resample_to_output(lkb_forward(lkb, proj, cfg.lkb()), level);
    total = total.valid() ? add(total, y) : y;
  }
  const auto head = conv2d(total, tape.constant(store.at("roa.head.weight")), tape.constant(store.at("roa.head.bias")), {});
  Tensor<double> want = head.value();
  for (auto& v : want.data()) v = std::max(v, 0.0);
  EXPECT_LT(max_abs_diff(o.roa, want), 1e-6);
}

TEST(RoaHead, SharedLkbUsesOneSetOfWeights) {
  auto cfg = small_config();
  cfg.shared_lkb = true;
  ParameterStore<double> shared(7), separate(7);
  forward(shared, image({1, 3, 64, 96}, 5), nullptr, cfg);
  cfg.shared_lkb = false;
  forward(separate, image({1, 3, 64, 96}, 5), nullptr, cfg);
  const Index lkb = separate.count(true, "roa.lkb_level0.");
  EXPECT_GT(lkb, 0);
  EXPECT_EQ(shared.count(true, "roa.lkb."), lkb);
  EXPECT_EQ(separate.count() - shared.count(), 3 * lkb);
}

TEST(RoaHead, BackboneAndFpnIdenticalAcrossModes) {
  const auto img = image({1, 3, 64, 96}, 6);
  std::vector<Outputs> outs;
  for (ScaleMode mode : {ScaleMode::kSameScale, ScaleMode::kFpnFeature, ScaleMode::kMultiScale}) {
    ParameterStore<double> store(8);
    outs.push_back(forward(store, img, nullptr, small_config(mode)));
  }
  for (std::size_t m = 1; m < outs.size(); ++m) {
    for (int i = 0; i < 4; ++i) EXPECT_EQ(outs[m].levels[i], outs[0].levels[i]);
    EXPECT_EQ(outs[m].fpn, outs[0].fpn);
  }
}

TEST(Attention, IdentityAnnihilationAndLoop) {
  Tape<double> tape;
  const auto f = image({2, 3, 4, 5}, 7);
  const auto ones = tape.constant(Tensor<double>({2, 1, 4, 5}, 1.0));
  const auto zeros = tape.constant(Tensor<double>({2, 1, 4, 5}, 0.0));
  EXPECT_EQ(apply_attention(tape.constant(f), ones).value(), f);
  for (double v : apply_attention(tape.constant(f), zeros).value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(apply_attention(tape.constant(f), zeros, true).value(), f);

  const auto m = image({2, 1, 4, 5}, 8);
  const auto got = apply_attention(tape.constant(f), tape.constant(m)).value();
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < 4; ++y)
        for (Index x = 0; x < 5; ++x) EXPECT_EQ(got.at(n, c, y, x), f.at(n, c, y, x) * m.at(n, 0, y, x));
  EXPECT_THROW(apply_attention(tape.constant(f), tape.constant(image({2, 1, 4, 4}, 9))), ShapeMismatch);
  EXPECT_THROW(apply_attention(tape.constant(f), tape.constant(image({2, 2, 4, 5}, 9))), ShapeMismatch);
}

TEST(FullForward, DeterministicAndLossOracle) {
  const auto cfg = small_config();
  const auto img = image({2, 3, 64, 96}, 10);
  const auto labels = image({2, 1, 4, 6}, 11);
  ParameterStore<double> s1(cfg.seed), s2(cfg.seed);
  const auto a = forward(s1, img, &labels, cfg, NormMode::kTrain);
  const auto b = forward(s2, img, &labels, cfg, NormMode::kTrain);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.roa, b.roa);

  double mad = 0.0;
  for (Index i = 0; i < labels.numel(); ++i) mad += std::abs(a.roa[i] - labels[i]);
  EXPECT_NEAR(a.loss.item(), mad / static_cast<double>(labels.numel()), 1e-12);

  ParameterStore<double> s3(cfg.seed);
  const auto c = forward(s3, img, &a.roa, cfg, NormMode::kTrain);
  EXPECT_EQ(c.loss.item(), 0.0);
}

TEST(FullForward, PaperResolutionShapeContract) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.fpn_channels = 8;
  cfg.roa_channels = 4;
  cfg.se_reduction = 2;
  cfg.kernel_size = 3;
  ParameterStore<float> store(9);
  Tape<float> tape;
  Scope<float> s(tape, store, NormMode::kTrain, false);
  Rng rng(1);
  const auto r = full_forward(s, tape.constant(random_uniform<float>({1, 3, 256, 704}, 0, 1, rng)), Var<float>{}, cfg);
  EXPECT_EQ(r.roa_pred.shape(), (Shape{1, 1, 16, 44}));
  EXPECT_EQ(r.features.shape(), r.fpn_out.shape());
}

TEST(FullForward, EndToEndGradCheck) {
  const auto cfg = small_config();
  ParameterStore<double> store(cfg.seed);
  const auto img = image({1, 3, 64, 96}, 12);
  const auto labels = image({1, 1, 4, 6}, 13);
  const ModuleFn f = [&](Scope<double>& s, const Var<double>& x) {
    return full_forward(s, x, s.tape().constant(labels), cfg).l_roa;
  };
  // populate, then nudge DCN offsets off the integer lattice
  {
    Tape<double> t;
    Scope<double> s(t, store, NormMode::kIdentity, false);
    const auto res = full_forward(s, t.constant(img), t.constant(labels), cfg);
    Index live = 0;
    for (double v : res.roa_pred.value().data()) live += v > 0.0;
    ASSERT_GT(live, 12) << "a dead head would make the check vacuous";
  }
  Rng rng(14);
  for (auto& [name, e] : store.entries())
    if (name.find("dcn.offset.bias") != std::string::npos)
      for (auto& v : e.value.data()) v = rng.uniform(0.2, 0.8);
  GradCheckOptions opt;
  opt.max_entries_per_input = 6;
  const auto r = grad_check_module(f, img, store, opt);
  RecordProperty("summary", r.summary());
  EXPECT_LT(r.max_rel_error, 1e-4) << r.summary();
  EXPECT_GT(r.checked, 200);
  EXPECT_GT(std::abs(r.worst_analytic) + std::abs(r.worst_numeric), 0.0);
}

TEST(ModelConfig, TextRoundTripAndErrors) {
  ModelConfig cfg = small_config(ScaleMode::kFpnFeature);
  cfg.region_type = RegionType::kBinary;
  cfg.shared_lkb = true;
  cfg.seed = 99;
  const auto back = ModelConfig::from_text(cfg.to_text());
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(back.aspp_dilations, cfg.aspp_dilations);
  EXPECT_THROW(ModelConfig::from_text("kernel_size=seven\n"), ParseError);
  EXPECT_THROW(ModelConfig::from_text("colour=red\n"), ParseError);
  EXPECT_THROW(ModelConfig::from_text("scale_mode=tiny\n"), ParseError);
  EXPECT_EQ(ModelConfig::from_text("# comment\n\nkernel_size = 9  # trailing\n").kernel_size, 9);
  ModelConfig bad;
  bad.input_width = 100;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

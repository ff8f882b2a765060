#include <gtest/gtest.h>

#include <json.hpp>

#include "roa/errors.hpp"
#include "roa/labels.hpp"
#include "roa/scene.hpp"

using namespace roa;

namespace {

nlohmann::json minimal_doc(int cameras = 6) {
  nlohmann::json doc = nlohmann::json::parse(write_scenes({gen_synthetic(1, 0)}));
  doc["scenes"][0]["cameras"].get_ref<nlohmann::json::array_t&>().resize(static_cast<std::size_t>(cameras));
  return doc;
}

}  // namespace

TEST(SceneFile, MinimalNoBoxes) {
  const auto scenes = parse_scenes(minimal_doc().dump(2));
  ASSERT_EQ(scenes.size(), 1u);
  EXPECT_TRUE(scenes[0].boxes.empty());
  EXPECT_EQ(scenes[0].cameras.size(), 6u);
  EXPECT_NO_THROW(scenes[0].validate());
}

TEST(SceneFile, FiveCamerasRejected) {
  const std::string text = minimal_doc(5).dump(2);
  try {
    parse_scenes(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("exactly 6 cameras"), std::string::npos);
    EXPECT_EQ(e.field(), "scenes[0].cameras");
    // "cameras" key sits on line 5 of the pretty-printed document
    const auto line_of_key = 1 + std::count(text.begin(), text.begin() + text.find("\"cameras\""), '\n');
    EXPECT_EQ(e.line(), line_of_key);
  }
}

TEST(SceneFile, MissingFieldNamesPath) {
  auto doc = minimal_doc();
  doc["scenes"][0]["cameras"][2]["intrinsics"].erase("fy");
  try {
    parse_scenes(doc.dump(2));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "scenes[0].cameras[2].intrinsics.fy");
    EXPECT_GT(e.line(), 1);
  }
}

TEST(SceneFile, SyntaxErrorReportsLine) {
  const std::string text = "{\n  \"format\": \"roa-scene\",\n  \"version\": 1,\n  \"scenes\": [ , ]\n}\n";
  try {
    parse_scenes(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(SceneFile, NonFiniteAndBadTypes) {
  auto doc = minimal_doc();
  doc["scenes"][0]["boxes"] = nlohmann::json::array({{{"center", {1, 2, "x"}}, {"size", {1, 1, 1}}, {"yaw", 0}}});
  EXPECT_THROW(parse_scenes(doc.dump()), ParseError);
  doc["scenes"][0]["boxes"][0]["center"] = {1, 2, 3};
  doc["scenes"][0]["boxes"][0]["size"] = {1, -1, 1};
  EXPECT_THROW(parse_scenes(doc.dump()), ParseError);
  auto bad_version = minimal_doc();
  bad_version["version"] = 2;
  EXPECT_THROW(parse_scenes(bad_version.dump()), ParseError);
}

TEST(SceneFile, RotationSnappedOrRejected) {
  auto doc = minimal_doc();
  doc["scenes"][0]["cameras"][0]["extrinsics"]["rotation"] = {{1.0004, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto scenes = parse_scenes(doc.dump());
  EXPECT_NO_THROW(scenes[0].cameras[0].extrinsics.validate());
  EXPECT_NEAR(scenes[0].cameras[0].extrinsics.rotation(0, 0), 1.0, 1e-12);

  doc["scenes"][0]["cameras"][0]["extrinsics"]["rotation"] = {{1.1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_THROW(parse_scenes(doc.dump()), InvalidRotation);
  doc["scenes"][0]["cameras"][0]["extrinsics"]["rotation"] = {{-1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_THROW(parse_scenes(doc.dump()), InvalidRotation);
}

TEST(SceneFile, RoundTrip) {
  std::vector<Scene> scenes{gen_synthetic(21, 17), gen_synthetic(22, 3)};
  scenes[1].boxes[0].category.clear();
  const auto back = parse_scenes(write_scenes(scenes));
  ASSERT_EQ(back.size(), scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    EXPECT_EQ(back[s].id, scenes[s].id);
    for (std::size_t c = 0; c < 6; ++c) {
      const auto &a = scenes[s].cameras[c], &b = back[s].cameras[c];
      EXPECT_EQ(a.name, b.name);
      EXPECT_NEAR(a.intrinsics.fx, b.intrinsics.fx, 1e-9);
      EXPECT_NEAR(a.intrinsics.cy, b.intrinsics.cy, 1e-9);
      EXPECT_EQ(a.intrinsics.width, b.intrinsics.width);
      EXPECT_LT((a.extrinsics.rotation - b.extrinsics.rotation).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LT((a.extrinsics.translation - b.extrinsics.translation).cwiseAbs().maxCoeff(), 1e-9);
    }
    ASSERT_EQ(back[s].boxes.size(), scenes[s].boxes.size());
    for (std::size_t i = 0; i < scenes[s].boxes.size(); ++i) {
      const auto &a = scenes[s].boxes[i], &b = back[s].boxes[i];
      EXPECT_LT((a.center - b.center).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LT((a.size - b.size).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_NEAR(a.yaw, b.yaw, 1e-9);
      EXPECT_EQ(a.category, b.category);
    }
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  EXPECT_EQ(write_scenes({gen_synthetic(7, 12)}), write_scenes({gen_synthetic(7, 12)}));
  EXPECT_NE(write_scenes({gen_synthetic(7, 12)}), write_scenes({gen_synthetic(8, 12)}));
}

TEST(Synthetic, RigAndBoxesValid) {
  const Scene s = gen_synthetic(9, 50);
  EXPECT_NO_THROW(s.validate());
  for (const auto& b : s.boxes) {
    EXPECT_LE(std::hypot(b.center.x(), b.center.y()), 50.0);
    EXPECT_DOUBLE_EQ(b.center.z(), b.size.z() / 2);
  }
  // A box straight ahead of each camera lands in that camera only.
  for (int c = 0; c < 6; ++c) {
    const double th = c * M_PI / 3;
    Box3D b;
    b.center = {12 * std::cos(th), 12 * std::sin(th), 0.8};
    const auto maps = rasterize_scene(std::span<const Box3D>(&b, 1), s.cameras, {});
    for (int k = 0; k < 6; ++k) {
      float sum = 0;
      for (float v : maps[static_cast<std::size_t>(k)].values.data()) sum += v;
      if (k == c) {
        EXPECT_GT(sum, 0.0f);
      } else {
        EXPECT_EQ(sum, 0.0f) << "box ahead of camera " << c << " leaked into camera " << k;
      }
    }
  }
}

TEST(Synthetic, ZeroBoxesGiveZeroLabels) {
  const Scene s = gen_synthetic(2, 0);
  for (const auto& m : rasterize_scene(s.boxes, s.cameras, {}))
    for (float v : m.values.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Render, ShapeRangeAndDeterminism) {
  const Scene s = gen_synthetic(7, 20);
  const auto a = render_camera(s, 0, 64, 176);
  EXPECT_EQ(a.shape(), (Shape{3, 64, 176}));
  for (float v : a.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(a, render_camera(s, 0, 64, 176));
  EXPECT_THROW(render_camera(s, 0, 64, 100), InvalidArgument);
  EXPECT_THROW(render_camera(s, 6, 64, 176), InvalidArgument);
}

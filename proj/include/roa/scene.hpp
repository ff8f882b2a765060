#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "roa/camera.hpp"
#include "roa/tensor.hpp"

namespace roa {

inline constexpr int kNumCameras = 6;

struct Scene {
  std::string id;
  std::vector<Camera> cameras;  // exactly kNumCameras once validated
  std::vector<Box3D> boxes;

  void validate() const;
};

/// JSON scene document, version 1:
///   {"format": "roa-scene", "version": 1, "scenes": [
///     {"id": "...",
///      "cameras": [{"name", "intrinsics": {fx, fy, cx, cy, width, height},
///                   "extrinsics": {"rotation": [[3]x3], "translation": [3]}} x6],
///      "boxes": [{"center": [3], "size": [l, w, h], "yaw", "class"?}]}]}
/// Rotations within 1e-3 of orthonormal are snapped to the nearest rotation;
/// anything further off raises InvalidRotation. Other problems raise
/// ParseError with the line and field path.
std::vector<Scene> parse_scenes(std::string_view text);
std::vector<Scene> parse_scene_file(const std::filesystem::path& path);

std::string write_scenes(const std::vector<Scene>& scenes);
void write_scene_file(const std::filesystem::path& path, const std::vector<Scene>& scenes);

// Six cameras at 60 degree yaw spacing, camera 0 looking along +x, 704x256
// images.
std::vector<Camera> default_rig();

/// Deterministic per seed. Boxes are uniform over a 50 m disc (outside a 3 m
/// ego footprint) with car/truck/pedestrian size priors, resting on z = 0.
Scene gen_synthetic(std::uint64_t seed, int n_boxes);

/// Flat-shaded rendering of camera `camera_index` at height x width (a
/// rescaled view of the same camera): sky/ground gradient with a seeded
/// texture, then boxes painted far to near. Returns 3 x height x width in
/// [0, 1].
Tensor<float> render_camera(const Scene& scene, int camera_index, int height, int width);

}  // namespace roa

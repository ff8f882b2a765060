#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "roa/camera.hpp"
#include "roa/tensor.hpp"

namespace roa {

enum class RegionType { kOverlap, kBinary };

RegionType parse_region_type(std::string_view text);
std::string_view to_string(RegionType type);

struct LabelConfig {
  int stride = 16;
  double near = kDefaultNear;
  RegionType region_type = RegionType::kOverlap;
};

/// Single-channel attention map on the stride grid of one camera. values has
/// shape {height, width}.
struct RoaMap {
  int camera_index = 0;
  Tensor<float> values;

  Index height() const { return values.dim(0); }
  Index width() const { return values.dim(1); }
};

/// Half-open cell range [row_begin, row_end) x [col_begin, col_end) covered
/// by a full-resolution rectangle on a stride grid: floor of the minimum,
/// ceil of the maximum.
struct CellRange {
  Index row_begin = 0, row_end = 0, col_begin = 0, col_end = 0;
};

CellRange quantize(const Rect2D& rect, int stride, Index rows, Index cols);

/// One map per camera. Every visible box adds one to each covered cell, so
/// overlapping boxes stack; binary mode clamps the result to {0, 1}.
/// Throws StrideMismatch when the stride does not divide a camera's image.
std::vector<RoaMap> rasterize_scene(std::span<const Box3D> boxes, std::span<const Camera> cameras,
                                    const LabelConfig& config);

RoaMap binarize(const RoaMap& map);

/// 8-bit binary PGM (P5), values min-max scaled to 0..255. A constant map is
/// written as all zeros.
void write_pgm(const std::filesystem::path& path, const Tensor<float>& map);

}  // namespace roa

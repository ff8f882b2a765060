#include "roa/labels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "roa/errors.hpp"

namespace roa {

RegionType parse_region_type(std::string_view text) {
  if (text == "overlap") return RegionType::kOverlap;
  if (text == "binary") return RegionType::kBinary;
  throw InvalidArgument("region type must be 'overlap' or 'binary', got '" + std::string(text) + "'");
}

std::string_view to_string(RegionType type) { return type == RegionType::kOverlap ? "overlap" : "binary"; }

CellRange quantize(const Rect2D& rect, int stride, Index rows, Index cols) {
  const double s = stride;
  CellRange r;
  r.col_begin = std::clamp<Index>(static_cast<Index>(std::floor(rect.u_min / s)), 0, cols);
  r.col_end = std::clamp<Index>(static_cast<Index>(std::ceil(rect.u_max / s)), 0, cols);
  r.row_begin = std::clamp<Index>(static_cast<Index>(std::floor(rect.v_min / s)), 0, rows);
  r.row_end = std::clamp<Index>(static_cast<Index>(std::ceil(rect.v_max / s)), 0, rows);
  return r;
}

std::vector<RoaMap> rasterize_scene(std::span<const Box3D> boxes, std::span<const Camera> cameras,
                                    const LabelConfig& config) {
  if (config.stride < 1) throw StrideMismatch("label stride must be positive");
  std::vector<RoaMap> maps;
  maps.reserve(cameras.size());
  for (std::size_t ci = 0; ci < cameras.size(); ++ci) {
    const Camera& cam = cameras[ci];
    const Intrinsics& intr = cam.intrinsics;
    if (intr.width % config.stride != 0 || intr.height % config.stride != 0) {
      throw StrideMismatch("stride " + std::to_string(config.stride) + " does not divide image " +
                           std::to_string(intr.width) + "x" + std::to_string(intr.height) + " of camera " +
                           std::to_string(ci));
    }
    const Index rows = intr.height / config.stride, cols = intr.width / config.stride;
    RoaMap map{static_cast<int>(ci), Tensor<float>({rows, cols})};
    for (const Box3D& box : boxes) {
      const auto rect = project_box(box, cam.extrinsics, intr, config.near);
      if (!rect) continue;
      const CellRange r = quantize(*rect, config.stride, rows, cols);
      for (Index y = r.row_begin; y < r.row_end; ++y) {
        for (Index x = r.col_begin; x < r.col_end; ++x) map.values[y * cols + x] += 1.0f;
      }
    }
    maps.push_back(config.region_type == RegionType::kBinary ? binarize(map) : std::move(map));
  }
  return maps;
}

RoaMap binarize(const RoaMap& map) {
  RoaMap out = map;
  for (auto& v : out.values.data()) v = v > 0.0f ? 1.0f : 0.0f;
  return out;
}

void write_pgm(const std::filesystem::path& path, const Tensor<float>& map) {
  if (map.rank() != 2) throw ShapeMismatch("write_pgm expects a 2-D map, got " + to_string(map.shape()));
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const float span = *hi - *lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  for (float v : map.data()) {
    const float scaled = span > 0.0f ? (v - *lo) / span * 255.0f : 0.0f;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(scaled, 0.0f, 255.0f)))));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace roa

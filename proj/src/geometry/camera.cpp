#include "roa/camera.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "roa/errors.hpp"

namespace roa {

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw InvalidArgument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidArgument("intrinsics: image extents must be positive");
  if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
    throw InvalidArgument("intrinsics: principal point outside the image");
  }
}

Intrinsics Intrinsics::scaled(double factor) const {
  Intrinsics out = *this;
  out.fx *= factor;
  out.fy *= factor;
  out.cx *= factor;
  out.cy *= factor;
  out.width = static_cast<int>(std::lround(width * factor));
  out.height = static_cast<int>(std::lround(height * factor));
  return out;
}

void Extrinsics::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) throw InvalidRotation("extrinsics contain non-finite values");
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-6) throw InvalidRotation("rotation is not orthonormal (max |R^T R - I| = " + std::to_string(ortho) + ")");
  if (std::abs(rotation.determinant() - 1.0) > 1e-6) throw InvalidRotation("rotation determinant is not +1");
}

void Box3D::validate() const {
  if (!center.allFinite() || !std::isfinite(yaw)) throw InvalidArgument("box has non-finite pose");
  if (!(size.minCoeff() > 0)) throw InvalidArgument("box size components must be positive");
}

std::array<Eigen::Vector3d, 8> box_corners(const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Eigen::Vector3d half = box.size / 2.0;
  std::array<Eigen::Vector3d, 8> out;
  int i = 0;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) {
        const double x = sx * half.x(), y = sy * half.y();
        out[i++] = box.center + Eigen::Vector3d(c * x - s * y, s * x + c * y, sz * half.z());
      }
    }
  }
  return out;
}

PixelDepth project_point(const Eigen::Vector3d& p_ego, const Extrinsics& extr, const Intrinsics& intr,
                         double near) {
  const Eigen::Vector3d p = extr.rotation * p_ego + extr.translation;
  if (p.z() < near) throw BehindCamera("point depth " + std::to_string(p.z()) + " m is below the near plane");
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy, p.z()};
}

Eigen::Vector3d unproject(const PixelDepth& pixel, const Extrinsics& extr, const Intrinsics& intr) {
  const Eigen::Vector3d p_cam((pixel.u - intr.cx) / intr.fx * pixel.depth, (pixel.v - intr.cy) / intr.fy * pixel.depth,
                              pixel.depth);
  return extr.rotation.transpose() * (p_cam - extr.translation);
}

std::optional<Rect2D> project_box(const Box3D& box, const Extrinsics& extr, const Intrinsics& intr, double near) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Rect2D r{kInf, kInf, -kInf, -kInf};
  int survivors = 0;
  for (const auto& corner : box_corners(box)) {
    const Eigen::Vector3d p = extr.rotation * corner + extr.translation;
    if (p.z() < near) continue;
    const double u = intr.fx * p.x() / p.z() + intr.cx;
    const double v = intr.fy * p.y() / p.z() + intr.cy;
    r.u_min = std::min(r.u_min, u);
    r.u_max = std::max(r.u_max, u);
    r.v_min = std::min(r.v_min, v);
    r.v_max = std::max(r.v_max, v);
    ++survivors;
  }
  if (survivors < 2) return std::nullopt;
  const double w = intr.width, h = intr.height;
  r.u_min = std::clamp(r.u_min, 0.0, w);
  r.u_max = std::clamp(r.u_max, 0.0, w);
  r.v_min = std::clamp(r.v_min, 0.0, h);
  r.v_max = std::clamp(r.v_max, 0.0, h);
  if (!(r.u_max > r.u_min) || !(r.v_max > r.v_min)) return std::nullopt;
  return r;
}

}  // namespace roa

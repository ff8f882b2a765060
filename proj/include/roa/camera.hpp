#pragma once

#include <array>
#include <optional>
#include <string>

#include <Eigen/Core>

namespace roa {

/// Pinhole intrinsics in pixels for an image of width x height.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  // Throws InvalidArgument unless fx, fy > 0 and the principal point lies
  // inside the image.
  void validate() const;
  // Same camera observing a resized image (all pixel quantities times factor).
  Intrinsics scaled(double factor) const;
};

/// Rigid ego -> camera transform: p_cam = rotation * p_ego + translation.
struct Extrinsics {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  // Throws InvalidRotation unless rotation is orthonormal with det +1
  // (tolerance 1e-6).
  void validate() const;
};

struct Camera {
  std::string name;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
};

/// Ego-frame cuboid. size is (length along heading, width, height); yaw
/// rotates about +z.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw = 0.0;
  std::string category;

  void validate() const;
};

struct Rect2D {
  double u_min = 0, v_min = 0, u_max = 0, v_max = 0;
};

struct PixelDepth {
  double u = 0, v = 0, depth = 0;
};

inline constexpr double kDefaultNear = 0.1;

std::array<Eigen::Vector3d, 8> box_corners(const Box3D& box);

/// Throws BehindCamera when the camera-frame depth is below `near`.
PixelDepth project_point(const Eigen::Vector3d& p_ego, const Extrinsics& extr, const Intrinsics& intr,
                         double near = kDefaultNear);

/// Inverse of project_point for a known depth.
Eigen::Vector3d unproject(const PixelDepth& pixel, const Extrinsics& extr, const Intrinsics& intr);

/// Axis-aligned hull of the corners in front of the near plane, clamped to
/// [0, width] x [0, height]. Empty when fewer than two corners survive or the
/// clamped rectangle has no area.
std::optional<Rect2D> project_box(const Box3D& box, const Extrinsics& extr, const Intrinsics& intr,
                                  double near = kDefaultNear);

}  // namespace roa

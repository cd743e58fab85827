#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <utility>
#include <vector>

namespace mvtri {

// Square-pixel pinhole intrinsics; the same field of view applies to both
// axes.
struct CameraIntrinsics {
  double fov_deg = 50.0;
  int width = 0;
  int height = 0;
};

// Camera-to-world pose. Local frame: right = +X, up = +Z, forward = +Y, so
// the canonical conditioning camera (identity rotation at (0,-2,0)) looks at
// the world origin.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-6);

// Pose looking at the world origin from `position`, world +Z as the up hint.
CameraPose look_at_origin(const Eigen::Vector3d& position);

struct CropRect {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

// Per-pixel ray origins and unit directions, row-major H x W x 3.
struct RayMap {
  int height = 0, width = 0;
  std::vector<double> origins;
  std::vector<double> directions;

  Eigen::Vector3d origin(int y, int x) const {
    const double* p = origins.data() + 3 * (static_cast<size_t>(y) * width + x);
    return {p[0], p[1], p[2]};
  }
  Eigen::Vector3d direction(int y, int x) const {
    const double* p = directions.data() + 3 * (static_cast<size_t>(y) * width + x);
    return {p[0], p[1], p[2]};
  }
  int64_t count() const { return static_cast<int64_t>(height) * width; }
};

// Plucker line coordinates (o x d, d) per pixel, H x W x 6.
struct PluckerRayMap {
  int height = 0, width = 0;
  std::vector<double> channels;
};

// Rays through pixel centers ((i + 0.5)/W convention), row 0 at the top of
// the image. Throws if the pose rotation is not orthonormal.
RayMap generate_rays(const CameraIntrinsics& intrinsics, const CameraPose& pose);
// Rays for a crop rectangle only; pixel (x0+i, y0+j) matches the full map.
RayMap generate_rays(const CameraIntrinsics& intrinsics, const CameraPose& pose,
                     const CropRect& crop);

PluckerRayMap plucker_map(const RayMap& rays);

struct PoseNormalization {
  std::vector<CameraPose> poses;
  // the rigid transform that was applied: p -> rotation * p + translation
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
};

// Rigidly move all cameras so poses[cond_index] lands on the canonical frame
// (identity rotation, position (0,-2,0)). Relative poses are preserved.
PoseNormalization normalize_poses(const std::vector<CameraPose>& poses, int cond_index);

// n cameras on a circle of the given radius and elevation, uniformly spaced
// in azimuth and looking at the origin. Camera 0 at radius 2, elevation 0
// coincides with the canonical conditioning frame.
std::vector<std::pair<CameraIntrinsics, CameraPose>> circle_viewpoints(
    int n, double radius, double elevation_deg, double fov_deg, int resolution);

}  // namespace mvtri

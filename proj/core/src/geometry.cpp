#include "mvtri/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace mvtri {

bool is_rotation(const Eigen::Matrix3d& r, double tol) {
  Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

CameraPose look_at_origin(const Eigen::Vector3d& position) {
  Eigen::Vector3d forward = (-position).normalized();
  Eigen::Vector3d up_hint(0.0, 0.0, 1.0);
  if (std::abs(forward.dot(up_hint)) > 1.0 - 1e-9)
    up_hint = Eigen::Vector3d(0.0, 1.0, 0.0);
  Eigen::Vector3d right = forward.cross(up_hint).normalized();
  Eigen::Vector3d up = right.cross(forward);
  CameraPose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = forward;
  pose.rotation.col(2) = up;
  pose.position = position;
  return pose;
}

static void validate_camera(const CameraIntrinsics& intr, const CameraPose& pose) {
  if (!(intr.fov_deg > 0.0 && intr.fov_deg < 180.0))
    throw std::invalid_argument("camera: fov_deg must be in (0, 180)");
  if (intr.width < 1 || intr.height < 1)
    throw std::invalid_argument("camera: non-positive resolution");
  if (!is_rotation(pose.rotation))
    throw std::invalid_argument("camera: rotation is not orthonormal");
}

RayMap generate_rays(const CameraIntrinsics& intr, const CameraPose& pose) {
  return generate_rays(intr, pose, CropRect{0, 0, intr.width, intr.height});
}

RayMap generate_rays(const CameraIntrinsics& intr, const CameraPose& pose,
                     const CropRect& crop) {
  validate_camera(intr, pose);
  if (crop.x0 < 0 || crop.y0 < 0 || crop.width < 1 || crop.height < 1 ||
      crop.x0 + crop.width > intr.width || crop.y0 + crop.height > intr.height)
    throw std::invalid_argument("generate_rays: crop outside image");

  RayMap rays;
  rays.height = crop.height;
  rays.width = crop.width;
  rays.origins.resize(static_cast<size_t>(crop.height) * crop.width * 3);
  rays.directions.resize(rays.origins.size());

  const double tan_half = std::tan(0.5 * intr.fov_deg * M_PI / 180.0);
  size_t idx = 0;
  for (int j = 0; j < crop.height; ++j) {
    // row 0 maps to the top of the image (+Z in the local frame)
    const double v = (1.0 - 2.0 * (crop.y0 + j + 0.5) / intr.height) * tan_half;
    for (int i = 0; i < crop.width; ++i, idx += 3) {
      const double u = (2.0 * (crop.x0 + i + 0.5) / intr.width - 1.0) * tan_half;
      Eigen::Vector3d dir = (pose.rotation * Eigen::Vector3d(u, 1.0, v)).normalized();
      rays.origins[idx + 0] = pose.position.x();
      rays.origins[idx + 1] = pose.position.y();
      rays.origins[idx + 2] = pose.position.z();
      rays.directions[idx + 0] = dir.x();
      rays.directions[idx + 1] = dir.y();
      rays.directions[idx + 2] = dir.z();
    }
  }
  return rays;
}

PluckerRayMap plucker_map(const RayMap& rays) {
  PluckerRayMap out;
  out.height = rays.height;
  out.width = rays.width;
  out.channels.resize(static_cast<size_t>(rays.height) * rays.width * 6);
  const int64_t n = rays.count();
  for (int64_t p = 0; p < n; ++p) {
    const double* o = rays.origins.data() + 3 * p;
    const double* d = rays.directions.data() + 3 * p;
    double* c = out.channels.data() + 6 * p;
    // moment o x d, then direction
    c[0] = o[1] * d[2] - o[2] * d[1];
    c[1] = o[2] * d[0] - o[0] * d[2];
    c[2] = o[0] * d[1] - o[1] * d[0];
    c[3] = d[0];
    c[4] = d[1];
    c[5] = d[2];
  }
  return out;
}

PoseNormalization normalize_poses(const std::vector<CameraPose>& poses, int cond_index) {
  if (cond_index < 0 || cond_index >= static_cast<int>(poses.size()))
    throw std::out_of_range("normalize_poses: cond_index");
  const CameraPose& cond = poses[static_cast<size_t>(cond_index)];
  if (!is_rotation(cond.rotation))
    throw std::invalid_argument("normalize_poses: conditioning rotation not orthonormal");

  PoseNormalization out;
  out.rotation = cond.rotation.transpose();
  out.translation = Eigen::Vector3d(0.0, -2.0, 0.0) - out.rotation * cond.position;
  out.poses.reserve(poses.size());
  for (const CameraPose& p : poses) {
    CameraPose q;
    q.rotation = out.rotation * p.rotation;
    q.position = out.rotation * p.position + out.translation;
    out.poses.push_back(q);
  }
  return out;
}

std::vector<std::pair<CameraIntrinsics, CameraPose>> circle_viewpoints(
    int n, double radius, double elevation_deg, double fov_deg, int resolution) {
  if (n < 1) throw std::invalid_argument("circle_viewpoints: n must be >= 1");
  const double elev = elevation_deg * M_PI / 180.0;
  std::vector<std::pair<CameraIntrinsics, CameraPose>> out;
  out.reserve(static_cast<size_t>(n));
  CameraIntrinsics intr{fov_deg, resolution, resolution};
  for (int k = 0; k < n; ++k) {
    const double azim = 2.0 * M_PI * k / n;
    Eigen::Vector3d base(0.0, -radius * std::cos(elev), radius * std::sin(elev));
    Eigen::Matrix3d rot_z = Eigen::Matrix3d::Identity();
    rot_z(0, 0) = std::cos(azim);
    rot_z(0, 1) = -std::sin(azim);
    rot_z(1, 0) = std::sin(azim);
    rot_z(1, 1) = std::cos(azim);
    CameraPose pose = look_at_origin(rot_z * base);
    if (k == 0 && elevation_deg == 0.0) {
      // exact canonical frame, free of trig round-off
      pose.rotation = Eigen::Matrix3d::Identity();
      pose.position = Eigen::Vector3d(0.0, -radius, 0.0);
    }
    out.emplace_back(intr, pose);
  }
  return out;
}

}  // namespace mvtri

#pragma once

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mvtri/geometry.hpp"
#include "mvtri/image.hpp"

namespace mvtri {

inline constexpr double kBackground[3] = {1.0, 1.0, 1.0};

// 8-color palette defined in 8-bit units so flat renders survive PNG
// round-trips losslessly. Pure white is reserved for the background.
struct PaletteColor {
  const char* name;
  uint8_t r, g, b;
};
const std::vector<PaletteColor>& palette();

enum class PrimitiveKind { Sphere, Box };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  // sphere: all components equal the radius; box: per-axis half extents
  Eigen::Vector3d half_size = Eigen::Vector3d::Zero();
  int color = 0;  // palette index
  Eigen::Vector3d albedo = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const;
  double bounding_radius() const;
  double surface_area() const;
};

// Analytic scene, reconstructible bit-exactly from its seed.
struct SceneSpec {
  uint64_t seed = 0;
  std::vector<Primitive> primitives;
  std::string caption;
};

// Deterministic scene from a seed: 1-4 primitives with non-overlapping
// placements (bounding-sphere test, rejection sampled), palette albedos and
// a caption from a fixed grammar. Throws after 1000 failed placements.
SceneSpec random_scene(uint64_t seed);

// Parse a grammar caption back to its (kind, color) multiset; used to check
// the caption round-trip invariant. Returns pairs of (kind, palette index).
std::vector<std::pair<PrimitiveKind, int>> parse_caption(const std::string& caption);

// Exact flat-shaded render: nearest ray-primitive hit wins, background white.
Image raytrace(const SceneSpec& scene, const CameraIntrinsics& intrinsics,
               const CameraPose& pose);

// Density/color field: sigma_inside and the albedo inside any primitive
// (first in list order wins), zero density and background color outside.
struct FieldSample {
  double sigma;
  Eigen::Vector3d rgb;
};
using DensityField = std::function<FieldSample(const Eigen::Vector3d&)>;
DensityField scene_density_oracle(const SceneSpec& scene, double sigma_inside);

// n points uniform by area on the union surface (samples buried inside
// another primitive are rejected).
std::vector<Eigen::Vector3d> surface_samples(const SceneSpec& scene, int n, uint64_t seed);

struct DatasetView {
  CameraIntrinsics intrinsics;
  CameraPose pose;
  std::string image_path;  // relative to the dataset root
  ImageU8 image;
};

struct DatasetRecord {
  SceneSpec scene;
  std::vector<DatasetView> views;
};

struct DatasetConfig {
  int num_scenes = 8;
  int views_per_scene = 12;
  int resolution = 64;
  double fov_deg = 50.0;
  uint64_t seed = 0;
};

// Writes images/ and manifest.json under out_path. Regeneration from the
// same config is byte-identical.
void build_dataset(const DatasetConfig& cfg, const std::string& out_path);

std::vector<DatasetRecord> load_dataset(const std::string& path);

// Random look-at-origin camera in the dataset distribution: uniform azimuth,
// elevation in [-10, 60] degrees, radius in [1.8, 2.4].
CameraPose random_orbit_pose(class Rng& rng);

}  // namespace mvtri

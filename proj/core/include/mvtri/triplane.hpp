#pragma once

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <vector>

#include "mvtri/dataset.hpp"
#include "mvtri/geometry.hpp"
#include "mvtri/image.hpp"
#include "mvtri/nn.hpp"

namespace mvtri {

// Three axis-aligned feature planes (XY, XZ, YZ) spanning [-1,1]^3, stored
// [plane][channel][v][u].
struct TriplaneData {
  int channels = 0;
  int resolution = 0;
  std::vector<double> planes;  // 3 * channels * resolution * resolution

  TriplaneData() = default;
  TriplaneData(int c, int r)
      : channels(c), resolution(r),
        planes(static_cast<size_t>(3) * c * r * r, 0.0) {}
  int64_t plane_size() const { return static_cast<int64_t>(channels) * resolution * resolution; }
  double& at(int plane, int c, int v, int u) {
    return planes[((static_cast<size_t>(plane) * channels + c) * resolution + v) * resolution + u];
  }
};

// Density/color MLP: feature -> [density logit, 3 color logits], ReLU between
// layers. layers counts the linear maps.
struct NerfDecoderData {
  std::vector<ad::Tensor> weights;  // (in, out) each
  std::vector<ad::Tensor> biases;
  static NerfDecoderData random(int in_channels, int layers, int hidden, uint64_t seed);
};

struct RenderConfig {
  int num_steps = 48;
  double near = 2.0 - std::sqrt(3.0);
  double far = 2.0 + std::sqrt(3.0);
  Eigen::Vector3d background{1.0, 1.0, 1.0};
  std::optional<CropRect> patch;
  // per-ray common jitter of the sample comb, used only during training
  bool jitter = false;
  uint64_t jitter_seed = 0;
};

// near/far for an origin-centered unit scene seen from `position`
void fit_near_far(const Eigen::Vector3d& position, RenderConfig& cfg);

struct RenderOutput {
  Image rgb;
  std::vector<double> opacity;  // accumulated alpha per pixel
  std::vector<double> depth;    // expected termination depth (far for misses)
};

// Quadrature over an arbitrary density field; the same compositing core
// backs the differentiable triplane path.
RenderOutput render_field(const DensityField& field, const RayMap& rays,
                          const RenderConfig& cfg);

// --- differentiable path -------------------------------------------------

struct TriplaneVars {
  ad::Var planes;  // (3, channels, resolution, resolution)
  int channels = 0;
  int resolution = 0;
};

struct NerfDecoderVars {
  std::vector<ad::Linear> layers;
  // builds constant (inference) vars from plain data
  static NerfDecoderVars from_data(const NerfDecoderData& data);
  ad::Var operator()(const ad::Var& features) const;
};

TriplaneVars triplane_constant(const TriplaneData& data);
TriplaneData triplane_values(const TriplaneVars& vars);

// Bilinear sample of each plane at the point's axis-pair projection, summed
// over the three planes. Points are clamped to the extent cube.
ad::Var sample_triplane(const TriplaneVars& triplane, const std::vector<double>& points_xyz);

struct RenderVarsOutput {
  ad::Var rgb;      // (num_rays, 3)
  ad::Var opacity;  // (num_rays, 1)
  std::vector<double> depth;
};

// Differentiable volume rendering of the triplane through the decoder.
// Sample midpoints span [near, far]; points outside the extent cube
// contribute zero density. Throws on non-finite density.
RenderVarsOutput render_rays_vars(const TriplaneVars& triplane, const NerfDecoderVars& decoder,
                                  const RayMap& rays, const RenderConfig& cfg);

// Plain-data convenience: constants in, values out, with ray-cube culling
// and chunked evaluation.
RenderOutput render_rays(const TriplaneData& triplane, const NerfDecoderData& decoder,
                         const RayMap& rays, const RenderConfig& cfg);
RenderOutput render_view(const TriplaneData& triplane, const NerfDecoderData& decoder,
                         const CameraIntrinsics& intrinsics, const CameraPose& pose,
                         const RenderConfig& cfg);

// Decoded density over a resolution^3 lattice spanning [-1,1]^3 (batched).
std::vector<double> density_grid(const TriplaneData& triplane, const NerfDecoderData& decoder,
                                 int resolution);

bool ray_hits_unit_cube(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double t0,
                        double t1);

}  // namespace mvtri

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvtri/geometry.hpp"
#include "mvtri/image.hpp"
#include "mvtri/triplane.hpp"

namespace mvtri {

// Cumulative signal schedule, alpha_bar[0] = 1, strictly decreasing.
struct NoiseSchedule {
  int total_steps = 0;
  std::vector<double> alpha_bar;  // length total_steps + 1

  double ab(int t) const { return alpha_bar[static_cast<size_t>(t)]; }
};

// Improved-DDPM cosine schedule: alpha_bar[t] = f(t)/f(0) with
// f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), s = 0.008, per-step beta
// clipped at 0.999.
NoiseSchedule cosine_schedule(int total_steps);

// Multi-view images at a shared timestep, in [-1,1] diffusion space.
// clean_mask marks views exempt from noising (the image condition).
struct NoisyViewSet {
  std::vector<Image> views;
  int t = 0;
  std::vector<uint8_t> clean_mask;

  void validate() const;
};

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps per non-clean view.
NoisyViewSet q_sample(const std::vector<Image>& x0, int t, const std::vector<Image>& noise,
                      const NoiseSchedule& schedule, const std::vector<uint8_t>& clean_mask);

// Deterministic DDIM update from (x_t, predicted x0) to t_prev < t.
NoisyViewSet ddim_step(const NoisyViewSet& x_t, const std::vector<Image>& x0_hat, int t,
                       int t_prev, const NoiseSchedule& schedule);

// uncond + scale * (cond - uncond), in x0-prediction space.
std::vector<Image> cfg_combine(const std::vector<Image>& x0_cond,
                               const std::vector<Image>& x0_uncond, double scale);

struct CameraView {
  CameraIntrinsics intrinsics;
  CameraPose pose;
};

// What the sampler needs from a denoiser. x0 predictions are returned in
// [-1,1] diffusion space at the input cameras.
class MultiViewDenoiser {
 public:
  virtual ~MultiViewDenoiser() = default;

  struct Output {
    TriplaneData triplane;
    std::vector<Image> x0;
  };
  virtual Output denoise(const NoisyViewSet& noisy, int t,
                         const std::vector<CameraView>& cameras,
                         const std::string* text_prompt) = 0;
  // second pass for classifier-free guidance; null by default
  virtual Output denoise_unconditional(const NoisyViewSet& noisy, int t,
                                       const std::vector<CameraView>& cameras) {
    return denoise(noisy, t, cameras, nullptr);
  }
};

struct SampleCondition {
  std::optional<Image> image;       // [0,1] render space, canonical viewpoint
  std::optional<std::string> text;  // grammar-vocabulary prompt
};

struct SampleOptions {
  int num_inference_steps = 50;
  double cfg_scale = 1.0;  // applied only with a text condition
  uint64_t seed = 0;
  std::vector<CameraView> cameras;  // default: 4-view circle at radius 2
  int resolution = 64;
  double fov_deg = 50.0;
};

struct SampleResult {
  TriplaneData triplane;
  std::vector<Image> views;  // [0,1] render space
};

// DDIM loop from pure Gaussian noise at t = T over a uniformly strided
// decreasing timestep sub-sequence ending with an explicit step to t = 0.
// Deterministic given the seed.
SampleResult sample_loop(MultiViewDenoiser& denoiser, const SampleCondition& condition,
                         const NoiseSchedule& schedule, const SampleOptions& opts);

// The timestep sub-sequence used by sample_loop: k-th call happens at
// round(T * (K - k) / K), k = 0..K-1.
std::vector<int> inference_timesteps(int total_steps, int num_inference_steps);

}  // namespace mvtri

#include "mvtri/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "mvtri/rng.hpp"

namespace mvtri {

NoiseSchedule cosine_schedule(int total_steps) {
  if (total_steps < 1) throw std::invalid_argument("cosine_schedule: T must be >= 1");
  constexpr double s = 0.008;
  auto f = [&](double t) {
    double x = ((t / total_steps + s) / (1.0 + s)) * M_PI * 0.5;
    double c = std::cos(x);
    return c * c;
  };
  NoiseSchedule sched;
  sched.total_steps = total_steps;
  sched.alpha_bar.resize(static_cast<size_t>(total_steps) + 1);
  sched.alpha_bar[0] = 1.0;
  const double f0 = f(0.0);
  for (int t = 1; t <= total_steps; ++t) {
    double ab = f(static_cast<double>(t)) / f0;
    // clip the per-step beta at 0.999 to keep alpha_bar strictly positive
    double beta = 1.0 - ab / sched.alpha_bar[static_cast<size_t>(t - 1)];
    if (beta > 0.999) beta = 0.999;
    sched.alpha_bar[static_cast<size_t>(t)] =
        sched.alpha_bar[static_cast<size_t>(t - 1)] * (1.0 - beta);
  }
  return sched;
}

void NoisyViewSet::validate() const {
  if (views.size() != clean_mask.size())
    throw std::invalid_argument("noisy view set: clean_mask size mismatch");
}

NoisyViewSet q_sample(const std::vector<Image>& x0, int t, const std::vector<Image>& noise,
                      const NoiseSchedule& schedule, const std::vector<uint8_t>& clean_mask) {
  if (t < 1 || t > schedule.total_steps)
    throw std::invalid_argument("q_sample: t out of range [1, T]");
  if (noise.size() != x0.size() || clean_mask.size() != x0.size())
    throw std::invalid_argument("q_sample: per-view inputs must align");
  const double sa = std::sqrt(schedule.ab(t));
  const double sb = std::sqrt(1.0 - schedule.ab(t));
  NoisyViewSet out;
  out.t = t;
  out.clean_mask = clean_mask;
  out.views.reserve(x0.size());
  for (size_t v = 0; v < x0.size(); ++v) {
    if (clean_mask[v]) {
      out.views.push_back(x0[v]);
      continue;
    }
    if (!noise[v].same_shape(x0[v]))
      throw std::invalid_argument("q_sample: noise shape mismatch on view " +
                                  std::to_string(v));
    Image img = x0[v];
    const double* n = noise[v].rgb.data();
    for (size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = sa * img.rgb[i] + sb * n[i];
    out.views.push_back(std::move(img));
  }
  return out;
}

NoisyViewSet ddim_step(const NoisyViewSet& x_t, const std::vector<Image>& x0_hat, int t,
                       int t_prev, const NoiseSchedule& schedule) {
  x_t.validate();
  if (!(t_prev < t)) throw std::invalid_argument("ddim_step: t_prev must be < t");
  if (t < 1 || t > schedule.total_steps || t_prev < 0)
    throw std::invalid_argument("ddim_step: timestep out of range");
  if (x0_hat.size() != x_t.views.size())
    throw std::invalid_argument("ddim_step: x0_hat view count mismatch");
  const double ab_t = schedule.ab(t);
  if (!(ab_t < 1.0))
    throw std::invalid_argument("ddim_step: alpha_bar[t] must be < 1 to recover noise");
  const double ab_p = schedule.ab(t_prev);
  const double sa_t = std::sqrt(ab_t), sb_t = std::sqrt(1.0 - ab_t);
  const double sa_p = std::sqrt(ab_p), sb_p = std::sqrt(1.0 - ab_p);

  NoisyViewSet out;
  out.t = t_prev;
  out.clean_mask = x_t.clean_mask;
  out.views.reserve(x_t.views.size());
  for (size_t v = 0; v < x_t.views.size(); ++v) {
    if (x_t.clean_mask[v]) {
      out.views.push_back(x_t.views[v]);
      continue;
    }
    const Image& xt = x_t.views[v];
    const Image& x0 = x0_hat[v];
    if (!xt.same_shape(x0))
      throw std::invalid_argument("ddim_step: x0_hat shape mismatch on view " +
                                  std::to_string(v));
    Image img(xt.height, xt.width);
    for (size_t i = 0; i < img.rgb.size(); ++i) {
      const double eps_hat = (xt.rgb[i] - sa_t * x0.rgb[i]) / sb_t;
      img.rgb[i] = sa_p * x0.rgb[i] + sb_p * eps_hat;
    }
    out.views.push_back(std::move(img));
  }
  return out;
}

std::vector<Image> cfg_combine(const std::vector<Image>& x0_cond,
                               const std::vector<Image>& x0_uncond, double scale) {
  if (x0_cond.size() != x0_uncond.size())
    throw std::invalid_argument("cfg_combine: view count mismatch");
  std::vector<Image> out;
  out.reserve(x0_cond.size());
  for (size_t v = 0; v < x0_cond.size(); ++v) {
    if (!x0_cond[v].same_shape(x0_uncond[v]))
      throw std::invalid_argument("cfg_combine: shape mismatch on view " + std::to_string(v));
    Image img = x0_uncond[v];
    for (size_t i = 0; i < img.rgb.size(); ++i)
      img.rgb[i] += scale * (x0_cond[v].rgb[i] - img.rgb[i]);
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<int> inference_timesteps(int total_steps, int num_inference_steps) {
  if (num_inference_steps < 1 || num_inference_steps > total_steps)
    throw std::invalid_argument("inference steps must be in [1, T]");
  std::vector<int> ts(static_cast<size_t>(num_inference_steps));
  for (int k = 0; k < num_inference_steps; ++k) {
    double t = static_cast<double>(total_steps) *
               (num_inference_steps - k) / num_inference_steps;
    ts[static_cast<size_t>(k)] = static_cast<int>(std::lround(t));
  }
  return ts;
}

SampleResult sample_loop(MultiViewDenoiser& denoiser, const SampleCondition& condition,
                         const NoiseSchedule& schedule, const SampleOptions& opts) {
  std::vector<CameraView> cameras = opts.cameras;
  if (cameras.empty()) {
    for (const auto& [intr, pose] : circle_viewpoints(4, 2.0, 0.0, opts.fov_deg, opts.resolution))
      cameras.push_back({intr, pose});
  }
  const size_t num_views = cameras.size();
  const int height = cameras[0].intrinsics.height;
  const int width = cameras[0].intrinsics.width;

  NoisyViewSet state;
  state.t = schedule.total_steps;
  state.clean_mask.assign(num_views, 0);
  if (condition.image.has_value()) {
    if (condition.image->height != height || condition.image->width != width)
      throw std::invalid_argument("sample_loop: conditioning image resolution mismatch");
    state.clean_mask[0] = 1;
  }

  Rng rng(derive_seed(opts.seed, 0x5a3f1e));
  for (size_t v = 0; v < num_views; ++v) {
    if (state.clean_mask[v]) {
      state.views.push_back(to_diffusion_space(*condition.image));
      continue;
    }
    Image img(height, width);
    for (double& x : img.rgb) x = rng.normal();
    state.views.push_back(std::move(img));
  }

  const std::string* prompt = condition.text.has_value() ? &*condition.text : nullptr;
  const bool use_cfg = prompt != nullptr && opts.cfg_scale != 1.0;

  std::vector<int> ts = inference_timesteps(schedule.total_steps, opts.num_inference_steps);
  MultiViewDenoiser::Output out;
  std::vector<Image> x0;
  for (size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    state.t = t;
    out = denoiser.denoise(state, t, cameras, prompt);
    x0 = out.x0;
    if (use_cfg) {
      MultiViewDenoiser::Output uncond = denoiser.denoise_unconditional(state, t, cameras);
      x0 = cfg_combine(out.x0, uncond.x0, opts.cfg_scale);
    }
    for (const Image& img : x0)
      for (double v : img.rgb)
        if (!std::isfinite(v)) throw std::runtime_error("sample_loop: non-finite denoiser output");
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    state = ddim_step(state, x0, t, t_prev, schedule);
  }

  SampleResult result;
  result.triplane = std::move(out.triplane);
  result.views.reserve(num_views);
  // the final DDIM step to t = 0 equals the last x0 prediction
  for (size_t v = 0; v < num_views; ++v) result.views.push_back(to_render_space(state.views[v]));
  return result;
}

}  // namespace mvtri

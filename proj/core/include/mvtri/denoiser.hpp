#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mvtri/diffusion.hpp"
#include "mvtri/geometry.hpp"
#include "mvtri/nn.hpp"
#include "mvtri/text_embedder.hpp"
#include "mvtri/triplane.hpp"

namespace mvtri {

enum class ConditionMode { Unconditional, Image, Text };
enum class CameraConditioning { Plucker, AdaLN };

const char* to_string(ConditionMode m);
const char* to_string(CameraConditioning c);
ConditionMode condition_mode_from_string(const std::string& s);
CameraConditioning camera_conditioning_from_string(const std::string& s);

struct DenoiserConfig {
  int image_resolution = 64;
  int patch_size = 8;
  int encoder_layers = 4;
  int encoder_width = 192;
  int triplane_token_res = 16;  // triplane tokens = 3 * res^2
  int decoder_width = 192;
  int decoder_layers = 12;  // pairs of cross/self attention; units = layers/2
  int triplane_upsample = 1;
  int triplane_channels = 16;
  int num_views = 4;
  ConditionMode mode = ConditionMode::Image;
  CameraConditioning camera_cond = CameraConditioning::Plucker;
  int head_dim = 64;
  int nerf_mlp_layers = 4;
  int nerf_mlp_width = 64;
  int render_steps = 24;

  void validate() const;
  int patches_per_view() const {
    int s = image_resolution / patch_size;
    return s * s;
  }
  int image_tokens() const { return num_views * patches_per_view(); }
  int triplane_tokens() const { return 3 * triplane_token_res * triplane_token_res; }
  int plane_resolution() const { return triplane_token_res * triplane_upsample; }
  int token_channels() const { return camera_cond == CameraConditioning::Plucker ? 9 : 3; }

  bool operator==(const DenoiserConfig&) const = default;
};

// sinusoidal timestep features, dim must be even
ad::Tensor sinusoidal_features(double t, int dim);

// Multi-view reconstruction denoiser: ViT over Plucker-conditioned noisy
// views, triplane tokens decoded by alternating cross/self attention with
// adaLN-Zero time modulation, rendered back through the NeRF renderer.
class DenoiserModel : public MultiViewDenoiser {
 public:
  DenoiserModel(const DenoiserConfig& cfg, uint64_t init_seed);

  const DenoiserConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  // Patch tokens for all views: per view the RGB pixels are concatenated
  // with the Plucker channels, split into patches, linearly projected, and
  // offset by a per-patch positional embedding shared across views.
  ad::Var tokenize_views(const NoisyViewSet& noisy,
                         const std::vector<PluckerRayMap>& plucker) const;

  // Graph-building path used by training. Cameras must be in the scene
  // frame (image mode: normalized so the conditioning view is canonical).
  TriplaneVars reconstruct(const NoisyViewSet& noisy, int t,
                           const std::vector<CameraView>& cameras,
                           const TextCondition* text) const;

  NerfDecoderVars nerf_decoder() const { return nerf_; }
  NerfDecoderData nerf_decoder_data() const;
  RenderConfig render_config(const CameraPose& pose) const;

  // Inference: reconstruct under no-grad, then render full frames at the
  // input cameras. x0 is returned in [-1,1] diffusion space.
  Output denoise(const NoisyViewSet& noisy, int t, const std::vector<CameraView>& cameras,
                 const std::string* text_prompt) override;
  Output denoise_unconditional(const NoisyViewSet& noisy, int t,
                               const std::vector<CameraView>& cameras) override;

 private:
  struct EncoderBlock {
    ad::AdaLnZero attn_mod;
    ad::Attention attn;
    ad::AdaLnZero text_mod;
    ad::Attention text_attn;
    ad::AdaLnZero mlp_mod;
    ad::Mlp mlp;
  };
  struct DecoderUnit {
    ad::AdaLnZero cross_mod;
    ad::Attention cross;
    ad::AdaLnZero text1_mod;
    ad::Attention text1;
    ad::AdaLnZero self_mod;
    ad::Attention self;
    ad::AdaLnZero text2_mod;
    ad::Attention text2;
    ad::AdaLnZero mlp_mod;
    ad::Mlp mlp;
  };

  ad::Var time_embedding(double t) const;
  ad::Var camera_embedding(const CameraView& cam) const;
  ad::Var encoder_conditioning(const ad::Var& t_emb,
                               const std::vector<CameraView>& cameras) const;

  DenoiserConfig cfg_;
  ad::ParamStore params_;
  ad::Linear patch_proj_;
  ad::Var patch_pos_;
  ad::Linear time_fc1_, time_fc2_;
  ad::Linear cam_fc1_, cam_fc2_;  // adaLN camera conditioning variant
  std::vector<EncoderBlock> encoder_;
  ad::Var triplane_pos_;
  std::vector<DecoderUnit> decoder_;
  ad::Linear head_;
  ad::Var upsample_conv_w_, upsample_conv_b_;  // when triplane_upsample == 2
  NerfDecoderVars nerf_;
  std::unique_ptr<TextEmbedder> text_;
};

}  // namespace mvtri

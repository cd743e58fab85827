#include "mvtri/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "mvtri/rng.hpp"

namespace mvtri {

using ad::Tensor;
using ad::Var;

const char* to_string(ConditionMode m) {
  switch (m) {
    case ConditionMode::Unconditional: return "uncond";
    case ConditionMode::Image: return "image";
    case ConditionMode::Text: return "text";
  }
  return "?";
}

const char* to_string(CameraConditioning c) {
  return c == CameraConditioning::Plucker ? "plucker" : "adaln";
}

ConditionMode condition_mode_from_string(const std::string& s) {
  if (s == "uncond" || s == "unconditional") return ConditionMode::Unconditional;
  if (s == "image") return ConditionMode::Image;
  if (s == "text") return ConditionMode::Text;
  throw std::invalid_argument("unknown condition mode: " + s);
}

CameraConditioning camera_conditioning_from_string(const std::string& s) {
  if (s == "plucker") return CameraConditioning::Plucker;
  if (s == "adaln") return CameraConditioning::AdaLN;
  throw std::invalid_argument("unknown camera conditioning: " + s);
}

void DenoiserConfig::validate() const {
  if (image_resolution < 1 || patch_size < 1 || image_resolution % patch_size != 0)
    throw std::invalid_argument("denoiser: image_resolution must be divisible by patch_size");
  if (decoder_layers < 2 || decoder_layers % 2 != 0)
    throw std::invalid_argument("denoiser: decoder_layers must be even");
  if (encoder_width % 2 != 0 || decoder_width % 2 != 0)
    throw std::invalid_argument("denoiser: widths must be even");
  if (triplane_upsample != 1 && triplane_upsample != 2)
    throw std::invalid_argument("denoiser: triplane_upsample must be 1 or 2");
  if (num_views < 1) throw std::invalid_argument("denoiser: num_views must be >= 1");
  if (encoder_layers < 1 || triplane_token_res < 1 || triplane_channels < 1 ||
      nerf_mlp_layers < 2 || render_steps < 2)
    throw std::invalid_argument("denoiser: invalid architecture field");
}

Tensor sinusoidal_features(double t, int dim) {
  if (dim % 2 != 0) throw std::invalid_argument("sinusoidal_features: dim must be even");
  Tensor out({1, dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * i / half);
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  return out;
}

namespace {

// (3R^2, C) token grid -> (3, C, R, R) planes; token index (k*R + v)*R + u
Var tokens_to_planes(const Var& tokens, int R, int C) {
  const Tensor& tv = tokens->value;
  if (tv.rows() != static_cast<int64_t>(3) * R * R || tv.cols() != C)
    throw std::invalid_argument("tokens_to_planes: shape mismatch");
  Tensor out({3, C, R, R});
  for (int k = 0; k < 3; ++k)
    for (int v = 0; v < R; ++v)
      for (int u = 0; u < R; ++u) {
        const double* row = tv.row((static_cast<int64_t>(k) * R + v) * R + u);
        for (int c = 0; c < C; ++c)
          out[((static_cast<int64_t>(k) * C + c) * R + v) * R + u] = row[c];
      }
  auto node = std::make_shared<ad::Node>();
  node->value = std::move(out);
  if (ad::grad_enabled() && tokens->requires_grad) {
    node->requires_grad = true;
    node->parents = {tokens};
    ad::Node* tp = tokens.get();
    node->backprop = [tp, R, C](const Tensor& g, ad::GradStore& s) {
      Tensor& gt = s.grad(tp);
      for (int k = 0; k < 3; ++k)
        for (int v = 0; v < R; ++v)
          for (int u = 0; u < R; ++u) {
            double* row = gt.row((static_cast<int64_t>(k) * R + v) * R + u);
            for (int c = 0; c < C; ++c)
              row[c] += g[((static_cast<int64_t>(k) * C + c) * R + v) * R + u];
          }
    };
  }
  return node;
}

// nearest-neighbor x2 upsample of (3, C, R, R)
Var nn_upsample2(const Var& planes, int C, int R) {
  Tensor out({3, C, 2 * R, 2 * R});
  const Tensor& pv = planes->value;
  for (int64_t kc = 0; kc < 3 * C; ++kc) {
    const double* src = pv.data() + kc * R * R;
    double* dst = out.data() + kc * 4 * R * R;
    for (int v = 0; v < 2 * R; ++v)
      for (int u = 0; u < 2 * R; ++u)
        dst[v * 2 * R + u] = src[(v / 2) * R + (u / 2)];
  }
  auto node = std::make_shared<ad::Node>();
  node->value = std::move(out);
  if (ad::grad_enabled() && planes->requires_grad) {
    node->requires_grad = true;
    node->parents = {planes};
    ad::Node* pp = planes.get();
    node->backprop = [pp, C, R](const Tensor& g, ad::GradStore& s) {
      Tensor& gp = s.grad(pp);
      for (int64_t kc = 0; kc < 3 * C; ++kc) {
        const double* gs = g.data() + kc * 4 * R * R;
        double* d = gp.data() + kc * R * R;
        for (int v = 0; v < 2 * R; ++v)
          for (int u = 0; u < 2 * R; ++u) d[(v / 2) * R + (u / 2)] += gs[v * 2 * R + u];
      }
    };
  }
  return node;
}

// 3x3 same-padding conv applied to each of the three planes, shared weights;
// weight (C_out, C_in, 3, 3), bias (C_out)
Var conv3x3_planes(const Var& planes, const Var& weight, const Var& bias, int C, int R) {
  const Tensor& pv = planes->value;
  const Tensor& wv = weight->value;
  Tensor out({3, C, R, R});
  auto conv_one = [&](const double* src, double* dst, const double* w, bool accumulate) {
    for (int co = 0; co < C; ++co)
      for (int ci = 0; ci < C; ++ci) {
        const double* s = src + static_cast<int64_t>(ci) * R * R;
        double* d = dst + static_cast<int64_t>(co) * R * R;
        const double* ker = w + (static_cast<int64_t>(co) * C + ci) * 9;
        for (int v = 0; v < R; ++v)
          for (int u = 0; u < R; ++u) {
            double acc = 0.0;
            for (int dv = -1; dv <= 1; ++dv)
              for (int du = -1; du <= 1; ++du) {
                int vv = v + dv, uu = u + du;
                if (vv < 0 || vv >= R || uu < 0 || uu >= R) continue;
                acc += ker[(dv + 1) * 3 + (du + 1)] * s[vv * R + uu];
              }
            d[v * R + u] += acc;
          }
        (void)accumulate;
      }
  };
  for (int k = 0; k < 3; ++k) {
    conv_one(pv.data() + static_cast<int64_t>(k) * C * R * R,
             out.data() + static_cast<int64_t>(k) * C * R * R, wv.data(), true);
    for (int co = 0; co < C; ++co) {
      double* d = out.data() + (static_cast<int64_t>(k) * C + co) * R * R;
      const double b = bias->value[co];
      for (int i = 0; i < R * R; ++i) d[i] += b;
    }
  }
  auto node = std::make_shared<ad::Node>();
  node->value = std::move(out);
  if (ad::grad_enabled() &&
      (planes->requires_grad || weight->requires_grad || bias->requires_grad)) {
    node->requires_grad = true;
    node->parents = {planes, weight, bias};
    ad::Node* pp = planes.get();
    ad::Node* wp = weight.get();
    ad::Node* bp = bias.get();
    node->backprop = [pp, wp, bp, C, R](const Tensor& g, ad::GradStore& s) {
      Tensor* gp = pp->requires_grad ? &s.grad(pp) : nullptr;
      Tensor* gw = wp->requires_grad ? &s.grad(wp) : nullptr;
      Tensor* gb = bp->requires_grad ? &s.grad(bp) : nullptr;
      for (int k = 0; k < 3; ++k) {
        const int64_t base = static_cast<int64_t>(k) * C * R * R;
        for (int co = 0; co < C; ++co) {
          const double* grow = g.data() + base + static_cast<int64_t>(co) * R * R;
          if (gb != nullptr) {
            double acc = 0.0;
            for (int i = 0; i < R * R; ++i) acc += grow[i];
            gb->data()[co] += acc;
          }
          for (int ci = 0; ci < C; ++ci) {
            const double* src = pp->value.data() + base + static_cast<int64_t>(ci) * R * R;
            const double* ker = wp->value.data() + (static_cast<int64_t>(co) * C + ci) * 9;
            double* gsrc = gp != nullptr ? gp->data() + base + static_cast<int64_t>(ci) * R * R
                                         : nullptr;
            double* gker = gw != nullptr ? gw->data() + (static_cast<int64_t>(co) * C + ci) * 9
                                         : nullptr;
            for (int v = 0; v < R; ++v)
              for (int u = 0; u < R; ++u) {
                const double gv = grow[v * R + u];
                for (int dv = -1; dv <= 1; ++dv)
                  for (int du = -1; du <= 1; ++du) {
                    int vv = v + dv, uu = u + du;
                    if (vv < 0 || vv >= R || uu < 0 || uu >= R) continue;
                    if (gsrc != nullptr) gsrc[vv * R + uu] += ker[(dv + 1) * 3 + (du + 1)] * gv;
                    if (gker != nullptr) gker[(dv + 1) * 3 + (du + 1)] += src[vv * R + uu] * gv;
                  }
              }
          }
        }
      }
    };
  }
  return node;
}

}  // namespace

DenoiserModel::DenoiserModel(const DenoiserConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, 0xd3901e));

  const int64_t we = cfg_.encoder_width;
  const int64_t wd = cfg_.decoder_width;
  const int64_t patch_in = static_cast<int64_t>(cfg_.token_channels()) * cfg_.patch_size *
                           cfg_.patch_size;

  patch_proj_ = ad::Linear(params_, "patch_proj", patch_in, we, ad::Init::TruncNormal, rng);
  patch_pos_ = params_.add(
      "patch_pos", ad::trunc_normal({cfg_.patches_per_view(), we}, 0.02, rng));
  time_fc1_ = ad::Linear(params_, "time.fc1", wd, wd, ad::Init::TruncNormal, rng);
  time_fc2_ = ad::Linear(params_, "time.fc2", wd, wd, ad::Init::TruncNormal, rng);
  if (cfg_.camera_cond == CameraConditioning::AdaLN) {
    cam_fc1_ = ad::Linear(params_, "cam.fc1", 13, wd, ad::Init::TruncNormal, rng);
    cam_fc2_ = ad::Linear(params_, "cam.fc2", wd, wd, ad::Init::TruncNormal, rng);
  }

  const bool text_mode = cfg_.mode == ConditionMode::Text;
  if (text_mode) text_ = std::make_unique<TextEmbedder>(params_, static_cast<int>(wd), rng);

  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    EncoderBlock blk;
    std::string p = "enc" + std::to_string(l);
    blk.attn_mod = ad::AdaLnZero(params_, p + ".attn", wd, we, rng);
    blk.attn = ad::Attention(params_, p + ".attn", we, we, we, cfg_.head_dim, rng);
    if (text_mode) {
      blk.text_mod = ad::AdaLnZero(params_, p + ".text", wd, we, rng);
      blk.text_attn = ad::Attention(params_, p + ".text", we, wd, we, cfg_.head_dim, rng);
    }
    blk.mlp_mod = ad::AdaLnZero(params_, p + ".mlp", wd, we, rng);
    blk.mlp = ad::Mlp(params_, p + ".mlp", we, 4 * we, rng);
    encoder_.push_back(std::move(blk));
  }

  triplane_pos_ = params_.add(
      "triplane_pos", ad::trunc_normal({cfg_.triplane_tokens(), wd}, 0.02, rng));

  const int units = cfg_.decoder_layers / 2;
  for (int u = 0; u < units; ++u) {
    DecoderUnit unit;
    std::string p = "dec" + std::to_string(u);
    unit.cross_mod = ad::AdaLnZero(params_, p + ".cross", wd, wd, rng);
    unit.cross = ad::Attention(params_, p + ".cross", wd, we, wd, cfg_.head_dim, rng);
    if (text_mode) {
      unit.text1_mod = ad::AdaLnZero(params_, p + ".text1", wd, wd, rng);
      unit.text1 = ad::Attention(params_, p + ".text1", wd, wd, wd, cfg_.head_dim, rng);
    }
    unit.self_mod = ad::AdaLnZero(params_, p + ".self", wd, wd, rng);
    unit.self = ad::Attention(params_, p + ".self", wd, wd, wd, cfg_.head_dim, rng);
    if (text_mode) {
      unit.text2_mod = ad::AdaLnZero(params_, p + ".text2", wd, wd, rng);
      unit.text2 = ad::Attention(params_, p + ".text2", wd, wd, wd, cfg_.head_dim, rng);
    }
    unit.mlp_mod = ad::AdaLnZero(params_, p + ".mlp", wd, wd, rng);
    unit.mlp = ad::Mlp(params_, p + ".mlp", wd, 4 * wd, rng);
    decoder_.push_back(std::move(unit));
  }

  head_ = ad::Linear(params_, "head", wd, cfg_.triplane_channels, ad::Init::TruncNormal, rng);
  if (cfg_.triplane_upsample == 2) {
    upsample_conv_w_ = params_.add(
        "upsample.conv.weight",
        ad::trunc_normal({cfg_.triplane_channels, cfg_.triplane_channels, 3, 3}, 0.02, rng));
    upsample_conv_b_ =
        params_.add("upsample.conv.bias", Tensor::zeros({cfg_.triplane_channels}));
  }

  // NeRF decoder MLP, He-scaled for ReLU depth
  for (int l = 0; l < cfg_.nerf_mlp_layers; ++l) {
    int64_t in = l == 0 ? cfg_.triplane_channels : cfg_.nerf_mlp_width;
    int64_t out = l == cfg_.nerf_mlp_layers - 1 ? 4 : cfg_.nerf_mlp_width;
    Tensor w({in, out});
    double std = std::sqrt(2.0 / static_cast<double>(in));
    for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal() * std;
    ad::Linear lin;
    lin.weight = params_.add("nerf.l" + std::to_string(l) + ".weight", std::move(w));
    lin.bias = params_.add("nerf.l" + std::to_string(l) + ".bias", Tensor::zeros({out}));
    nerf_.layers.push_back(lin);
  }
}

NerfDecoderData DenoiserModel::nerf_decoder_data() const {
  NerfDecoderData d;
  for (const auto& lin : nerf_.layers) {
    d.weights.push_back(lin.weight->value);
    d.biases.push_back(lin.bias->value);
  }
  return d;
}

RenderConfig DenoiserModel::render_config(const CameraPose& pose) const {
  RenderConfig rc;
  rc.num_steps = cfg_.render_steps;
  fit_near_far(pose.position, rc);
  return rc;
}

Var DenoiserModel::time_embedding(double t) const {
  Var sin = ad::constant(sinusoidal_features(t, cfg_.decoder_width));
  return time_fc2_(ad::silu(time_fc1_(sin)));
}

Var DenoiserModel::camera_embedding(const CameraView& cam) const {
  Tensor raw({1, 13});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) raw[3 * r + c] = cam.pose.rotation(r, c);
  raw[9] = cam.pose.position.x();
  raw[10] = cam.pose.position.y();
  raw[11] = cam.pose.position.z();
  raw[12] = cam.intrinsics.fov_deg * M_PI / 180.0;
  return cam_fc2_(ad::silu(cam_fc1_(ad::constant(std::move(raw)))));
}

Var DenoiserModel::encoder_conditioning(const Var& t_emb,
                                        const std::vector<CameraView>& cameras) const {
  if (cfg_.camera_cond == CameraConditioning::Plucker) return t_emb;
  // per-view conditioning rows repeated over that view's tokens
  std::vector<Var> rows;
  rows.reserve(cameras.size());
  const int64_t np = cfg_.patches_per_view();
  for (const CameraView& cam : cameras) {
    Var cond = ad::add(t_emb, camera_embedding(cam));
    rows.push_back(ad::repeat_rows(ad::reshape(cond, {cfg_.decoder_width}), np));
  }
  return ad::concat_rows(rows);
}

Var DenoiserModel::tokenize_views(const NoisyViewSet& noisy,
                                  const std::vector<PluckerRayMap>& plucker) const {
  noisy.validate();
  const int res = cfg_.image_resolution;
  const int ps = cfg_.patch_size;
  const int grid = res / ps;
  const int ch = cfg_.token_channels();
  const bool use_plucker = ch == 9;
  if (use_plucker && plucker.size() != noisy.views.size())
    throw std::invalid_argument("tokenize: one Plucker map per view required");

  std::vector<Var> view_tokens;
  view_tokens.reserve(noisy.views.size());
  for (size_t v = 0; v < noisy.views.size(); ++v) {
    const Image& img = noisy.views[v];
    if (img.height != res || img.width != res)
      throw std::invalid_argument("tokenize: view resolution mismatch");
    if (use_plucker &&
        (plucker[v].height != res || plucker[v].width != res))
      throw std::invalid_argument("tokenize: Plucker map resolution mismatch");

    Tensor patches({static_cast<int64_t>(grid) * grid,
                    static_cast<int64_t>(ch) * ps * ps});
    for (int py = 0; py < grid; ++py)
      for (int px = 0; px < grid; ++px) {
        double* row = patches.row(static_cast<int64_t>(py) * grid + px);
        int64_t o = 0;
        for (int y = 0; y < ps; ++y)
          for (int x = 0; x < ps; ++x) {
            const int iy = py * ps + y, ix = px * ps + x;
            const double* rgb = img.px(iy, ix);
            row[o++] = rgb[0];
            row[o++] = rgb[1];
            row[o++] = rgb[2];
            if (use_plucker) {
              const double* pl =
                  plucker[v].channels.data() + 6 * (static_cast<size_t>(iy) * res + ix);
              for (int c = 0; c < 6; ++c) row[o++] = pl[c];
            }
          }
      }
    view_tokens.push_back(
        ad::add(patch_proj_(ad::constant(std::move(patches))), patch_pos_));
  }
  return view_tokens.size() == 1 ? view_tokens[0] : ad::concat_rows(view_tokens);
}

TriplaneVars DenoiserModel::reconstruct(const NoisyViewSet& noisy, int t,
                                        const std::vector<CameraView>& cameras,
                                        const TextCondition* text) const {
  noisy.validate();
  if (static_cast<int>(noisy.views.size()) != cfg_.num_views)
    throw std::invalid_argument("denoise: expected " + std::to_string(cfg_.num_views) +
                                " views, got " + std::to_string(noisy.views.size()));
  if (cameras.size() != noisy.views.size())
    throw std::invalid_argument("denoise: camera count mismatch");
  if (cfg_.mode == ConditionMode::Image) {
    for (size_t v = 0; v < noisy.clean_mask.size(); ++v)
      if (static_cast<bool>(noisy.clean_mask[v]) != (v == 0))
        throw std::invalid_argument(
            "denoise: image mode requires exactly view 0 to be clean");
  }
  if (cfg_.mode == ConditionMode::Text && text == nullptr)
    throw std::invalid_argument("denoise: text mode requires a text condition");

  std::vector<PluckerRayMap> pluckers;
  if (cfg_.camera_cond == CameraConditioning::Plucker) {
    pluckers.reserve(cameras.size());
    for (const CameraView& cam : cameras)
      pluckers.push_back(plucker_map(generate_rays(cam.intrinsics, cam.pose)));
  }

  Var tokens = tokenize_views(noisy, pluckers);
  Var t_emb = time_embedding(static_cast<double>(t));
  Var enc_cond = encoder_conditioning(t_emb, cameras);

  Var text_tokens;
  if (cfg_.mode == ConditionMode::Text) text_tokens = text_->embed(*text);

  const int64_t n_img = tokens->value.rows();
  for (const EncoderBlock& blk : encoder_) {
    tokens = ad::adaln_block(tokens, blk.attn_mod(enc_cond, n_img),
                             [&](const Var& h) { return blk.attn(h, h); });
    if (text_tokens)
      tokens = ad::adaln_block(tokens, blk.text_mod(enc_cond, n_img),
                               [&](const Var& h) { return blk.text_attn(h, text_tokens); });
    tokens = ad::adaln_block(tokens, blk.mlp_mod(enc_cond, n_img),
                             [&](const Var& h) { return blk.mlp(h); });
  }

  Var h = triplane_pos_;
  const int64_t n_tri = cfg_.triplane_tokens();
  for (const DecoderUnit& unit : decoder_) {
    h = ad::adaln_block(h, unit.cross_mod(t_emb, n_tri),
                        [&](const Var& q) { return unit.cross(q, tokens); });
    if (text_tokens)
      h = ad::adaln_block(h, unit.text1_mod(t_emb, n_tri),
                          [&](const Var& q) { return unit.text1(q, text_tokens); });
    h = ad::adaln_block(h, unit.self_mod(t_emb, n_tri),
                        [&](const Var& q) { return unit.self(q, q); });
    if (text_tokens)
      h = ad::adaln_block(h, unit.text2_mod(t_emb, n_tri),
                          [&](const Var& q) { return unit.text2(q, text_tokens); });
    h = ad::adaln_block(h, unit.mlp_mod(t_emb, n_tri),
                        [&](const Var& q) { return unit.mlp(q); });
  }

  Var planes = tokens_to_planes(head_(h), cfg_.triplane_token_res, cfg_.triplane_channels);
  int plane_res = cfg_.triplane_token_res;
  if (cfg_.triplane_upsample == 2) {
    planes = nn_upsample2(planes, cfg_.triplane_channels, plane_res);
    plane_res *= 2;
    planes = conv3x3_planes(planes, upsample_conv_w_, upsample_conv_b_,
                            cfg_.triplane_channels, plane_res);
  }
  return TriplaneVars{planes, cfg_.triplane_channels, plane_res};
}

DenoiserModel::Output DenoiserModel::denoise(const NoisyViewSet& noisy, int t,
                                             const std::vector<CameraView>& cameras,
                                             const std::string* text_prompt) {
  ad::NoGradGuard no_grad;
  TextCondition cond;
  const TextCondition* cond_ptr = nullptr;
  if (cfg_.mode == ConditionMode::Text) {
    if (text_prompt != nullptr)
      cond = tokenize_text(*text_prompt);
    else
      cond.null_flag = true;
    cond_ptr = &cond;
  }

  TriplaneVars tri = reconstruct(noisy, t, cameras, cond_ptr);
  Output out;
  out.triplane = triplane_values(tri);
  NerfDecoderData dec = nerf_decoder_data();
  out.x0.reserve(cameras.size());
  for (const CameraView& cam : cameras) {
    RenderConfig rc = render_config(cam.pose);
    RenderOutput r = render_view(out.triplane, dec, cam.intrinsics, cam.pose, rc);
    out.x0.push_back(to_diffusion_space(r.rgb));
  }
  return out;
}

DenoiserModel::Output DenoiserModel::denoise_unconditional(
    const NoisyViewSet& noisy, int t, const std::vector<CameraView>& cameras) {
  if (cfg_.mode != ConditionMode::Text)
    throw std::logic_error("denoise_unconditional: only meaningful in text mode");
  return denoise(noisy, t, cameras, nullptr);
}

}  // namespace mvtri

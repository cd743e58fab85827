#include "mvtri/training.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "mvtri/checkpoint.hpp"

namespace mvtri {

using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (warmup_steps >= total_steps)
    throw std::invalid_argument("train: warmup_steps must be < total_steps");
  if (num_input_views != 1 && num_input_views != 2 && num_input_views != 4 &&
      num_input_views != 6)
    throw std::invalid_argument("train: num_input_views must be one of {1,2,4,6}");
  if (num_novel_views < 0) throw std::invalid_argument("train: num_novel_views must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (render_patch < 1) throw std::invalid_argument("train: render_patch must be >= 1");
}

double lr_at(int step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps)
    throw std::invalid_argument("lr_at: step out of [0, total_steps]");
  if (step < cfg.warmup_steps)
    return cfg.learning_rate * static_cast<double>(step) / cfg.warmup_steps;
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          (cfg.total_steps - cfg.warmup_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));
}

LossReport reconstruction_loss(const std::vector<Image>& rendered,
                               const std::vector<Image>& truth, const TrainConfig& cfg,
                               const std::function<double()>& perceptual) {
  if (rendered.size() != truth.size())
    throw std::invalid_argument("reconstruction_loss: crop count mismatch");
  double acc = 0.0;
  int64_t count = 0;
  for (size_t i = 0; i < rendered.size(); ++i) {
    if (!rendered[i].same_shape(truth[i]))
      throw std::invalid_argument("reconstruction_loss: crop shape mismatch");
    for (size_t j = 0; j < rendered[i].rgb.size(); ++j) {
      double d = rendered[i].rgb[j] - truth[i].rgb[j];
      acc += d * d;
    }
    count += static_cast<int64_t>(rendered[i].rgb.size());
  }
  LossReport report;
  report.l2 = count > 0 ? acc / static_cast<double>(count) : 0.0;
  report.perceptual = perceptual ? perceptual() : 0.0;
  report.total = cfg.lambda_l2 * report.l2 + cfg.lambda_perceptual * report.perceptual;
  return report;
}

AdamW::AdamW(ad::ParamStore& params, const TrainConfig& cfg) : params_(params), cfg_(cfg) {
  for (const auto& [name, var] : params.items()) {
    m_.push_back(Tensor::zeros(var->value.shape()));
    v_.push_back(Tensor::zeros(var->value.shape()));
  }
}

void AdamW::step(const std::vector<Tensor>& grads, double lr) {
  const auto& items = params_.items();
  if (grads.size() != items.size())
    throw std::invalid_argument("adamw: gradient list misaligned with parameters");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < items.size(); ++i) {
    Tensor& p = items[i].second->value;
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * (mhat / (std::sqrt(vhat) + 1e-8) + cfg_.weight_decay * p[j]);
    }
  }
}

std::vector<Tensor> collect_grads(const ad::ParamStore& params, ad::GradStore& store) {
  std::vector<Tensor> out;
  out.reserve(params.items().size());
  for (const auto& [name, var] : params.items()) {
    const Tensor* g = store.find(var.get());
    out.push_back(g != nullptr ? *g : Tensor::zeros(var->value.shape()));
  }
  return out;
}

double global_norm(const std::vector<Tensor>& grads) {
  double acc = 0.0;
  for (const Tensor& g : grads)
    for (int64_t i = 0; i < g.size(); ++i) acc += g[i] * g[i];
  return std::sqrt(acc);
}

namespace {

struct RecordResult {
  std::vector<Tensor> grads;
  double l2 = 0.0;
  double perceptual = 0.0;
  double input_l2 = 0.0;
  double novel_l2 = 0.0;
  int64_t input_count = 0;
  int64_t novel_count = 0;
  uint64_t scene_seed = 0;
  int t = 0;
};

Tensor image_tensor(const Image& img) {
  Tensor t({img.pixel_count(), 3});
  std::copy(img.rgb.begin(), img.rgb.end(), t.data());
  return t;
}

RecordResult process_record(const DenoiserModel& model, const DatasetRecord& record,
                            const TrainConfig& cfg, const NoiseSchedule& schedule,
                            uint64_t record_seed, const PerceptualFn& perceptual,
                            int batch_size) {
  const DenoiserConfig& dcfg = model.config();
  Rng rng(record_seed);
  RecordResult res;
  res.scene_seed = record.scene.seed;

  const int needed = cfg.num_input_views + cfg.num_novel_views;
  const int available = static_cast<int>(record.views.size());
  if (available < needed)
    throw std::runtime_error("train: scene " + std::to_string(record.scene.seed) + " has " +
                             std::to_string(available) + " views, needs " +
                             std::to_string(needed));
  if (cfg.num_input_views != dcfg.num_views)
    throw std::runtime_error("train: num_input_views does not match the model view count");

  res.t = static_cast<int>(rng.uniform_int(1, schedule.total_steps));

  // disjoint input / novel view selection
  std::vector<int> order(static_cast<size_t>(available));
  for (int i = 0; i < available; ++i) order[static_cast<size_t>(i)] = i;
  for (int i = available - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)],
              order[static_cast<size_t>(rng.uniform_int(0, i))]);

  std::vector<int> selected(order.begin(), order.begin() + needed);
  std::vector<CameraPose> poses;
  poses.reserve(selected.size());
  for (int idx : selected) poses.push_back(record.views[static_cast<size_t>(idx)].pose);
  if (dcfg.mode == ConditionMode::Image) {
    PoseNormalization norm = normalize_poses(poses, 0);
    poses = std::move(norm.poses);
  }

  std::vector<CameraView> input_cams;
  std::vector<Image> x0;
  std::vector<uint8_t> clean_mask(static_cast<size_t>(cfg.num_input_views), 0);
  if (dcfg.mode == ConditionMode::Image) clean_mask[0] = 1;
  for (int i = 0; i < cfg.num_input_views; ++i) {
    const DatasetView& view = record.views[static_cast<size_t>(selected[static_cast<size_t>(i)])];
    input_cams.push_back({view.intrinsics, poses[static_cast<size_t>(i)]});
    x0.push_back(to_diffusion_space(dequantize(view.image)));
  }

  std::vector<Image> noise;
  noise.reserve(x0.size());
  for (const Image& img : x0) {
    Image n(img.height, img.width);
    for (double& v : n.rgb) v = rng.normal();
    noise.push_back(std::move(n));
  }
  NoisyViewSet noisy = q_sample(x0, res.t, noise, schedule, clean_mask);

  TextCondition text;
  const TextCondition* text_ptr = nullptr;
  if (dcfg.mode == ConditionMode::Text) {
    text = tokenize_text(record.scene.caption);
    if (rng.uniform() < cfg.cond_drop_prob) {
      text.token_ids.clear();
      text.null_flag = true;
    }
    text_ptr = &text;
  }

  TriplaneVars triplane = model.reconstruct(noisy, res.t, input_cams, text_ptr);
  NerfDecoderVars decoder = model.nerf_decoder();

  // one random aligned crop per supervised view (inputs then novels)
  std::vector<Var> rendered_parts, input_parts, novel_parts;
  std::vector<Tensor> truth_parts;
  for (int s = 0; s < needed; ++s) {
    const DatasetView& view = record.views[static_cast<size_t>(selected[static_cast<size_t>(s)])];
    const CameraPose& pose = poses[static_cast<size_t>(s)];
    const int res_px = view.intrinsics.width;
    const int patch = std::min(cfg.render_patch, res_px);
    const int max_off = res_px - patch;
    CropRect crop{static_cast<int>(rng.uniform_int(0, max_off)),
                  static_cast<int>(rng.uniform_int(0, max_off)), patch, patch};
    RayMap rays = generate_rays(view.intrinsics, pose, crop);
    RenderConfig rc = model.render_config(pose);
    rc.jitter = true;
    rc.jitter_seed = rng.next_u64();
    RenderVarsOutput render = render_rays_vars(triplane, decoder, rays, rc);

    Image truth_full = dequantize(view.image);
    Tensor truth = image_tensor(truth_full.crop(crop.x0, crop.y0, patch, patch));
    rendered_parts.push_back(render.rgb);
    truth_parts.push_back(truth);
    if (s < cfg.num_input_views)
      input_parts.push_back(render.rgb);
    else
      novel_parts.push_back(render.rgb);
  }

  // single mean over every supervised pixel
  Var rendered_all = rendered_parts.size() == 1 ? rendered_parts[0]
                                                : ad::concat_rows(rendered_parts);
  int64_t total_rows = 0;
  for (const Tensor& t : truth_parts) total_rows += t.rows();
  Tensor truth_all({total_rows, 3});
  int64_t row = 0;
  for (const Tensor& t : truth_parts) {
    std::copy(t.data(), t.data() + t.size(), truth_all.row(row));
    row += t.rows();
  }
  Var l2 = ad::mse(rendered_all, ad::constant(truth_all));

  Var loss = ad::scale(l2, cfg.lambda_l2);
  Var perceptual_term;
  if (perceptual && cfg.lambda_perceptual != 0.0) {
    std::vector<Var> terms;
    for (size_t i = 0; i < rendered_parts.size(); ++i)
      terms.push_back(perceptual(rendered_parts[i], truth_parts[i]));
    perceptual_term = terms[0];
    for (size_t i = 1; i < terms.size(); ++i)
      perceptual_term = ad::add(perceptual_term, terms[i]);
    perceptual_term = ad::scale(perceptual_term, 1.0 / static_cast<double>(terms.size()));
    loss = ad::add(loss, ad::scale(perceptual_term, cfg.lambda_perceptual));
  }
  loss = ad::scale(loss, 1.0 / static_cast<double>(batch_size));

  res.l2 = l2->value[0];
  res.perceptual = perceptual_term ? perceptual_term->value[0] : 0.0;
  // per-view breakdown, reported from the same rendered values
  {
    int64_t offset = 0;
    for (size_t i = 0; i < rendered_parts.size(); ++i) {
      const Tensor& rv = rendered_parts[i]->value;
      double acc = 0.0;
      for (int64_t j = 0; j < rv.size(); ++j) {
        double d = rv[j] - truth_all[offset * 3 + j];
        acc += d * d;
      }
      if (static_cast<int>(i) < cfg.num_input_views) {
        res.input_l2 += acc;
        res.input_count += rv.size();
      } else {
        res.novel_l2 += acc;
        res.novel_count += rv.size();
      }
      offset += rv.rows();
    }
    if (res.input_count > 0) res.input_l2 /= static_cast<double>(res.input_count);
    if (res.novel_count > 0) res.novel_l2 /= static_cast<double>(res.novel_count);
  }

  ad::GradStore store;
  ad::backward(loss, store);
  res.grads = collect_grads(model.params(), store);
  return res;
}

}  // namespace

LossReport train_step(DenoiserModel& model, AdamW& opt,
                      const std::vector<const DatasetRecord*>& batch, const TrainConfig& cfg,
                      const NoiseSchedule& schedule, int step, Rng& rng,
                      const PerceptualFn& perceptual) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");

  std::vector<uint64_t> seeds;
  seeds.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) seeds.push_back(rng.next_u64());

  std::vector<RecordResult> results(batch.size());
  std::vector<std::string> errors(batch.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const size_t workers = std::min<size_t>(batch.size(), hw);
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= batch.size()) return;
      try {
        results[i] = process_record(model, *batch[i], cfg, schedule, seeds[i], perceptual,
                                    static_cast<int>(batch.size()));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const std::string& err : errors)
    if (!err.empty()) throw std::runtime_error(err);

  // ordered reduction keeps training bit-deterministic under threading
  std::vector<Tensor> grads = std::move(results[0].grads);
  for (size_t i = 1; i < results.size(); ++i)
    for (size_t p = 0; p < grads.size(); ++p) grads[p].add_(results[i].grads[p]);

  LossReport report;
  double input_l2 = 0.0, novel_l2 = 0.0;
  int64_t novel_reports = 0;
  for (const RecordResult& r : results) {
    report.l2 += r.l2;
    report.perceptual += r.perceptual;
    input_l2 += r.input_l2;
    if (r.novel_count > 0) {
      novel_l2 += r.novel_l2;
      ++novel_reports;
    }
  }
  const double b = static_cast<double>(results.size());
  report.l2 /= b;
  report.perceptual /= b;
  report.input_view_l2 = input_l2 / b;
  report.novel_view_l2 = novel_reports > 0 ? novel_l2 / static_cast<double>(novel_reports) : 0.0;
  report.total = cfg.lambda_l2 * report.l2 + cfg.lambda_perceptual * report.perceptual;

  if (!std::isfinite(report.total)) {
    std::string detail;
    for (const RecordResult& r : results)
      if (!std::isfinite(r.l2))
        detail += " scene=" + std::to_string(r.scene_seed) + " t=" + std::to_string(r.t);
    throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step) +
                             detail);
  }

  const double norm = global_norm(grads);
  if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
    const double factor = cfg.grad_clip / norm;
    for (Tensor& g : grads) g.scale_(factor);
  }
  opt.step(grads, lr_at(step, cfg));
  return report;
}

TrainLoopResult run_training(DenoiserModel& model, const std::vector<DatasetRecord>& dataset,
                             const TrainConfig& cfg, const NoiseSchedule& schedule,
                             const std::string& out_dir, const std::string& config_json,
                             uint64_t seed, const PerceptualFn& perceptual, bool quiet) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("run_training: empty dataset");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
  if (!log) throw std::runtime_error("run_training: cannot write log under " + out_dir);

  AdamW opt(model.params(), cfg);
  Rng rng(derive_seed(seed, 0x77a1));
  TrainLoopResult result;
  const auto start = std::chrono::steady_clock::now();

  auto save = [&](int step, const std::string& name) {
    CheckpointMeta meta;
    meta.config_json = config_json;
    meta.step = step;
    meta.schedule_timesteps = schedule.total_steps;
    std::string path = (fs::path(out_dir) / name).string();
    save_checkpoint(path, meta, model.params());
    return path;
  };

  for (int step = 1; step <= cfg.total_steps; ++step) {
    std::vector<const DatasetRecord*> batch;
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(
          &dataset[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(dataset.size()) - 1))]);

    LossReport report = train_step(model, opt, batch, cfg, schedule, step, rng, perceptual);
    if (step == 1) result.first = report;
    result.last = report;

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    nlohmann::json line = {{"step", step},
                           {"lr", lr_at(step, cfg)},
                           {"total", report.total},
                           {"l2", report.l2},
                           {"perceptual", report.perceptual},
                           {"input_view_l2", report.input_view_l2},
                           {"novel_view_l2", report.novel_view_l2},
                           {"wall_ms", wall_ms}};
    log << line.dump() << "\n";
    if (!quiet && (step % 25 == 0 || step == 1))
      std::cout << "step " << step << "/" << cfg.total_steps << " loss " << report.total
                << " lr " << lr_at(step, cfg) << "\n";

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.total_steps)
      save(step, "checkpoint_" + std::to_string(step) + ".ckpt");
  }
  result.final_checkpoint = save(cfg.total_steps, "checkpoint_final.ckpt");
  return result;
}

}  // namespace mvtri

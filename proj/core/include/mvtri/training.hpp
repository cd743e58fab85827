#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvtri/dataset.hpp"
#include "mvtri/denoiser.hpp"
#include "mvtri/diffusion.hpp"

namespace mvtri {

struct TrainConfig {
  double learning_rate = 4e-4;
  int warmup_steps = 100;
  int total_steps = 500;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  int batch_size = 2;
  int num_input_views = 4;
  int num_novel_views = 2;
  int render_patch = 16;
  double lambda_l2 = 1.0;
  double lambda_perceptual = 0.0;
  double cond_drop_prob = 0.1;
  double grad_clip = 1.0;
  int checkpoint_every = 250;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// linear warmup to learning_rate, then cosine decay to zero
double lr_at(int step, const TrainConfig& cfg);

struct LossReport {
  double total = 0.0;
  double l2 = 0.0;
  double perceptual = 0.0;
  double input_view_l2 = 0.0;
  double novel_view_l2 = 0.0;
};

// Pluggable perceptual term: (rendered crop, ground-truth crop) -> scalar
// graph node. Null means the zero functional.
using PerceptualFn =
    std::function<ad::Var(const ad::Var& rendered, const ad::Tensor& truth)>;

// Plain-value loss over matching crop lists; mirrors the in-graph math.
LossReport reconstruction_loss(const std::vector<Image>& rendered,
                               const std::vector<Image>& truth, const TrainConfig& cfg,
                               const std::function<double()>& perceptual = nullptr);

// Decoupled weight decay + bias-corrected moments over the parameter store.
class AdamW {
 public:
  AdamW(ad::ParamStore& params, const TrainConfig& cfg);
  // grads aligned with the store order
  void step(const std::vector<ad::Tensor>& grads, double lr);
  int64_t steps_taken() const { return t_; }

 private:
  ad::ParamStore& params_;
  TrainConfig cfg_;
  std::vector<ad::Tensor> m_, v_;
  int64_t t_ = 0;
};

// One optimization step over a batch of records: per record, sample t,
// pick input + disjoint novel views, noise the inputs (view 0 clean in
// image mode, text dropped with cond_drop_prob in text mode), reconstruct,
// render one random render_patch^2 crop per supervised view and take the
// weighted reconstruction loss. Records run in parallel with per-record
// substreams and an ordered gradient reduction, so results are independent
// of thread scheduling.
LossReport train_step(DenoiserModel& model, AdamW& opt,
                      const std::vector<const DatasetRecord*>& batch, const TrainConfig& cfg,
                      const NoiseSchedule& schedule, int step, Rng& rng,
                      const PerceptualFn& perceptual = nullptr);

// gradient norms for a named subset of parameters, for reporting/tests
std::vector<ad::Tensor> collect_grads(const ad::ParamStore& params, ad::GradStore& store);
double global_norm(const std::vector<ad::Tensor>& grads);

struct TrainLoopResult {
  LossReport first;
  LossReport last;
  std::string final_checkpoint;
};

// Full loop: JSONL log (step, lr, loss components, wall time) plus periodic
// checkpoints embedding the supplied config JSON.
TrainLoopResult run_training(DenoiserModel& model, const std::vector<DatasetRecord>& dataset,
                             const TrainConfig& cfg, const NoiseSchedule& schedule,
                             const std::string& out_dir, const std::string& config_json,
                             uint64_t seed, const PerceptualFn& perceptual = nullptr,
                             bool quiet = false);

}  // namespace mvtri

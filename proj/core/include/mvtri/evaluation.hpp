#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "mvtri/dataset.hpp"
#include "mvtri/denoiser.hpp"
#include "mvtri/diffusion.hpp"
#include "mvtri/image.hpp"

namespace mvtri {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(1 / MSE) with peak 1, capped at 99 dB (zero-MSE convention).
double psnr(const Image& a, const Image& b);

// Mean local SSIM over an 11x11 sigma-1.5 Gaussian window on the luminance
// channel (weights 0.2126, 0.7152, 0.0722), C1 = 0.01^2, C2 = 0.03^2,
// valid-window positions only. Throws if the image is smaller than the window.
double ssim(const Image& a, const Image& b);

// Symmetric sum of mean squared nearest-neighbor distances, accelerated by a
// kd-tree.
double chamfer(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b);

// Static 3D kd-tree for nearest-neighbor queries.
class KdTree3 {
 public:
  explicit KdTree3(std::vector<Eigen::Vector3d> points);
  double nearest_squared(const Eigen::Vector3d& query) const;
  size_t size() const { return points_.size(); }

 private:
  struct Node {
    int left = -1, right = -1;
    int axis = 0;
    int point = 0;
  };
  int build(int begin, int end, int depth);
  void search(int node, const Eigen::Vector3d& q, double& best) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct SceneMetrics {
  uint64_t seed = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double chamfer = 0.0;
};

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double chamfer = 0.0;
  std::vector<SceneMetrics> per_scene;
};

struct EvalConfig {
  int holdout_views = 20;
  int num_inference_steps = 20;
  int mesh_resolution = 64;
  double density_threshold = 5.0;
  int chamfer_samples = 16384;
  uint64_t seed = 0;
};

// Per scene: condition on view 0, sample a triplane, render it at the
// held-out cameras for PSNR/SSIM, extract a mesh and compare surface samples
// against the analytic scene for Chamfer distance. All cameras are expressed
// in the conditioning view's normalized frame.
MetricReport evaluate_reconstruction(DenoiserModel& model,
                                     const std::vector<DatasetRecord>& dataset,
                                     const NoiseSchedule& schedule, const EvalConfig& cfg);

void write_metric_json(const std::string& path, const MetricReport& report);
void write_metric_csv(const std::string& path, const MetricReport& report);

}  // namespace mvtri

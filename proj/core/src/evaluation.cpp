#include "mvtri/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mvtri/isosurface.hpp"
#include "mvtri/rng.hpp"

namespace mvtri {

double psnr(const Image& a, const Image& b) {
  double mse = image_mse(a, b);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> luminance(const Image& img) {
  std::vector<double> out(static_cast<size_t>(img.pixel_count()));
  for (int64_t p = 0; p < img.pixel_count(); ++p)
    out[static_cast<size_t>(p)] = 0.2126 * img.rgb[3 * p] + 0.7152 * img.rgb[3 * p + 1] +
                                  0.0722 * img.rgb[3 * p + 2];
  return out;
}

constexpr int kWin = 11;

const std::vector<double>& gaussian_kernel() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(kWin);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      double x = i - (kWin - 1) / 2.0;
      k[static_cast<size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
      sum += k[static_cast<size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

// separable valid-mode Gaussian filter of an h x w scalar field
std::vector<double> gauss_valid(const std::vector<double>& in, int h, int w, int& oh,
                                int& ow) {
  const auto& k = gaussian_kernel();
  ow = w - kWin + 1;
  oh = h - kWin + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += k[static_cast<size_t>(i)] * in[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (a.height < kWin || a.width < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;

  std::vector<double> x = luminance(a), y = luminance(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  int oh = 0, ow = 0;
  std::vector<double> mx = gauss_valid(x, a.height, a.width, oh, ow);
  std::vector<double> my = gauss_valid(y, a.height, a.width, oh, ow);
  std::vector<double> mxx = gauss_valid(xx, a.height, a.width, oh, ow);
  std::vector<double> myy = gauss_valid(yy, a.height, a.width, oh, ow);
  std::vector<double> mxy = gauss_valid(xy, a.height, a.width, oh, ow);

  double acc = 0.0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mx.size());
}

KdTree3::KdTree3(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("kdtree: empty point set");
  index_.resize(points_.size());
  std::iota(index_.begin(), index_.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(0, static_cast<int>(points_.size()), 0);
}

int KdTree3::build(int begin, int end, int depth) {
  if (begin >= end) return -1;
  const int axis = depth % 3;
  const int mid = (begin + end) / 2;
  std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                   [&](int lhs, int rhs) {
                     return points_[static_cast<size_t>(lhs)][axis] <
                            points_[static_cast<size_t>(rhs)][axis];
                   });
  Node node;
  node.axis = axis;
  node.point = index_[static_cast<size_t>(mid)];
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid + 1, end, depth + 1);
  nodes_[static_cast<size_t>(self)].left = left;
  nodes_[static_cast<size_t>(self)].right = right;
  return self;
}

void KdTree3::search(int node, const Eigen::Vector3d& q, double& best) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<size_t>(node)];
  const Eigen::Vector3d& p = points_[static_cast<size_t>(n.point)];
  best = std::min(best, (q - p).squaredNorm());
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff <= 0.0 ? n.left : n.right;
  const int far = diff <= 0.0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff < best) search(far, q, best);
}

double KdTree3::nearest_squared(const Eigen::Vector3d& query) const {
  double best = std::numeric_limits<double>::infinity();
  search(root_, query, best);
  return best;
}

double chamfer(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
  KdTree3 tree_a(a), tree_b(b);
  double ab = 0.0;
  for (const auto& p : a) ab += tree_b.nearest_squared(p);
  double ba = 0.0;
  for (const auto& p : b) ba += tree_a.nearest_squared(p);
  return ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size());
}

MetricReport evaluate_reconstruction(DenoiserModel& model,
                                     const std::vector<DatasetRecord>& dataset,
                                     const NoiseSchedule& schedule, const EvalConfig& cfg) {
  if (model.config().mode != ConditionMode::Image)
    throw std::invalid_argument("evaluate_reconstruction: image-conditioned checkpoints only");
  MetricReport report;
  for (const DatasetRecord& record : dataset) {
    if (static_cast<int>(record.views.size()) < cfg.holdout_views + 1)
      throw std::runtime_error("eval: scene " + std::to_string(record.scene.seed) + " has " +
                               std::to_string(record.views.size()) + " views, needs " +
                               std::to_string(cfg.holdout_views + 1));

    // view 0 conditions; its normalized frame hosts the sampling cameras
    std::vector<CameraPose> poses;
    for (const DatasetView& v : record.views) poses.push_back(v.pose);
    PoseNormalization norm = normalize_poses(poses, 0);

    const int resolution = record.views[0].intrinsics.width;
    const double fov = record.views[0].intrinsics.fov_deg;
    SampleOptions opts;
    opts.num_inference_steps = cfg.num_inference_steps;
    opts.seed = derive_seed(cfg.seed, record.scene.seed);
    opts.resolution = resolution;
    opts.fov_deg = fov;
    for (const auto& [intr, pose] :
         circle_viewpoints(model.config().num_views, 2.0, 0.0, fov, resolution))
      opts.cameras.push_back({intr, pose});
    opts.cameras[0].pose = norm.poses[0];  // canonical frame by construction

    SampleCondition condition;
    condition.image = dequantize(record.views[0].image);

    SampleResult sampled = sample_loop(model, condition, schedule, opts);

    NerfDecoderData decoder = model.nerf_decoder_data();
    double psnr_acc = 0.0, ssim_acc = 0.0;
    for (int h = 1; h <= cfg.holdout_views; ++h) {
      const DatasetView& view = record.views[static_cast<size_t>(h)];
      RenderConfig rc = model.render_config(norm.poses[static_cast<size_t>(h)]);
      RenderOutput rendered = render_view(sampled.triplane, decoder, view.intrinsics,
                                          norm.poses[static_cast<size_t>(h)], rc);
      Image truth = dequantize(view.image);
      psnr_acc += psnr(rendered.rgb, truth);
      ssim_acc += ssim(rendered.rgb, truth);
    }

    TriMesh mesh = extract_mesh(sampled.triplane, decoder, cfg.mesh_resolution,
                                cfg.density_threshold);
    double cd = std::numeric_limits<double>::quiet_NaN();
    if (!mesh.empty()) {
      std::vector<Eigen::Vector3d> mesh_pts =
          sample_mesh_surface(mesh, cfg.chamfer_samples, opts.seed);
      // analytic surface samples, moved into the normalized frame
      std::vector<Eigen::Vector3d> truth_pts =
          surface_samples(record.scene, cfg.chamfer_samples, opts.seed);
      for (auto& p : truth_pts) p = norm.rotation * p + norm.translation;
      cd = chamfer(mesh_pts, truth_pts);
    }

    SceneMetrics m;
    m.seed = record.scene.seed;
    m.psnr_db = psnr_acc / cfg.holdout_views;
    m.ssim = ssim_acc / cfg.holdout_views;
    m.chamfer = cd;
    report.per_scene.push_back(m);
  }

  for (const SceneMetrics& m : report.per_scene) {
    report.psnr_db += m.psnr_db;
    report.ssim += m.ssim;
    report.chamfer += m.chamfer;
  }
  const double n = static_cast<double>(report.per_scene.size());
  if (n > 0) {
    report.psnr_db /= n;
    report.ssim /= n;
    report.chamfer /= n;
  }
  return report;
}

void write_metric_json(const std::string& path, const MetricReport& report) {
  nlohmann::json j;
  j["psnr_db"] = report.psnr_db;
  j["ssim"] = report.ssim;
  j["chamfer"] = report.chamfer;
  nlohmann::json scenes = nlohmann::json::array();
  for (const SceneMetrics& m : report.per_scene)
    scenes.push_back({{"seed", m.seed},
                      {"psnr_db", m.psnr_db},
                      {"ssim", m.ssim},
                      {"chamfer", m.chamfer}});
  j["per_scene"] = scenes;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write metric report: " + path);
  f << j.dump(2) << "\n";
}

void write_metric_csv(const std::string& path, const MetricReport& report) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write metric report: " + path);
  f << "scene,psnr_db,ssim,chamfer\n";
  char buf[160];
  for (const SceneMetrics& m : report.per_scene) {
    std::snprintf(buf, sizeof(buf), "%llu,%.6f,%.6f,%.6f\n",
                  static_cast<unsigned long long>(m.seed), m.psnr_db, m.ssim, m.chamfer);
    f << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f,%.6f\n", report.psnr_db, report.ssim,
                report.chamfer);
  f << buf;
}

}  // namespace mvtri

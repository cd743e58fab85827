#include "mvtri/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvtri/png_io.hpp"
#include "mvtri/rng.hpp"

namespace mvtri {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<PaletteColor>& palette() {
  static const std::vector<PaletteColor> kPalette = {
      {"red", 204, 26, 26},     {"green", 26, 179, 26},  {"blue", 26, 26, 204},
      {"yellow", 230, 204, 26}, {"cyan", 26, 204, 204},  {"magenta", 204, 26, 204},
      {"orange", 230, 128, 26}, {"purple", 128, 26, 179},
  };
  return kPalette;
}

bool Primitive::contains(const Eigen::Vector3d& p) const {
  Eigen::Vector3d d = p - center;
  if (kind == PrimitiveKind::Sphere) return d.norm() <= half_size.x();
  return std::abs(d.x()) <= half_size.x() && std::abs(d.y()) <= half_size.y() &&
         std::abs(d.z()) <= half_size.z();
}

double Primitive::bounding_radius() const {
  return kind == PrimitiveKind::Sphere ? half_size.x() : half_size.norm();
}

double Primitive::surface_area() const {
  if (kind == PrimitiveKind::Sphere) {
    double r = half_size.x();
    return 4.0 * M_PI * r * r;
  }
  double a = half_size.x(), b = half_size.y(), c = half_size.z();
  return 8.0 * (a * b + b * c + c * a);
}

namespace {

const char* kind_word(PrimitiveKind k) {
  return k == PrimitiveKind::Sphere ? "sphere" : "box";
}

std::string phrase(const Primitive& p) {
  std::string color = palette()[static_cast<size_t>(p.color)].name;
  std::string article = (color == "orange") ? "an" : "a";
  return article + " " + color + " " + kind_word(p.kind);
}

// spatial relation of a relative to b, judged by the dominant offset axis as
// seen from the canonical front camera (+x right, +y away, +z up)
std::string relation(const Eigen::Vector3d& d) {
  int axis = 0;
  d.cwiseAbs().maxCoeff(&axis);
  switch (axis) {
    case 0: return d.x() > 0 ? "right of" : "left of";
    case 1: return d.y() > 0 ? "behind" : "in front of";
    default: return d.z() > 0 ? "above" : "below";
  }
}

std::string make_caption(const std::vector<Primitive>& prims) {
  if (prims.size() == 1) return phrase(prims[0]);
  if (prims.size() == 2) {
    return phrase(prims[0]) + " " + relation(prims[0].center - prims[1].center) + " " +
           phrase(prims[1]);
  }
  std::string s = "a scene with " + phrase(prims[0]);
  for (size_t i = 1; i + 1 < prims.size(); ++i) s += " " + phrase(prims[i]);
  return s + " and " + phrase(prims.back());
}

}  // namespace

SceneSpec random_scene(uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5ce4e));
  SceneSpec scene;
  scene.seed = seed;
  const int count = static_cast<int>(rng.uniform_int(1, 4));
  for (int i = 0; i < count; ++i) {
    Primitive prim;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      prim.kind = rng.uniform() < 0.5 ? PrimitiveKind::Sphere : PrimitiveKind::Box;
      prim.center = {rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)};
      if (prim.kind == PrimitiveKind::Sphere) {
        double r = rng.uniform(0.1, 0.4);
        prim.half_size = {r, r, r};
      } else {
        prim.half_size = {rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4),
                          rng.uniform(0.1, 0.4)};
      }
      prim.color = static_cast<int>(rng.uniform_int(0, 7));
      const PaletteColor& c = palette()[static_cast<size_t>(prim.color)];
      prim.albedo = {c.r / 255.0, c.g / 255.0, c.b / 255.0};
      placed = true;
      for (const Primitive& other : scene.primitives) {
        double dist = (prim.center - other.center).norm();
        if (dist <= prim.bounding_radius() + other.bounding_radius()) {
          placed = false;
          break;
        }
      }
    }
    if (!placed)
      throw std::runtime_error("random_scene: placement failed after 1000 attempts (seed " +
                               std::to_string(seed) + ")");
    scene.primitives.push_back(prim);
  }
  scene.caption = make_caption(scene.primitives);
  return scene;
}

std::vector<std::pair<PrimitiveKind, int>> parse_caption(const std::string& caption) {
  std::vector<std::pair<PrimitiveKind, int>> out;
  std::istringstream is(caption);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  for (size_t i = 0; i + 1 < words.size(); ++i) {
    int color = -1;
    for (size_t c = 0; c < palette().size(); ++c)
      if (words[i] == palette()[c].name) color = static_cast<int>(c);
    if (color < 0) continue;
    if (words[i + 1] == "sphere")
      out.emplace_back(PrimitiveKind::Sphere, color);
    else if (words[i + 1] == "box")
      out.emplace_back(PrimitiveKind::Box, color);
  }
  return out;
}

namespace {

// returns smallest positive hit parameter, or +inf
double hit_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                  const Eigen::Vector3d& center, double radius) {
  Eigen::Vector3d oc = o - center;
  double b = oc.dot(d);
  double c = oc.squaredNorm() - radius * radius;
  double disc = b * b - c;
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  double s = std::sqrt(disc);
  double t = -b - s;
  if (t > 0.0) return t;
  t = -b + s;
  return t > 0.0 ? t : std::numeric_limits<double>::infinity();
}

double hit_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
               const Eigen::Vector3d& center, const Eigen::Vector3d& half) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    double lo = center[a] - half[a], hi = center[a] + half[a];
    if (std::abs(d[a]) < 1e-300) {
      if (o[a] < lo || o[a] > hi) return std::numeric_limits<double>::infinity();
      continue;
    }
    double inv = 1.0 / d[a];
    double ta = (lo - o[a]) * inv, tb = (hi - o[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0 > 0.0 ? t0 : (t1 > 0.0 ? t1 : std::numeric_limits<double>::infinity());
}

double hit_primitive(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                     const Primitive& p) {
  return p.kind == PrimitiveKind::Sphere ? hit_sphere(o, d, p.center, p.half_size.x())
                                         : hit_box(o, d, p.center, p.half_size);
}

}  // namespace

Image raytrace(const SceneSpec& scene, const CameraIntrinsics& intr,
               const CameraPose& pose) {
  RayMap rays = generate_rays(intr, pose);
  Image img(intr.height, intr.width);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      Eigen::Vector3d o = rays.origin(y, x), d = rays.direction(y, x);
      double best = std::numeric_limits<double>::infinity();
      const Primitive* hit = nullptr;
      for (const Primitive& p : scene.primitives) {
        double t = hit_primitive(o, d, p);
        if (t < best) {
          best = t;
          hit = &p;
        }
      }
      double* px = img.px(y, x);
      if (hit) {
        px[0] = hit->albedo.x();
        px[1] = hit->albedo.y();
        px[2] = hit->albedo.z();
      } else {
        px[0] = kBackground[0];
        px[1] = kBackground[1];
        px[2] = kBackground[2];
      }
    }
  }
  return img;
}

DensityField scene_density_oracle(const SceneSpec& scene, double sigma_inside) {
  return [scene, sigma_inside](const Eigen::Vector3d& p) -> FieldSample {
    for (const Primitive& prim : scene.primitives)
      if (prim.contains(p)) return {sigma_inside, prim.albedo};
    return {0.0, {kBackground[0], kBackground[1], kBackground[2]}};
  };
}

std::vector<Eigen::Vector3d> surface_samples(const SceneSpec& scene, int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("surface_samples: n must be >= 1");
  Rng rng(derive_seed(seed, 0x5a3b1e5));
  std::vector<double> cumulative;
  double total = 0.0;
  for (const Primitive& p : scene.primitives) {
    total += p.surface_area();
    cumulative.push_back(total);
  }
  std::vector<Eigen::Vector3d> out;
  out.reserve(static_cast<size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    double u = rng.uniform(0.0, total);
    size_t pi = static_cast<size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    if (pi >= scene.primitives.size()) pi = scene.primitives.size() - 1;
    const Primitive& p = scene.primitives[pi];
    Eigen::Vector3d point;
    if (p.kind == PrimitiveKind::Sphere) {
      // uniform direction via normalized Gaussian triple
      Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
      double nrm = dir.norm();
      if (nrm < 1e-12) continue;
      point = p.center + p.half_size.x() * dir / nrm;
    } else {
      const Eigen::Vector3d& h = p.half_size;
      double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};  // per axis pair
      double asum = 2.0 * (areas[0] + areas[1] + areas[2]);
      double pick = rng.uniform(0.0, asum);
      int face_axis = 0;
      double sign = 1.0;
      double acc = 0.0;
      for (int a = 0; a < 3 && pick >= acc; ++a) {
        for (double s : {-1.0, 1.0}) {
          acc += areas[a];
          if (pick < acc) {
            face_axis = a;
            sign = s;
            goto face_chosen;
          }
        }
      }
    face_chosen:
      point = p.center;
      point[face_axis] += sign * h[face_axis];
      int u_axis = (face_axis + 1) % 3, v_axis = (face_axis + 2) % 3;
      point[u_axis] += rng.uniform(-h[u_axis], h[u_axis]);
      point[v_axis] += rng.uniform(-h[v_axis], h[v_axis]);
    }
    bool buried = false;
    for (size_t oi = 0; oi < scene.primitives.size(); ++oi)
      if (oi != pi && scene.primitives[oi].contains(point)) buried = true;
    if (!buried) out.push_back(point);
  }
  return out;
}

CameraPose random_orbit_pose(Rng& rng) {
  double azim = rng.uniform(0.0, 2.0 * M_PI);
  double elev = rng.uniform(-10.0, 60.0) * M_PI / 180.0;
  double radius = rng.uniform(1.8, 2.4);
  Eigen::Vector3d pos(radius * std::cos(elev) * std::sin(azim),
                      -radius * std::cos(elev) * std::cos(azim),
                      radius * std::sin(elev));
  return look_at_origin(pos);
}

namespace {

json camera_to_json(const CameraIntrinsics& intr, const CameraPose& pose) {
  json j;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[static_cast<size_t>(3 * r + c)] = pose.rotation(r, c);
  j["rotation"] = rot;
  j["position"] = {pose.position.x(), pose.position.y(), pose.position.z()};
  j["fov_deg"] = intr.fov_deg;
  j["width"] = intr.width;
  j["height"] = intr.height;
  return j;
}

void camera_from_json(const json& j, CameraIntrinsics& intr, CameraPose& pose) {
  auto rot = j.at("rotation").get<std::vector<double>>();
  if (rot.size() != 9) throw std::runtime_error("manifest: rotation must have 9 entries");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot[static_cast<size_t>(3 * r + c)];
  auto p = j.at("position").get<std::vector<double>>();
  if (p.size() != 3) throw std::runtime_error("manifest: position must have 3 entries");
  pose.position = {p[0], p[1], p[2]};
  intr.fov_deg = j.at("fov_deg").get<double>();
  intr.width = j.at("width").get<int>();
  intr.height = j.at("height").get<int>();
}

std::string view_image_name(int scene_idx, int view_idx) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "images/scene%05d_view%03d.png", scene_idx, view_idx);
  return buf;
}

}  // namespace

void build_dataset(const DatasetConfig& cfg, const std::string& out_path) {
  fs::path root(out_path);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec)
    throw std::runtime_error("build_dataset: cannot create " + (root / "images").string() +
                             ": " + ec.message());

  json manifest = json::array();
  for (int si = 0; si < cfg.num_scenes; ++si) {
    uint64_t scene_seed = derive_seed(cfg.seed, static_cast<uint64_t>(si));
    SceneSpec scene = random_scene(scene_seed);
    Rng cam_rng(derive_seed(scene_seed, 0xca3e7a));
    json entry;
    entry["seed"] = scene_seed;
    entry["caption"] = scene.caption;
    json views = json::array();
    for (int vi = 0; vi < cfg.views_per_scene; ++vi) {
      CameraIntrinsics intr{cfg.fov_deg, cfg.resolution, cfg.resolution};
      CameraPose pose = random_orbit_pose(cam_rng);
      Image img = raytrace(scene, intr, pose);
      std::string rel = view_image_name(si, vi);
      write_png((root / rel).string(), quantize(img));
      json v = camera_to_json(intr, pose);
      v["image"] = rel;
      views.push_back(v);
    }
    entry["views"] = views;
    manifest.push_back(entry);
  }

  std::ofstream f(root / "manifest.json");
  if (!f) throw std::runtime_error("build_dataset: cannot write manifest under " + out_path);
  f << manifest.dump(2) << "\n";
  if (!f) throw std::runtime_error("build_dataset: manifest write failed: " + out_path);
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  fs::path root(path);
  std::ifstream f(root / "manifest.json");
  if (!f)
    throw std::runtime_error("load_dataset: missing manifest.json under " + path);
  json manifest = json::parse(f);

  std::vector<DatasetRecord> out;
  for (const json& entry : manifest) {
    DatasetRecord rec;
    rec.scene = random_scene(entry.at("seed").get<uint64_t>());
    if (rec.scene.caption != entry.at("caption").get<std::string>())
      throw std::runtime_error("load_dataset: caption mismatch for seed " +
                               std::to_string(rec.scene.seed));
    for (const json& v : entry.at("views")) {
      DatasetView view;
      camera_from_json(v, view.intrinsics, view.pose);
      view.image_path = v.at("image").get<std::string>();
      view.image = read_png((root / view.image_path).string());
      rec.views.push_back(std::move(view));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace mvtri

#include "mvtri/isosurface.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "mvtri/rng.hpp"

namespace mvtri {

namespace {

// cube corner offsets, index = dx + 2*dy + 4*dz is NOT used; keep the
// classical ordering with the main diagonal between corners 0 and 6
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

// Kuhn subdivision: six tetrahedra sharing the 0-6 diagonal; face diagonals
// match between neighboring cells by translation
constexpr int kTets[6][4] = {{0, 5, 1, 6}, {0, 1, 2, 6}, {0, 2, 3, 6},
                             {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}};

struct Welder {
  std::unordered_map<uint64_t, int> index;
  std::vector<Eigen::Vector3d>* vertices;

  int vertex(uint64_t key, const Eigen::Vector3d& p) {
    auto [it, inserted] = index.emplace(key, static_cast<int>(vertices->size()));
    if (inserted) vertices->push_back(p);
    return it->second;
  }
};

}  // namespace

int TriMesh::connected_components() const {
  std::vector<int> parent(vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  };
  for (const auto& f : faces) {
    int a = find(f[0]);
    int b = find(f[1]);
    int c = find(f[2]);
    parent[static_cast<size_t>(b)] = a;
    parent[static_cast<size_t>(c)] = find(a);
  }
  int count = 0;
  std::vector<bool> used(vertices.size(), false);
  for (const auto& f : faces) used[static_cast<size_t>(f[0])] = true;
  for (const auto& f : faces) {
    used[static_cast<size_t>(f[1])] = true;
    used[static_cast<size_t>(f[2])] = true;
  }
  std::vector<bool> seen(vertices.size(), false);
  for (size_t v = 0; v < vertices.size(); ++v) {
    if (!used[v]) continue;
    int root = find(static_cast<int>(v));
    if (!seen[static_cast<size_t>(root)]) {
      seen[static_cast<size_t>(root)] = true;
      ++count;
    }
  }
  return count;
}

double TriMesh::surface_area() const {
  double area = 0.0;
  for (const auto& f : faces) {
    const Eigen::Vector3d& a = vertices[static_cast<size_t>(f[0])];
    const Eigen::Vector3d& b = vertices[static_cast<size_t>(f[1])];
    const Eigen::Vector3d& c = vertices[static_cast<size_t>(f[2])];
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

TriMesh extract_mesh_from_grid(const std::vector<double>& grid, int resolution,
                               double threshold) {
  if (resolution < 8) throw std::invalid_argument("extract_mesh: resolution must be >= 8");
  const int64_t r = resolution;
  if (static_cast<int64_t>(grid.size()) != r * r * r)
    throw std::invalid_argument("extract_mesh: grid size mismatch");

  auto value = [&](int64_t i, int64_t j, int64_t k) {
    return grid[static_cast<size_t>((i * r + j) * r + k)];
  };
  auto point = [&](int64_t i, int64_t j, int64_t k) {
    return Eigen::Vector3d(-1.0 + 2.0 * i / (r - 1), -1.0 + 2.0 * j / (r - 1),
                           -1.0 + 2.0 * k / (r - 1));
  };
  auto node_id = [&](int64_t i, int64_t j, int64_t k) -> uint64_t {
    return static_cast<uint64_t>((i * r + j) * r + k);
  };

  TriMesh mesh;
  Welder welder{{}, &mesh.vertices};

  // one interpolated vertex per crossed lattice edge, keyed by its endpoints;
  // the welder keeps the first insertion so shared edges agree exactly
  auto edge_vertex = [&](uint64_t na, double va, const Eigen::Vector3d& pa, uint64_t nb,
                         double vb, const Eigen::Vector3d& pb) {
    const uint64_t key = na < nb ? (na << 32) | nb : (nb << 32) | na;
    const double t = va == vb ? 0.5 : (threshold - va) / (vb - va);
    return welder.vertex(key, pa + t * (pb - pa));
  };

  for (int64_t i = 0; i + 1 < r; ++i) {
    for (int64_t j = 0; j + 1 < r; ++j) {
      for (int64_t k = 0; k + 1 < r; ++k) {
        uint64_t ids[8];
        double vals[8];
        Eigen::Vector3d pts[8];
        for (int c = 0; c < 8; ++c) {
          int64_t ci = i + kCorner[c][0], cj = j + kCorner[c][1], ck = k + kCorner[c][2];
          ids[c] = node_id(ci, cj, ck);
          vals[c] = value(ci, cj, ck);
          pts[c] = point(ci, cj, ck);
        }
        for (const auto& tet : kTets) {
          int inside[4], in_count = 0, out_count = 0;
          int ins[4], outs[4];
          for (int c = 0; c < 4; ++c) {
            inside[c] = vals[tet[c]] > threshold;
            if (inside[c])
              ins[in_count++] = tet[c];
            else
              outs[out_count++] = tet[c];
          }
          auto ev = [&](int a, int b) {
            return edge_vertex(ids[a], vals[a], pts[a], ids[b], vals[b], pts[b]);
          };
          if (in_count == 1) {
            mesh.faces.push_back(
                {ev(ins[0], outs[0]), ev(ins[0], outs[1]), ev(ins[0], outs[2])});
          } else if (in_count == 3) {
            mesh.faces.push_back(
                {ev(ins[0], outs[0]), ev(ins[1], outs[0]), ev(ins[2], outs[0])});
          } else if (in_count == 2) {
            int v00 = ev(ins[0], outs[0]);
            int v01 = ev(ins[0], outs[1]);
            int v10 = ev(ins[1], outs[0]);
            int v11 = ev(ins[1], outs[1]);
            mesh.faces.push_back({v00, v01, v11});
            mesh.faces.push_back({v00, v11, v10});
          }
        }
      }
    }
  }
  return mesh;
}

TriMesh extract_mesh(const std::function<double(const Eigen::Vector3d&)>& density,
                     int grid_resolution, double threshold) {
  if (grid_resolution < 8)
    throw std::invalid_argument("extract_mesh: resolution must be >= 8");
  const int64_t r = grid_resolution;
  std::vector<double> grid(static_cast<size_t>(r * r * r));
  size_t idx = 0;
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < r; ++j)
      for (int64_t k = 0; k < r; ++k, ++idx)
        grid[idx] = density(Eigen::Vector3d(-1.0 + 2.0 * i / (r - 1), -1.0 + 2.0 * j / (r - 1),
                                            -1.0 + 2.0 * k / (r - 1)));
  return extract_mesh_from_grid(grid, grid_resolution, threshold);
}

TriMesh extract_mesh(const TriplaneData& triplane, const NerfDecoderData& decoder,
                     int grid_resolution, double density_threshold) {
  return extract_mesh_from_grid(density_grid(triplane, decoder, grid_resolution),
                                grid_resolution, density_threshold);
}

void write_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_obj: cannot open " + path);
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    f << buf;
  }
  for (const auto& face : mesh.faces) {
    std::snprintf(buf, sizeof(buf), "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
    f << buf;
  }
  if (!f) throw std::runtime_error("write_obj: write failed: " + path);
}

std::vector<Eigen::Vector3d> sample_mesh_surface(const TriMesh& mesh, int n, uint64_t seed) {
  if (mesh.faces.empty()) return {};
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    const Eigen::Vector3d& a = mesh.vertices[static_cast<size_t>(face[0])];
    const Eigen::Vector3d& b = mesh.vertices[static_cast<size_t>(face[1])];
    const Eigen::Vector3d& c = mesh.vertices[static_cast<size_t>(face[2])];
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative[f] = total;
  }
  Rng rng(derive_seed(seed, 0x3e5471));
  std::vector<Eigen::Vector3d> out;
  out.reserve(static_cast<size_t>(n));
  for (int s = 0; s < n; ++s) {
    double u = rng.uniform(0.0, total);
    size_t f = static_cast<size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;
    const auto& face = mesh.faces[f];
    const Eigen::Vector3d& a = mesh.vertices[static_cast<size_t>(face[0])];
    const Eigen::Vector3d& b = mesh.vertices[static_cast<size_t>(face[1])];
    const Eigen::Vector3d& c = mesh.vertices[static_cast<size_t>(face[2])];
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    out.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return out;
}

}  // namespace mvtri

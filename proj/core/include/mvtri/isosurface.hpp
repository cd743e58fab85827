#pragma once

#include <Eigen/Core>

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "mvtri/triplane.hpp"

namespace mvtri {

struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }
  int connected_components() const;
  double surface_area() const;
};

// Isosurface of a scalar grid over a resolution^3 lattice spanning [-1,1]^3.
// Cells are split into six tetrahedra (Kuhn subdivision, conforming across
// cells), with vertices linearly interpolated onto lattice edges and welded.
TriMesh extract_mesh_from_grid(const std::vector<double>& grid, int resolution,
                               double threshold);

TriMesh extract_mesh(const std::function<double(const Eigen::Vector3d&)>& density,
                     int grid_resolution, double threshold);

// Decoded triplane density on the lattice, then isosurface extraction.
// Returns an empty mesh when no density crosses the threshold.
TriMesh extract_mesh(const TriplaneData& triplane, const NerfDecoderData& decoder,
                     int grid_resolution, double density_threshold);

// ASCII OBJ: `v x y z` then 1-indexed `f i j k`.
void write_obj(const std::string& path, const TriMesh& mesh);

// n points uniform by area over the triangles.
std::vector<Eigen::Vector3d> sample_mesh_surface(const TriMesh& mesh, int n, uint64_t seed);

}  // namespace mvtri

#pragma once

#include <array>
#include <string>
#include <vector>

#include "grala/box.hpp"
#include "grala/gaussian.hpp"
#include "grala/image.hpp"

namespace grala {

inline constexpr double kIsoLevel = 0.5;

/// Opacity-weighted Gaussian density sampled at voxel centers of a box.
struct OccupancyGrid {
  LayoutBox bounds;  // the node box padded by 10% per side
  int n = 0;
  std::vector<double> values;  // x fastest, then y, then z

  Vec3 spacing() const { return bounds.extent() / static_cast<double>(n); }
  Vec3 point(int i, int j, int k) const {
    const Vec3 s = spacing();
    return bounds.min + Vec3{(i + 0.5) * s.x, (j + 0.5) * s.y, (k + 0.5) * s.z};
  }
  double at(int i, int j, int k) const { return values[(static_cast<std::size_t>(k) * n + j) * n + i]; }
};

/// Σ_i o_i exp(-q_i / 2) over the gaussians with Mahalanobis q_i < 9.
double occupancy_at(const GaussianModel& model, const Vec3& p);

/// Throws ValidationError unless 16 <= n <= 512.
OccupancyGrid sample_occupancy(const GaussianModel& model, int n, const LayoutBox& box);

/// Triangle mesh; uvs, when present, are per vertex with (0, 0) at the
/// top-left texel of `texture`.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<double, 2>> uvs;
  Image texture;  // RGB

  bool empty() const { return triangles.empty(); }
  LayoutBox bounds() const;  // zero box when empty
  /// V - E + F over unique undirected edges.
  long euler_characteristic() const;
  double area() const;
  friend bool operator==(const Mesh&, const Mesh&) = default;
};

/// Case triangles of the 256-configuration table; entries index cube edges.
const std::vector<std::array<int, 3>>& marching_cubes_case(int config);

/// Iso-surface at `iso` (inside means value >= iso) with normals pointing
/// to decreasing occupancy. An all-below field gives an empty mesh.
Mesh marching_cubes(const OccupancyGrid& grid, double iso = kIsoLevel);

struct BakeSettings {
  int resolution = 512;  // square atlas; doubled once on overflow
  int padding = 1;       // texels around every chart
};

/// Texel coverage left behind by bake_texture.
struct BakeStats {
  int resolution = 0;
  std::size_t charts = 0;
  std::size_t covered_texels = 0;
  double texels_per_meter = 0;
};

/// Charts the mesh by dominant normal axis, packs the charts in rows and
/// fills every texel with the opacity-weighted mean gaussian color at its
/// surface point. Vertices are duplicated along chart seams.
Mesh bake_texture(const GaussianModel& model, const Mesh& mesh, const BakeSettings& settings = {},
                  BakeStats* stats = nullptr);

/// Gives every uncovered texel the color of its nearest covered texel
/// (breadth-first, 4-neighbourhood).
void dilate_texture(Image& texture, const Mask& covered);

/// Writes <dir>/<stem>.obj, .mtl and .png.
void export_obj(const Mesh& mesh, const std::string& dir, const std::string& stem);
/// Reads an OBJ written by export_obj, with its texture when referenced.
Mesh import_obj(const std::string& path);

}  // namespace grala

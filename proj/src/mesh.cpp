#include "grala/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "grala/error.hpp"
#include "grala/io.hpp"

namespace grala {

namespace {

/// A gaussian prepared for repeated density queries.
struct Kernel {
  Vec3 mu;
  Mat3 inv;
  Vec3 half;  // 3-sigma half extents of the axis-aligned bound
  double opacity = 0;
  Vec3 color;

  double mahalanobis2(const Vec3& p) const {
    const Vec3 d = p - mu;
    return dot(d, inv * d);
  }
};

Kernel make_kernel(const Gaussian& g) {
  Kernel k;
  k.mu = g.position;
  const Mat3 r = rotation_matrix(normalize(g.rotation));
  const Vec3 s = g.scale();
  k.inv = r * Mat3::diag({1 / (s.x * s.x), 1 / (s.y * s.y), 1 / (s.z * s.z)}) * r.transposed();
  const Mat3 cov = g.covariance();
  k.half = {3 * std::sqrt(cov(0, 0)), 3 * std::sqrt(cov(1, 1)), 3 * std::sqrt(cov(2, 2))};
  k.opacity = g.opacity();
  k.color = g.color;
  return k;
}

std::vector<Kernel> make_kernels(const GaussianModel& model) {
  std::vector<Kernel> out;
  out.reserve(model.size());
  for (const auto& g : model.gaussians) out.push_back(make_kernel(g));
  return out;
}

/// Uniform hash grid over kernel bounds for point queries.
class KernelIndex {
 public:
  explicit KernelIndex(const std::vector<Kernel>& kernels) : kernels_(kernels) {
    if (kernels.empty()) return;
    double sum = 0;
    for (const auto& k : kernels) sum += std::max({k.half.x, k.half.y, k.half.z});
    cell_ = std::max(sum / kernels.size(), 1e-9);
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      const auto lo = cell_of(kernels[i].mu - kernels[i].half), hi = cell_of(kernels[i].mu + kernels[i].half);
      for (long z = lo[2]; z <= hi[2]; ++z)
        for (long y = lo[1]; y <= hi[1]; ++y)
          for (long x = lo[0]; x <= hi[0]; ++x) cells_[key(x, y, z)].push_back(static_cast<int>(i));
    }
  }

  const std::vector<int>* candidates(const Vec3& p) const {
    if (cells_.empty()) return nullptr;
    const auto c = cell_of(p);
    const auto it = cells_.find(key(c[0], c[1], c[2]));
    return it == cells_.end() ? nullptr : &it->second;
  }

 private:
  std::array<long, 3> cell_of(const Vec3& p) const {
    return {static_cast<long>(std::floor(p.x / cell_)), static_cast<long>(std::floor(p.y / cell_)),
            static_cast<long>(std::floor(p.z / cell_))};
  }
  static std::uint64_t key(long x, long y, long z) {
    const auto u = [](long v) { return static_cast<std::uint64_t>(v + (1l << 20)) & 0x1fffff; };
    return (u(x) << 42) | (u(y) << 21) | u(z);
  }

  const std::vector<Kernel>& kernels_;
  double cell_ = 1;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

// Unit-cube corner c sits at (c & 1, c >> 1 & 1, c >> 2 & 1).
Vec3 corner_pos(int c) { return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)}; }

struct CubeTopology {
  std::array<std::array<int, 2>, 12> edges{};            // corner pairs, low corner first
  std::array<std::array<int, 4>, 6> face_corners{};      // cyclic
  std::array<Vec3, 6> face_normals{};
  int edge_between(int a, int b) const {
    for (int e = 0; e < 12; ++e)
      if ((edges[e][0] == a && edges[e][1] == b) || (edges[e][0] == b && edges[e][1] == a)) return e;
    return -1;
  }
};

const CubeTopology& cube() {
  static const CubeTopology t = [] {
    CubeTopology t;
    int e = 0;
    for (int axis = 0; axis < 3; ++axis)
      for (int c = 0; c < 8; ++c)
        if (!(c >> axis & 1)) t.edges[e++] = {c, c | (1 << axis)};
    int f = 0;
    for (int axis = 0; axis < 3; ++axis) {
      const int u = axis == 0 ? 1 : 0, v = axis == 2 ? 1 : 2;
      for (int side = 0; side < 2; ++side) {
        const int base = side << axis;
        t.face_corners[f] = {base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)};
        Vec3 n;
        n[axis] = side ? 1.0 : -1.0;
        t.face_normals[f] = n;
        ++f;
      }
    }
    return t;
  }();
  return t;
}

Vec3 edge_mid(int e) {
  const auto& ed = cube().edges[e];
  return (corner_pos(ed[0]) + corner_pos(ed[1])) * 0.5;
}

/// Triangulates one corner configuration by tracing the iso-contour around
/// the cube faces. Each face separates its inside corners, so neighbouring
/// cubes agree on shared faces.
std::vector<std::array<int, 3>> build_case(int config) {
  const CubeTopology& t = cube();
  const auto inside = [&](int c) { return (config >> c & 1) != 0; };
  std::array<int, 12> next;
  next.fill(-1);
  const auto add_segment = [&](int f, int ea, int eb, const Vec3& inside_point) {
    const Vec3 p = edge_mid(ea), q = edge_mid(eb);
    const Vec3 w = cross(t.face_normals[f], q - p);
    if (dot(w, inside_point - (p + q) * 0.5) > 0) std::swap(ea, eb);
    next[ea] = eb;
  };
  for (int f = 0; f < 6; ++f) {
    const auto& k = t.face_corners[f];
    std::array<int, 4> fe;
    int crossings = 0;
    for (int i = 0; i < 4; ++i) {
      fe[i] = t.edge_between(k[i], k[(i + 1) % 4]);
      crossings += inside(k[i]) != inside(k[(i + 1) % 4]);
    }
    if (crossings == 2) {
      std::vector<int> ce;
      Vec3 centroid;
      int n_in = 0;
      for (int i = 0; i < 4; ++i) {
        if (inside(k[i]) != inside(k[(i + 1) % 4])) ce.push_back(fe[i]);
        if (inside(k[i])) {
          centroid += corner_pos(k[i]);
          ++n_in;
        }
      }
      add_segment(f, ce[0], ce[1], centroid / n_in);
    } else if (crossings == 4) {
      for (int i = 0; i < 4; ++i)
        if (inside(k[i])) add_segment(f, fe[(i + 3) % 4], fe[i], corner_pos(k[i]));
    }
  }
  std::vector<std::array<int, 3>> tris;
  std::array<bool, 12> seen{};
  for (int start = 0; start < 12; ++start) {
    if (next[start] < 0 || seen[start]) continue;
    std::vector<int> loop;
    for (int e = start; !seen[e]; e = next[e]) {
      seen[e] = true;
      loop.push_back(e);
      if (next[e] < 0) throw Error("marching cubes: open contour while building the case table");
    }
    for (std::size_t i = 1; i + 1 < loop.size(); ++i) tris.push_back({loop[0], loop[i], loop[i + 1]});
  }
  return tris;
}

double tri_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * length(cross(b - a, c - a)); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double occupancy_at(const GaussianModel& model, const Vec3& p) {
  double sum = 0;
  for (const auto& g : model.gaussians) {
    const Kernel k = make_kernel(g);
    const double q = k.mahalanobis2(p);
    if (q < 9.0) sum += k.opacity * std::exp(-0.5 * q);
  }
  return sum;
}

OccupancyGrid sample_occupancy(const GaussianModel& model, int n, const LayoutBox& box) {
  if (n < 16 || n > 512) throw ValidationError("occupancy grid resolution must be in [16, 512]");
  OccupancyGrid grid;
  grid.bounds = box.padded(0.1);
  grid.n = n;
  grid.values.assign(static_cast<std::size_t>(n) * n * n, 0.0);
  const Vec3 s = grid.spacing(), lo = grid.bounds.min;
  for (const auto& g : model.gaussians) {
    const Kernel k = make_kernel(g);
    int a[3], b[3];
    for (int ax = 0; ax < 3; ++ax) {
      a[ax] = std::max(0, static_cast<int>(std::ceil((k.mu[ax] - k.half[ax] - lo[ax]) / s[ax] - 0.5)));
      b[ax] = std::min(n - 1, static_cast<int>(std::floor((k.mu[ax] + k.half[ax] - lo[ax]) / s[ax] - 0.5)));
    }
    for (int z = a[2]; z <= b[2]; ++z)
      for (int y = a[1]; y <= b[1]; ++y)
        for (int x = a[0]; x <= b[0]; ++x) {
          const double q = k.mahalanobis2(grid.point(x, y, z));
          if (q < 9.0) grid.values[(static_cast<std::size_t>(z) * n + y) * n + x] += k.opacity * std::exp(-0.5 * q);
        }
  }
  return grid;
}

LayoutBox Mesh::bounds() const {
  if (vertices.empty()) return {};
  LayoutBox b{vertices[0], vertices[0]};
  for (const auto& v : vertices) {
    b.min = vmin(b.min, v);
    b.max = vmax(b.max, v);
  }
  return b;
}

long Mesh::euler_characteristic() const {
  std::set<std::pair<int, int>> edges;
  std::set<int> used;
  for (const auto& t : triangles)
    for (int i = 0; i < 3; ++i) {
      const int a = t[i], b = t[(i + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
      used.insert(a);
    }
  return static_cast<long>(used.size()) - static_cast<long>(edges.size()) + static_cast<long>(triangles.size());
}

double Mesh::area() const {
  double a = 0;
  for (const auto& t : triangles) a += tri_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
  return a;
}

const std::vector<std::array<int, 3>>& marching_cubes_case(int config) {
  static const std::vector<std::vector<std::array<int, 3>>> table = [] {
    std::vector<std::vector<std::array<int, 3>>> t(256);
    for (int c = 0; c < 256; ++c) t[c] = build_case(c);
    return t;
  }();
  return table.at(static_cast<std::size_t>(config));
}

Mesh marching_cubes(const OccupancyGrid& grid, double iso) {
  Mesh mesh;
  const int n = grid.n;
  if (n < 2) return mesh;
  for (double v : grid.values)
    if (!std::isfinite(v)) throw ValidationError("marching cubes: non-finite occupancy");
  const CubeTopology& t = cube();
  std::unordered_map<std::uint64_t, int> edge_vertex;
  const auto vertex_on = [&](int i, int j, int k, int e) {
    const int c0 = t.edges[e][0], c1 = t.edges[e][1];
    const int gi = i + (c0 & 1), gj = j + (c0 >> 1 & 1), gk = k + (c0 >> 2 & 1);
    const int axis = (c0 ^ c1) == 1 ? 0 : ((c0 ^ c1) == 2 ? 1 : 2);
    const std::uint64_t key = ((static_cast<std::uint64_t>(gk) * n + gj) * n + gi) * 3 + axis;
    const auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const int hi[3] = {gi + (axis == 0), gj + (axis == 1), gk + (axis == 2)};
    const double v0 = grid.at(gi, gj, gk), v1 = grid.at(hi[0], hi[1], hi[2]);
    const double s = (iso - v0) / (v1 - v0);
    const Vec3 p0 = grid.point(gi, gj, gk), p1 = grid.point(hi[0], hi[1], hi[2]);
    mesh.vertices.push_back(p0 + (p1 - p0) * s);
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, id);
    return id;
  };
  for (int k = 0; k + 1 < n; ++k)
    for (int j = 0; j + 1 < n; ++j)
      for (int i = 0; i + 1 < n; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c)
          if (grid.at(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1)) >= iso) config |= 1 << c;
        if (config == 0 || config == 255) continue;
        for (const auto& tri : marching_cubes_case(config)) {
          const std::array<int, 3> ids{vertex_on(i, j, k, tri[0]), vertex_on(i, j, k, tri[1]),
                                       vertex_on(i, j, k, tri[2])};
          mesh.triangles.push_back(ids);
        }
      }

  // Cleanup: drop zero-area triangles, then unreferenced vertices.
  std::vector<std::array<int, 3>> kept;
  kept.reserve(mesh.triangles.size());
  for (const auto& tr : mesh.triangles)
    if (tri_area(mesh.vertices[tr[0]], mesh.vertices[tr[1]], mesh.vertices[tr[2]]) > 0.0) kept.push_back(tr);
  std::vector<int> remap(mesh.vertices.size(), -1);
  std::vector<Vec3> verts;
  for (auto& tr : kept)
    for (int& id : tr) {
      if (remap[id] < 0) {
        remap[id] = static_cast<int>(verts.size());
        verts.push_back(mesh.vertices[id]);
      }
      id = remap[id];
    }
  mesh.vertices = std::move(verts);
  mesh.triangles = std::move(kept);
  return mesh;
}

void dilate_texture(Image& texture, const Mask& covered) {
  const int w = texture.width, h = texture.height, c = texture.channels;
  std::vector<int> source(static_cast<std::size_t>(w) * h, -1);
  std::deque<int> queue;
  for (int p = 0; p < w * h; ++p)
    if (covered.data[p]) {
      source[p] = p;
      queue.push_back(p);
    }
  while (!queue.empty()) {
    const int p = queue.front();
    queue.pop_front();
    const int x = p % w, y = p / w;
    const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
    for (const auto& q : nb) {
      if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
      const int id = q[1] * w + q[0];
      if (source[id] >= 0) continue;
      source[id] = source[p];
      queue.push_back(id);
    }
  }
  for (int p = 0; p < w * h; ++p)
    if (source[p] >= 0 && source[p] != p)
      for (int k = 0; k < c; ++k) texture.data[static_cast<std::size_t>(p) * c + k] = texture.data[static_cast<std::size_t>(source[p]) * c + k];
}

namespace {

struct Chart {
  std::vector<int> triangles;
  int axis = 0;       // dominant normal axis
  int u = 1, v = 2;   // projection axes
  double min_u = 0, min_v = 0, ext_u = 0, ext_v = 0;
  int x0 = 0, y0 = 0, w = 0, h = 0;  // placement in texels
};

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

/// Shelf packing in rows, tallest first. Returns false on overflow.
bool pack(std::vector<Chart>& charts, double density, int pad, int res) {
  for (auto& c : charts) {
    c.w = static_cast<int>(std::floor(c.ext_u * density)) + 1 + 2 * pad;
    c.h = static_cast<int>(std::floor(c.ext_v * density)) + 1 + 2 * pad;
    if (c.w > res || c.h > res) return false;
  }
  std::vector<std::size_t> order(charts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return charts[a].h > charts[b].h; });
  int x = 0, y = 0, row = 0;
  for (std::size_t idx : order) {
    Chart& c = charts[idx];
    if (x + c.w > res) {
      y += row;
      x = 0;
      row = 0;
    }
    if (y + c.h > res) return false;
    c.x0 = x;
    c.y0 = y;
    x += c.w;
    row = std::max(row, c.h);
  }
  return true;
}

}  // namespace

Mesh bake_texture(const GaussianModel& model, const Mesh& mesh, const BakeSettings& settings, BakeStats* stats) {
  if (mesh.empty()) throw ValidationError("bake_texture needs a non-empty mesh");
  const std::size_t nt = mesh.triangles.size();

  // Charts: edge-connected triangles sharing a dominant normal direction.
  std::vector<int> bin(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tr = mesh.triangles[t];
    const Vec3 nrm = cross(mesh.vertices[tr[1]] - mesh.vertices[tr[0]], mesh.vertices[tr[2]] - mesh.vertices[tr[0]]);
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(nrm[a]) > std::abs(nrm[axis])) axis = a;
    bin[t] = axis * 2 + (nrm[axis] < 0);
  }
  std::vector<int> parent(nt);
  std::iota(parent.begin(), parent.end(), 0);
  std::unordered_map<std::uint64_t, int> edge_owner;
  for (std::size_t t = 0; t < nt; ++t)
    for (int i = 0; i < 3; ++i) {
      const auto a = static_cast<std::uint64_t>(std::min(mesh.triangles[t][i], mesh.triangles[t][(i + 1) % 3]));
      const auto b = static_cast<std::uint64_t>(std::max(mesh.triangles[t][i], mesh.triangles[t][(i + 1) % 3]));
      const std::uint64_t key = (a << 32) | b;
      const auto [it, fresh] = edge_owner.emplace(key, static_cast<int>(t));
      if (!fresh && bin[it->second] == bin[t]) parent[find_root(parent, static_cast<int>(t))] = find_root(parent, it->second);
    }
  std::vector<Chart> charts;
  std::unordered_map<int, std::size_t> chart_of_root;
  for (std::size_t t = 0; t < nt; ++t) {
    const int r = find_root(parent, static_cast<int>(t));
    auto [it, fresh] = chart_of_root.emplace(r, charts.size());
    if (fresh) {
      Chart c;
      c.axis = bin[t] / 2;
      c.u = c.axis == 0 ? 1 : 0;
      c.v = c.axis == 2 ? 1 : 2;
      charts.push_back(c);
    }
    charts[it->second].triangles.push_back(static_cast<int>(t));
  }
  for (auto& c : charts) {
    double lu = 1e300, lv = 1e300, hu = -1e300, hv = -1e300;
    for (int t : c.triangles)
      for (int id : mesh.triangles[t]) {
        const Vec3& p = mesh.vertices[id];
        lu = std::min(lu, p[c.u]);
        hu = std::max(hu, p[c.u]);
        lv = std::min(lv, p[c.v]);
        hv = std::max(hv, p[c.v]);
      }
    c.min_u = lu;
    c.min_v = lv;
    c.ext_u = hu - lu;
    c.ext_v = hv - lv;
  }

  // Largest texel density whose packing fits; one doubling on overflow.
  const int pad = settings.padding;
  int res = settings.resolution;
  double density = 0;
  for (int attempt = 0;; ++attempt) {
    if (pack(charts, 0.0, pad, res)) break;
    if (attempt == 1) throw Error("texture atlas overflow at " + std::to_string(res) + " texels");
    res *= 2;
  }
  double max_ext = 0;
  for (const auto& c : charts) max_ext = std::max({max_ext, c.ext_u, c.ext_v});
  double lo = 0, hi = max_ext > 0 ? res / max_ext : 1.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (pack(charts, mid, pad, res)) lo = mid;
    else hi = mid;
  }
  density = lo;
  pack(charts, density, pad, res);

  Mesh out;
  out.texture = Image(res, res, 3);
  Mask covered(res, res);
  const std::vector<Kernel> kernels = make_kernels(model);
  const KernelIndex index(kernels);
  const auto color_at = [&](const Vec3& p, Vec3& color) {
    const auto* cand = index.candidates(p);
    if (!cand) return false;
    double wsum = 0;
    Vec3 acc;
    for (int i : *cand) {
      const double q = kernels[i].mahalanobis2(p);
      if (q >= 9.0) continue;
      const double w = kernels[i].opacity * std::exp(-0.5 * q);
      wsum += w;
      acc += kernels[i].color * w;
    }
    if (wsum <= 0) return false;
    color = acc / wsum;
    return true;
  };

  for (const auto& c : charts) {
    std::unordered_map<int, int> local;
    const auto texel_of = [&](const Vec3& p) {
      return std::array<double, 2>{c.x0 + pad + (p[c.u] - c.min_u) * density, c.y0 + pad + (p[c.v] - c.min_v) * density};
    };
    for (int t : c.triangles) {
      std::array<int, 3> ids;
      std::array<std::array<double, 2>, 3> tx;
      for (int k = 0; k < 3; ++k) {
        const int src = mesh.triangles[t][k];
        tx[k] = texel_of(mesh.vertices[src]);
        auto [it, fresh] = local.emplace(src, static_cast<int>(out.vertices.size()));
        if (fresh) {
          out.vertices.push_back(mesh.vertices[src]);
          out.uvs.push_back({tx[k][0] / res, tx[k][1] / res});
        }
        ids[k] = it->second;
      }
      out.triangles.push_back(ids);

      // Texels whose centers fall inside the triangle's atlas footprint.
      const double den = (tx[1][1] - tx[2][1]) * (tx[0][0] - tx[2][0]) + (tx[2][0] - tx[1][0]) * (tx[0][1] - tx[2][1]);
      if (std::abs(den) < 1e-18) continue;
      const int xa = std::max(0, static_cast<int>(std::floor(std::min({tx[0][0], tx[1][0], tx[2][0]}))));
      const int xb = std::min(res - 1, static_cast<int>(std::floor(std::max({tx[0][0], tx[1][0], tx[2][0]}))));
      const int ya = std::max(0, static_cast<int>(std::floor(std::min({tx[0][1], tx[1][1], tx[2][1]}))));
      const int yb = std::min(res - 1, static_cast<int>(std::floor(std::max({tx[0][1], tx[1][1], tx[2][1]}))));
      const Vec3& P0 = mesh.vertices[mesh.triangles[t][0]];
      const Vec3& P1 = mesh.vertices[mesh.triangles[t][1]];
      const Vec3& P2 = mesh.vertices[mesh.triangles[t][2]];
      for (int y = ya; y <= yb; ++y)
        for (int x = xa; x <= xb; ++x) {
          if (covered.at(x, y)) continue;
          const double px = x + 0.5, py = y + 0.5;
          const double l0 = ((tx[1][1] - tx[2][1]) * (px - tx[2][0]) + (tx[2][0] - tx[1][0]) * (py - tx[2][1])) / den;
          const double l1 = ((tx[2][1] - tx[0][1]) * (px - tx[2][0]) + (tx[0][0] - tx[2][0]) * (py - tx[2][1])) / den;
          const double l2 = 1 - l0 - l1;
          if (l0 < -1e-9 || l1 < -1e-9 || l2 < -1e-9) continue;
          Vec3 col;
          if (!color_at(P0 * l0 + P1 * l1 + P2 * l2, col)) continue;
          for (int k = 0; k < 3; ++k) out.texture.at(x, y, k) = col[k];
          covered.at(x, y) = 1;
        }
    }
  }
  const std::size_t n_covered = covered.count();
  if (n_covered == 0) std::fill(out.texture.data.begin(), out.texture.data.end(), 0.5);
  else dilate_texture(out.texture, covered);
  if (stats) *stats = {res, charts.size(), n_covered, density};
  return out;
}

void export_obj(const Mesh& mesh, const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const bool textured = mesh.texture.pixel_count() > 0 && mesh.uvs.size() == mesh.vertices.size();
  std::string mtl = "newmtl material\nKd 1 1 1\n";
  if (textured) {
    mtl += "map_Kd " + stem + ".png\n";
    write_png((fs::path(dir) / (stem + ".png")).string(), mesh.texture);
  }
  write_text((fs::path(dir) / (stem + ".mtl")).string(), mtl);

  std::string obj = "mtllib " + stem + ".mtl\no " + stem + "\n";
  for (const auto& v : mesh.vertices) obj += "v " + fmt(v.x) + " " + fmt(v.y) + " " + fmt(v.z) + "\n";
  if (textured)
    for (const auto& uv : mesh.uvs) obj += "vt " + fmt(uv[0]) + " " + fmt(1.0 - uv[1]) + "\n";
  obj += "usemtl material\n";
  for (const auto& t : mesh.triangles) {
    obj += "f";
    for (int k = 0; k < 3; ++k) {
      const std::string id = std::to_string(t[k] + 1);
      obj += " " + (textured ? id + "/" + id : id);
    }
    obj += "\n";
  }
  write_text((fs::path(dir) / (stem + ".obj")).string(), obj);
}

Mesh import_obj(const std::string& path) {
  namespace fs = std::filesystem;
  std::istringstream in(read_text(path));
  std::vector<Vec3> pos;
  std::vector<std::array<double, 2>> tex;
  std::map<std::pair<int, int>, int> corner_ids;
  Mesh mesh;
  std::string mtllib;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z)) throw ParseError(path + ": bad vertex on line " + std::to_string(lineno));
      pos.push_back(p);
    } else if (tag == "vt") {
      double u = 0, v = 0;
      if (!(ls >> u >> v)) throw ParseError(path + ": bad texture coordinate on line " + std::to_string(lineno));
      tex.push_back({u, 1.0 - v});
    } else if (tag == "f") {
      std::vector<int> ids;
      for (std::string tok; ls >> tok;) {
        int vi = 0, ti = 0;
        const auto slash = tok.find('/');
        try {
          vi = std::stoi(tok.substr(0, slash));
          if (slash != std::string::npos && slash + 1 < tok.size() && tok[slash + 1] != '/')
            ti = std::stoi(tok.substr(slash + 1));
        } catch (const std::exception&) {
          throw ParseError(path + ": bad face on line " + std::to_string(lineno));
        }
        if (vi < 1 || vi > static_cast<int>(pos.size()) || ti < 0 || ti > static_cast<int>(tex.size()))
          throw ParseError(path + ": face index out of range on line " + std::to_string(lineno));
        auto [it, fresh] = corner_ids.emplace(std::make_pair(vi, ti), static_cast<int>(mesh.vertices.size()));
        if (fresh) {
          mesh.vertices.push_back(pos[vi - 1]);
          if (ti > 0) mesh.uvs.push_back(tex[ti - 1]);
        }
        ids.push_back(it->second);
      }
      if (ids.size() < 3) throw ParseError(path + ": face with fewer than 3 vertices on line " + std::to_string(lineno));
      for (std::size_t i = 1; i + 1 < ids.size(); ++i) mesh.triangles.push_back({ids[0], ids[i], ids[i + 1]});
    } else if (tag == "mtllib") {
      ls >> mtllib;
    }
  }
  if (!mesh.uvs.empty() && mesh.uvs.size() != mesh.vertices.size())
    throw ParseError(path + ": texture coordinates on some faces only");
  if (!mtllib.empty()) {
    const fs::path mtl_path = fs::path(path).parent_path() / mtllib;
    if (fs::exists(mtl_path)) {
      std::istringstream ms(read_text(mtl_path.string()));
      for (std::string l; std::getline(ms, l);) {
        std::istringstream ls(l);
        std::string tag, file;
        if ((ls >> tag) && tag == "map_Kd" && (ls >> file))
          mesh.texture = read_png((fs::path(path).parent_path() / file).string());
      }
    }
  }
  return mesh;
}

}  // namespace grala

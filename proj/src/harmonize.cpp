#include "grala/harmonize.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <unordered_map>

#include "grala/error.hpp"
#include "grala/io.hpp"
#include "grala/json_util.hpp"

namespace grala {

namespace fs = std::filesystem;

LayoutBox Scene::bounds() const {
  bool any = false;
  LayoutBox b;
  for (const auto& p : parts) {
    if (p.mesh.vertices.empty()) continue;
    const LayoutBox m = p.mesh.bounds();
    if (!any) b = m;
    b.min = vmin(b.min, m.min);
    b.max = vmax(b.max, m.max);
    any = true;
  }
  return b;
}

Assembly assemble_scene(const SceneGraph& graph, const std::map<std::string, Mesh>& meshes, const LayoutSet& layout,
                        double tolerance) {
  Assembly out;
  out.scene.prompt = graph.prompt;
  for (const auto& node : graph.nodes) {
    const auto mesh = meshes.find(node.id);
    if (mesh == meshes.end()) throw ValidationError("assembly: no mesh for node '" + node.id + "'");
    const auto box = layout.find(node.id);
    if (box == layout.end()) throw ValidationError("assembly: no layout box for node '" + node.id + "'");
    if (mesh->second.empty()) {
      out.warnings.push_back("node '" + node.id + "' has an empty mesh");
    } else {
      const LayoutBox allowed = box->second.scaled(tolerance);
      const LayoutBox b = mesh->second.bounds();
      if (!allowed.contains(b))
        throw ValidationError("assembly: mesh of node '" + node.id + "' exceeds its layout box by more than " +
                              std::to_string(tolerance) + "x");
    }
    out.scene.parts.push_back({node.id, mesh->second, box->second});
  }
  return out;
}

SceneRender render_scene(const Scene& scene, const Camera& camera) {
  camera.validate();
  const int w = camera.width, h = camera.height;
  SceneRender out{Image(w, h, 3), Image(w, h, 1, kFarDepth), std::vector<int>(static_cast<std::size_t>(w) * h, -1),
                  std::vector<int>(static_cast<std::size_t>(w) * h, -1)};
  const CameraFrame f(camera);
  for (std::size_t pi = 0; pi < scene.parts.size(); ++pi) {
    const Mesh& m = scene.parts[pi].mesh;
    const bool textured = m.texture.pixel_count() > 0 && m.uvs.size() == m.vertices.size();
    for (const auto& tri : m.triangles) {
      Vec3 pc[3];
      double sx[3], sy[3];
      bool behind = false;
      for (int k = 0; k < 3; ++k) {
        pc[k] = f.to_camera(m.vertices[tri[k]]);
        if (pc[k].z < kNearPlane) behind = true;
        sx[k] = f.u(pc[k]);
        sy[k] = f.v(pc[k]);
      }
      if (behind) continue;
      const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0]);
      if (std::abs(area) < 1e-12) continue;
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min({sx[0], sx[1], sx[2]}))));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max({sx[0], sx[1], sx[2]}))));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min({sy[0], sy[1], sy[2]}))));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max({sy[0], sy[1], sy[2]}))));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          double l[3];
          for (int k = 0; k < 3; ++k) {
            const int a = (k + 1) % 3, b = (k + 2) % 3;
            l[k] = ((sx[b] - sx[a]) * (py - sy[a]) - (sy[b] - sy[a]) * (px - sx[a])) / area;
          }
          if (l[0] < 0 || l[1] < 0 || l[2] < 0) continue;
          const double inv_z = l[0] / pc[0].z + l[1] / pc[1].z + l[2] / pc[2].z;
          const double z = 1.0 / inv_z;
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          if (!(z < out.depth.data[p])) continue;
          out.depth.data[p] = z;
          out.part[p] = static_cast<int>(pi);
          if (textured) {
            double u = 0, v = 0;
            for (int k = 0; k < 3; ++k) {
              u += l[k] * m.uvs[tri[k]][0] / pc[k].z;
              v += l[k] * m.uvs[tri[k]][1] / pc[k].z;
            }
            const int tw = m.texture.width, th = m.texture.height;
            const int tx = std::clamp(static_cast<int>(std::floor(u * z * tw)), 0, tw - 1);
            const int ty = std::clamp(static_cast<int>(std::floor(v * z * th)), 0, th - 1);
            out.texel[p] = ty * tw + tx;
            for (int c = 0; c < 3; ++c) out.rgb.data[p * 3 + c] = m.texture.at(tx, ty, c);
          } else {
            out.texel[p] = -1;
            for (int c = 0; c < 3; ++c) out.rgb.data[p * 3 + c] = 0.5;
          }
        }
    }
  }
  return out;
}

nlohmann::json HarmonizeConfig::to_json() const {
  return {{"iterations", iterations}, {"step", step},   {"strength", strength},
          {"resolution", resolution}, {"seed", seed},   {"distance_factor", cameras.distance_factor},
          {"fov_deg", cameras.fov_deg}, {"min_elevation_deg", cameras.min_elevation_deg},
          {"max_elevation_deg", cameras.max_elevation_deg}};
}

std::vector<HarmonizeIteration> harmonize(Scene& scene, const RefinerProvider& refiner, const HarmonizeConfig& config,
                                          const HarmonizeObserver& observer) {
  if (config.iterations < 0) throw ValidationError("harmonize: negative iteration count");
  std::vector<HarmonizeIteration> log;
  if (config.iterations == 0) return log;
  const LayoutBox bounds = scene.bounds();
  if (bounds.volume() <= 0) throw ValidationError("harmonize: the scene has no geometry");
  Rng rng(config.seed);

  struct Residual {
    double sum[3] = {0, 0, 0};
    int count = 0;
  };
  for (int i = 0; i < config.iterations; ++i) {
    const Camera cam = sample_camera(rng, bounds, config.cameras, config.resolution, config.resolution);
    const SceneRender r = render_scene(scene, cam);
    const Image refined = refiner.refine({r.rgb, r.depth, scene.prompt, config.strength});
    check_refined(r.rgb, refined);

    HarmonizeIteration it;
    it.iter = i;
    double sq = 0;
    std::unordered_map<std::uint64_t, Residual> acc;
    for (std::size_t p = 0; p < r.part.size(); ++p) {
      for (int c = 0; c < 3; ++c) {
        const double d = r.rgb.data[p * 3 + c] - refined.data[p * 3 + c];
        sq += d * d;
      }
      if (r.part[p] < 0 || r.texel[p] < 0) continue;
      Residual& res = acc[(static_cast<std::uint64_t>(r.part[p]) << 32) | static_cast<std::uint32_t>(r.texel[p])];
      for (int c = 0; c < 3; ++c) res.sum[c] += r.rgb.data[p * 3 + c] - refined.data[p * 3 + c];
      ++res.count;
    }
    it.mse = sq / static_cast<double>(r.rgb.data.size());
    for (const auto& [key, res] : acc) {
      Image& tex = scene.parts[key >> 32].mesh.texture;
      const std::size_t t = key & 0xffffffffu;
      for (int c = 0; c < 3; ++c) {
        double& v = tex.data[t * 3 + c];
        v = std::clamp(v - config.step * (res.sum[c] / res.count), 0.0, 1.0);
      }
    }
    it.texels_updated = acc.size();
    log.push_back(it);
    if (observer) observer(it, scene, r);
  }
  return log;
}

void write_scene(const Scene& scene, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : scene.parts) {
    export_obj(p.mesh, dir, p.node_id);
    parts.push_back({{"node", p.node_id}, {"mesh", p.node_id + ".obj"}, {"box", to_json(p.box)}});
  }
  const LayoutBox b = scene.bounds();
  const nlohmann::json manifest{{"prompt", scene.prompt}, {"parts", parts}, {"bounds", to_json(b)}};
  write_text((fs::path(dir) / "scene.json").string(), manifest.dump(2) + "\n");
}

Scene read_scene(const std::string& dir) {
  const std::string path = (fs::path(dir) / "scene.json").string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), e.byte);
  }
  Scene s;
  try {
    s.prompt = j.at("prompt").get<std::string>();
    for (const auto& p : j.at("parts"))
      s.parts.push_back({p.at("node").get<std::string>(),
                         import_obj((fs::path(dir) / p.at("mesh").get<std::string>()).string()),
                         box_from_json(p.at("box"))});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return s;
}

}  // namespace grala

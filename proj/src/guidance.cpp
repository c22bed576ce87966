#include "grala/guidance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "grala/error.hpp"
#include "grala/io.hpp"
#include "grala/json_util.hpp"

namespace grala {

void GuidanceRequest::validate() const {
  camera.validate();
  if (rgb.width != camera.width || rgb.height != camera.height || rgb.channels != 3)
    throw ValidationError("guidance rgb shape does not match the camera");
  for (double v : rgb.data)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("guidance rgb outside [0, 1]");
  if (timestep < 1 || timestep > 1000) throw ValidationError("timestep outside [1, 1000]");
  if (prompt.empty()) throw ValidationError("empty guidance prompt");
}

void GuidanceResponse::validate(int width, int height) const {
  if (grad.width != width || grad.height != height || grad.channels != 3)
    throw ProviderError("guidance grad has the wrong shape");
  for (double v : grad.data)
    if (!std::isfinite(v)) throw NonFiniteError("guidance grad contains non-finite values");
  for (const auto& [token, map] : attention) {
    if (map.width != width || map.height != height || map.channels != 1)
      throw ProviderError("attention map for '" + token + "' has the wrong shape");
    double peak = 0;
    for (double v : map.data) {
      if (!std::isfinite(v)) throw NonFiniteError("attention map for '" + token + "' contains non-finite values");
      if (v < 0.0 || v > 1.0) throw ProviderError("attention map for '" + token + "' outside [0, 1]");
      peak = std::max(peak, v);
    }
    if (peak != 0.0 && std::abs(peak - 1.0) > 1e-6)
      throw ProviderError("attention map for '" + token + "' is not max-normalized");
  }
}

double ReferencePrimitive::intersect(const Vec3& origin, const Vec3& dir) const {
  if (kind == Kind::ellipsoid) {
    // Unit-sphere test in the primitive's scaled frame.
    const Vec3 o{(origin.x - center.x) / size.x, (origin.y - center.y) / size.y, (origin.z - center.z) / size.z};
    const Vec3 d{dir.x / size.x, dir.y / size.y, dir.z / size.z};
    const double a = dot(d, d), b = dot(o, d), c = dot(o, o) - 1.0;
    const double disc = b * b - a * c;
    if (disc < 0) return -1;
    const double s = std::sqrt(disc);
    const double t0 = (-b - s) / a, t1 = (-b + s) / a;
    if (t0 > 0) return t0;
    return t1 > 0 ? t1 : -1;
  }
  double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const double lo = center[k] - 0.5 * size[k], hi = center[k] + 0.5 * size[k];
    if (dir[k] == 0.0) {
      if (origin[k] < lo || origin[k] > hi) return -1;
      continue;
    }
    double ta = (lo - origin[k]) / dir[k], tb = (hi - origin[k]) / dir[k];
    if (ta > tb) std::swap(ta, tb);
    tmin = std::max(tmin, ta);
    tmax = std::min(tmax, tb);
  }
  if (tmin > tmax) return -1;
  if (tmin > 0) return tmin;
  return tmax > 0 ? tmax : -1;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

ReferencePrimitive primitive_from_json(const nlohmann::json& j) {
  ReferencePrimitive p;
  p.token = j.at("token").get<std::string>();
  const std::string kind = j.value("kind", "ellipsoid");
  if (kind == "ellipsoid") {
    p.kind = ReferencePrimitive::Kind::ellipsoid;
    p.size = vec3_from_json(j.at("radii"));
  } else if (kind == "box") {
    p.kind = ReferencePrimitive::Kind::box;
    p.size = vec3_from_json(j.at("extents"));
  } else {
    throw ParseError("unknown primitive kind '" + kind + "'");
  }
  if (p.token.empty()) throw ParseError("primitive with an empty token");
  if (!(p.size.x > 0 && p.size.y > 0 && p.size.z > 0)) throw ParseError("primitive size must be positive");
  p.center = vec3_from_json(j.at("center"));
  p.color = vec3_from_json(j.at("color"));
  return p;
}

/// Calls f(x, y, nearest primitive or nullptr) for every pixel.
template <class F>
void cast_rays(const std::vector<const ReferencePrimitive*>& prims, const Camera& camera, F&& f) {
  const CameraFrame frame(camera);
  const Mat3 to_world = frame.rot.transposed();
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      const Vec3 dc{(x + 0.5 - frame.cx) / frame.fx, (y + 0.5 - frame.cy) / frame.fy, 1.0};
      const Vec3 dir = to_world * dc;
      const ReferencePrimitive* best = nullptr;
      double best_t = std::numeric_limits<double>::infinity();
      for (const auto* p : prims) {
        const double t = p->intersect(camera.eye, dir);
        if (t > 0 && t < best_t) {
          best_t = t;
          best = p;
        }
      }
      f(x, y, best);
    }
}

}  // namespace

bool contains_word(std::string_view text, std::string_view word) {
  if (word.empty()) return false;
  const std::string t = lower(text), w = lower(word);
  for (std::size_t pos = t.find(w); pos != std::string::npos; pos = t.find(w, pos + 1)) {
    const bool left = pos == 0 || !word_char(t[pos - 1]);
    const bool right = pos + w.size() == t.size() || !word_char(t[pos + w.size()]);
    if (left && right) return true;
  }
  return false;
}

ReferenceScene ReferenceScene::from_json(const nlohmann::json& j) {
  try {
    if (!j.is_array()) throw ParseError("reference scene must be a JSON list");
    std::vector<ReferencePrimitive> prims;
    for (const auto& e : j) prims.push_back(primitive_from_json(e));
    return ReferenceScene(std::move(prims));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("reference scene: ") + e.what());
  }
}

ReferenceScene ReferenceScene::from_layout(const SceneGraph& graph, const LayoutSet& layout, double radius_fraction) {
  std::vector<ReferencePrimitive> prims;
  for (const auto& node : graph.nodes) {
    const auto it = layout.find(node.id);
    if (it == layout.end()) throw ValidationError("no layout box for node '" + node.id + "'");
    const std::uint64_t h = std::stoull(fnv1a_hex(node.name), nullptr, 16);
    Vec3 color;
    for (int c = 0; c < 3; ++c) color[c] = 0.2 + 0.7 * static_cast<double>((h >> (16 * c)) & 0xffff) / 65535.0;
    prims.push_back({node.name, ReferencePrimitive::Kind::ellipsoid, it->second.center(),
                     it->second.extent() * radius_fraction, color});
  }
  return ReferenceScene(std::move(prims));
}

ReferenceScene ReferenceScene::load(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("reference scene: ") + e.what(), e.byte);
  }
}

nlohmann::json ReferenceScene::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : prims_) {
    nlohmann::json e;
    e["token"] = p.token;
    const bool ell = p.kind == ReferencePrimitive::Kind::ellipsoid;
    e["kind"] = ell ? "ellipsoid" : "box";
    e["center"] = grala::to_json(p.center);
    e[ell ? "radii" : "extents"] = grala::to_json(p.size);
    e["color"] = grala::to_json(p.color);
    out.push_back(e);
  }
  return out;
}

std::vector<const ReferencePrimitive*> ReferenceScene::match_prompt(std::string_view prompt) const {
  std::vector<const ReferencePrimitive*> out;
  for (const auto& p : prims_)
    if (contains_word(prompt, p.token)) out.push_back(&p);
  return out;
}

std::vector<const ReferencePrimitive*> ReferenceScene::match_token(std::string_view token) const {
  std::vector<const ReferencePrimitive*> out;
  const std::string t = lower(token);
  for (const auto& p : prims_)
    if (lower(p.token) == t) out.push_back(&p);
  return out;
}

Image render_primitives(const std::vector<const ReferencePrimitive*>& prims, const Camera& camera) {
  Image img(camera.width, camera.height, 3);
  cast_rays(prims, camera, [&](int x, int y, const ReferencePrimitive* p) {
    if (!p) return;
    for (int c = 0; c < 3; ++c) img.at(x, y, c) = p->color[c];
  });
  return img;
}

Mask primitive_silhouette(const std::vector<const ReferencePrimitive*>& prims, const Camera& camera) {
  Mask m(camera.width, camera.height);
  cast_rays(prims, camera, [&](int x, int y, const ReferencePrimitive* p) { m.at(x, y) = p ? 1 : 0; });
  return m;
}

Image MockOracle::target(std::string_view prompt, const Camera& camera) const {
  return render_primitives(reference_.match_prompt(prompt), camera);
}

GuidanceResponse MockOracle::guide(const GuidanceRequest& request) const {
  request.validate();
  GuidanceResponse out;
  const int w = request.camera.width, h = request.camera.height;
  const auto prims = reference_.match_prompt(request.prompt);
  if (prims.empty()) {
    out.grad = Image(w, h, 3);
    out.unknown_prompt = true;
    return out;
  }
  out.grad = render_primitives(prims, request.camera);
  for (std::size_t i = 0; i < out.grad.data.size(); ++i) out.grad.data[i] = request.rgb.data[i] - out.grad.data[i];
  for (const auto& token : request.tokens) {
    const auto own = reference_.match_token(token);
    if (own.empty()) continue;
    const Mask sil = primitive_silhouette(own, request.camera);
    Image map(w, h, 1);
    for (std::size_t i = 0; i < sil.data.size(); ++i) map.data[i] = sil.data[i];
    out.attention.emplace(token, std::move(map));
  }
  return out;
}

std::string MockOracle::config_hash() const { return fnv1a_hex(reference_.to_json().dump()); }

}  // namespace grala

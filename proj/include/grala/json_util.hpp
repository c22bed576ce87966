#pragma once

#include "grala/box.hpp"
#include "grala/error.hpp"
#include "grala/math.hpp"
#include "json.hpp"

namespace grala {

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-vector, got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json to_json(const LayoutBox& b) { return {{"min", to_json(b.min)}, {"max", to_json(b.max)}}; }

inline LayoutBox box_from_json(const nlohmann::json& j) {
  return {vec3_from_json(j.at("min")), vec3_from_json(j.at("max"))};
}

inline nlohmann::json layout_to_json(const LayoutSet& layout) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, box] : layout) j[id] = to_json(box);
  return j;
}

inline LayoutSet layout_from_json(const nlohmann::json& j) {
  LayoutSet out;
  for (const auto& [id, box] : j.items()) out[id] = box_from_json(box);
  return out;
}

}  // namespace grala

#include "grala/remote.hpp"

#include <bit>
#include <cmath>

#include "grala/error.hpp"
#include "grala/io.hpp"
#include "grala/json_util.hpp"
#include "httplib.h"

namespace grala {

using nlohmann::json;

json encode_tensor(const Image& image, bool keep_single_channel_axis) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.data.size() * 4);
  for (double v : image.data) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  json shape = json::array({image.height, image.width});
  if (image.channels != 1 || keep_single_channel_axis) shape.push_back(image.channels);
  return {{"shape", shape}, {"dtype", "f32"}, {"data", base64_encode(bytes.data(), bytes.size())}};
}

Image decode_tensor(const json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data"))
    throw ProviderError("tensor needs shape and data");
  if (j.value("dtype", "f32") != "f32") throw ProviderError("unsupported tensor dtype " + j["dtype"].dump());
  const auto& shape = j["shape"];
  if (!shape.is_array() || shape.size() < 2 || shape.size() > 3) throw ProviderError("tensor shape must be [H, W(, C)]");
  for (const auto& s : shape)
    if (!s.is_number_integer() || s.get<long long>() <= 0) throw ProviderError("tensor shape entries must be positive");
  const int h = shape[0].get<int>(), w = shape[1].get<int>(), c = shape.size() == 3 ? shape[2].get<int>() : 1;
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(j["data"].get<std::string>());
  } catch (const std::exception& e) {
    throw ProviderError(std::string("tensor data: ") + e.what());
  }
  Image img(w, h, c);
  if (bytes.size() != img.data.size() * 4) throw ProviderError("tensor data length does not match its shape");
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    const float f = std::bit_cast<float>(u);
    if (!std::isfinite(f)) throw NonFiniteError("tensor contains non-finite values");
    img.data[i] = f;
  }
  return img;
}

json camera_to_json(const Camera& c) {
  return {{"eye", to_json(c.eye)},         {"target", to_json(c.target)}, {"up", to_json(c.up)},
          {"fov_deg", c.fov_deg},          {"width", c.width},            {"height", c.height}};
}

Camera camera_from_json(const json& j) {
  Camera c;
  c.eye = vec3_from_json(j.at("eye"));
  c.target = vec3_from_json(j.at("target"));
  c.up = vec3_from_json(j.at("up"));
  c.fov_deg = j.at("fov_deg").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  return c;
}

namespace {

json parse_versioned(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProviderError(std::string("unparseable provider response: ") + e.what());
  }
  if (!j.is_object()) throw ProviderError("provider response must be a JSON object");
  if (!j.contains("version")) throw ProtocolVersionError("provider response has no version field");
  const std::string v = j["version"].is_string() ? j["version"].get<std::string>() : j["version"].dump();
  if (v != kProtocolVersion)
    throw ProtocolVersionError("protocol version mismatch: got '" + v + "', supported '" + kProtocolVersion + "'");
  if (j.contains("error")) throw ProviderError("provider error: " + j["error"].dump());
  return j;
}

}  // namespace

std::string serialize_guidance_request(const GuidanceRequest& r) {
  json j{{"version", kProtocolVersion}, {"prompt", r.prompt},       {"timestep", r.timestep},
         {"camera", camera_to_json(r.camera)}, {"tokens", r.tokens}, {"rgb", encode_tensor(r.rgb, true)}};
  return j.dump();
}

GuidanceResponse parse_guidance_response(const std::string& body, const GuidanceRequest& request) {
  const json j = parse_versioned(body);
  GuidanceResponse out;
  try {
    out.grad = decode_tensor(j.at("grad"));
    if (j.contains("attention"))
      for (const auto& [token, t] : j["attention"].items()) out.attention.emplace(token, decode_tensor(t));
    out.unknown_prompt = j.value("unknown_prompt", false);
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed guidance response: ") + e.what());
  }
  out.validate(request.camera.width, request.camera.height);
  return out;
}

std::string serialize_refine_request(const RefineRequest& r) {
  json j{{"version", kProtocolVersion}, {"prompt", r.prompt}, {"strength", static_cast<float>(r.strength)},
         {"rgb", encode_tensor(r.rgb, true)}, {"depth", encode_tensor(r.depth)}};
  return j.dump();
}

Image parse_refine_response(const std::string& body, const RefineRequest& request) {
  const json j = parse_versioned(body);
  if (!j.contains("rgb")) throw ProviderError("refine response has no rgb tensor");
  Image out = decode_tensor(j["rgb"]);
  check_refined(request.rgb, out);
  return out;
}

GuidanceRequest parse_guidance_request(const std::string& body) {
  const json j = parse_versioned(body);
  GuidanceRequest r;
  try {
    r.prompt = j.at("prompt").get<std::string>();
    r.timestep = j.at("timestep").get<int>();
    r.camera = camera_from_json(j.at("camera"));
    r.tokens = j.value("tokens", std::vector<std::string>{});
    r.rgb = decode_tensor(j.at("rgb"));
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed guidance request: ") + e.what());
  }
  return r;
}

std::string serialize_guidance_response(const GuidanceResponse& response) {
  json att = json::object();
  for (const auto& [token, map] : response.attention) att[token] = encode_tensor(map);
  json j{{"version", kProtocolVersion}, {"grad", encode_tensor(response.grad, true)}, {"attention", att}};
  if (response.unknown_prompt) j["unknown_prompt"] = true;
  return j.dump();
}

RefineRequest parse_refine_request(const std::string& body) {
  const json j = parse_versioned(body);
  RefineRequest r;
  try {
    r.prompt = j.at("prompt").get<std::string>();
    r.strength = j.at("strength").get<double>();
    r.rgb = decode_tensor(j.at("rgb"));
    r.depth = decode_tensor(j.at("depth"));
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed refine request: ") + e.what());
  }
  return r;
}

std::string serialize_refine_response(const Image& rgb) {
  return json{{"version", kProtocolVersion}, {"rgb", encode_tensor(rgb, true)}}.dump();
}

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = endpoint.find('/', host_start);
  if (slash == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, slash), prefix};
}

std::string post_json(const std::string& endpoint, const std::string& path, const std::string& body, double timeout_s) {
  const auto [base, prefix] = split_endpoint(endpoint);
  httplib::Client client(base);
  if (!client.is_valid()) throw TransportError("invalid endpoint '" + endpoint + "'");
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  auto res = client.Post(prefix + path, body, "application/json");
  if (!res) throw TransportError("POST " + endpoint + path + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    // A version mismatch may be reported as a 400 with a JSON body.
    try {
      const json j = json::parse(res->body);
      if (j.contains("version") && j["version"] != kProtocolVersion)
        throw ProtocolVersionError("protocol version mismatch reported by " + endpoint);
    } catch (const json::exception&) {
    }
    throw ProviderError("POST " + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  return res->body;
}

GuidanceResponse RemoteGuidanceProvider::guide(const GuidanceRequest& request) const {
  request.validate();
  return parse_guidance_response(post_json(endpoint_, "/v1/guidance", serialize_guidance_request(request), timeout_s_),
                                 request);
}

std::string RemoteGuidanceProvider::config_hash() const { return fnv1a_hex("remote:" + endpoint_); }

Image RemoteRefiner::refine(const RefineRequest& request) const {
  return parse_refine_response(post_json(endpoint_, "/v1/refine", serialize_refine_request(request), timeout_s_),
                               request);
}

}  // namespace grala

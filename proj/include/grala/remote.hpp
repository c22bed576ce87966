#pragma once

#include <string>

#include "grala/guidance.hpp"
#include "grala/refiner.hpp"
#include "json.hpp"

namespace grala {

inline constexpr const char* kProtocolVersion = "1";

/// {"shape": [H, W, C] (or [H, W] for one channel), "dtype": "f32",
/// "data": base64 of little-endian row-major float32}.
nlohmann::json encode_tensor(const Image& image, bool keep_single_channel_axis = false);
/// Throws ProviderError on a malformed tensor, NonFiniteError on NaN/inf.
Image decode_tensor(const nlohmann::json& j);

nlohmann::json camera_to_json(const Camera& c);
Camera camera_from_json(const nlohmann::json& j);

std::string serialize_guidance_request(const GuidanceRequest& request);
/// Validates version, shapes and finiteness against the request.
GuidanceResponse parse_guidance_response(const std::string& body, const GuidanceRequest& request);

std::string serialize_refine_request(const RefineRequest& request);
Image parse_refine_response(const std::string& body, const RefineRequest& request);

/// Server-side halves of the protocol, used by in-process fakes.
GuidanceRequest parse_guidance_request(const std::string& body);
std::string serialize_guidance_response(const GuidanceResponse& response);
RefineRequest parse_refine_request(const std::string& body);
std::string serialize_refine_response(const Image& rgb);

/// Splits "http://host:port/prefix" into the scheme-host-port part and the path prefix.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint);

/// HTTP client for POST /v1/guidance.
class RemoteGuidanceProvider final : public GuidanceProvider {
 public:
  explicit RemoteGuidanceProvider(std::string endpoint, double timeout_s = 120.0)
      : endpoint_(std::move(endpoint)), timeout_s_(timeout_s) {}
  GuidanceResponse guide(const GuidanceRequest& request) const override;
  std::string name() const override { return "remote"; }
  std::string config_hash() const override;

 private:
  std::string endpoint_;
  double timeout_s_;
};

/// HTTP client for POST /v1/refine.
class RemoteRefiner final : public RefinerProvider {
 public:
  explicit RemoteRefiner(std::string endpoint, double timeout_s = 300.0)
      : endpoint_(std::move(endpoint)), timeout_s_(timeout_s) {}
  Image refine(const RefineRequest& request) const override;
  std::string name() const override { return "remote"; }

 private:
  std::string endpoint_;
  double timeout_s_;
};

/// POSTs a JSON body and returns the response body; TransportError on
/// connection failure, ProviderError on a non-200 status.
std::string post_json(const std::string& endpoint, const std::string& path, const std::string& body, double timeout_s);

}  // namespace grala

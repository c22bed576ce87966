#include "grala/gaussian.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "grala/error.hpp"

namespace grala {

double& Gaussian::param(int k) {
  switch (k) {
    case 0: return position.x;
    case 1: return position.y;
    case 2: return position.z;
    case 3: return log_scale.x;
    case 4: return log_scale.y;
    case 5: return log_scale.z;
    case 6: return rotation.w;
    case 7: return rotation.x;
    case 8: return rotation.y;
    case 9: return rotation.z;
    case 10: return opacity_logit;
    case 11: return color.x;
    case 12: return color.y;
    default: return color.z;
  }
}

double Gaussian::param(int k) const { return const_cast<Gaussian*>(this)->param(k); }

Mat3 Gaussian::covariance() const {
  const Mat3 r = rotation_matrix(normalize(rotation));
  const Vec3 s = scale();
  const Mat3 m = r * Mat3::diag(s);
  return m * m.transposed();
}

bool GaussianModel::finite() const {
  for (const auto& g : gaussians)
    for (int k = 0; k < Gaussian::kParamCount; ++k)
      if (!std::isfinite(g.param(k))) return false;
  return true;
}

GaussianModel init_in_box(const LayoutBox& box, std::size_t count, std::uint64_t seed, std::string node_id) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> shade(0.3, 0.7);

  GaussianModel m;
  m.node_id = std::move(node_id);
  m.gaussians.reserve(count);
  const Vec3 e = box.extent();
  const double log_s = std::log(0.02 * box.diagonal());
  const double op = logit(0.1);
  for (std::size_t i = 0; i < count; ++i) {
    Gaussian g;
    g.position = {box.min.x + unit(rng) * e.x, box.min.y + unit(rng) * e.y, box.min.z + unit(rng) * e.z};
    g.log_scale = {log_s, log_s, log_s};
    g.rotation = {1, 0, 0, 0};
    g.opacity_logit = op;
    g.color = {shade(rng), shade(rng), shade(rng)};
    m.gaussians.push_back(g);
  }
  m.zero_grad();
  return m;
}

GaussianModel merge_models(const std::vector<const GaussianModel*>& models, std::string node_id) {
  GaussianModel out;
  out.node_id = std::move(node_id);
  for (const auto* m : models) out.gaussians.insert(out.gaussians.end(), m->gaussians.begin(), m->gaussians.end());
  out.zero_grad();
  return out;
}

namespace {

constexpr std::uint32_t kGrlaVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& at) {
  if (at + 4 > in.size()) throw ParseError("truncated GRLA file", at);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  at += 4;
  return v;
}

double get_f32(const std::vector<std::uint8_t>& in, std::size_t& at) {
  return std::bit_cast<float>(get_u32(in, at));
}

// Field layout: (first flat param index, component count).
constexpr std::pair<int, int> kFields[] = {{0, 3}, {3, 3}, {6, 4}, {10, 1}, {11, 3}};

}  // namespace

std::vector<std::uint8_t> encode_grla(const GaussianModel& model) {
  std::vector<std::uint8_t> out{'G', 'R', 'L', 'A'};
  put_u32(out, kGrlaVersion);
  put_u32(out, static_cast<std::uint32_t>(model.size()));
  for (const auto& [first, n] : kFields)
    for (const auto& g : model.gaussians)
      for (int k = 0; k < n; ++k) put_f32(out, g.param(first + k));
  return out;
}

GaussianModel decode_grla(const std::vector<std::uint8_t>& bytes, std::string node_id) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "GRLA", 4) != 0) throw ParseError("not a GRLA file", 0);
  std::size_t at = 4;
  const auto version = get_u32(bytes, at);
  if (version != kGrlaVersion) throw ParseError("unsupported GRLA version " + std::to_string(version), 4);
  const auto count = get_u32(bytes, at);
  if (bytes.size() != 12 + static_cast<std::size_t>(count) * Gaussian::kParamCount * 4)
    throw ParseError("GRLA size does not match its gaussian count", 8);

  GaussianModel m;
  m.node_id = std::move(node_id);
  m.gaussians.resize(count);
  for (const auto& [first, n] : kFields)
    for (auto& g : m.gaussians)
      for (int k = 0; k < n; ++k) g.param(first + k) = get_f32(bytes, at);
  m.zero_grad();
  return m;
}

void save_grla(const GaussianModel& model, const std::string& path) {
  const auto bytes = encode_grla(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GaussianModel load_grla(const std::string& path, std::string node_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_grla(bytes, std::move(node_id));
}

}  // namespace grala

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "grala/image.hpp"

namespace grala {

std::string read_text(const std::string& path);
std::vector<std::uint8_t> read_bytes(const std::string& path);
void write_text(const std::string& path, std::string_view text);
void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

std::string base64_encode(const std::uint8_t* data, std::size_t size);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// 8-bit PNG with values in [0, 1] clamped and rounded; 1 or 3 channels.
void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

/// Raw little-endian float32 dump (no header) for debugging.
void write_f32_raw(const std::string& path, const Image& image);

}  // namespace grala

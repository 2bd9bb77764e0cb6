#ifndef WEAKPARK_IO_HPP_
#define WEAKPARK_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace weakpark {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Little-endian f32 encoding regardless of host byte order.
std::string encode_f32_le(std::span<const float> values);
std::vector<float> decode_f32_le(std::string_view bytes);

/// 64-bit FNV-1a, used as a cheap content checksum.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Splits NDJSON text into non-empty lines.
std::vector<std::string> split_lines(std::string_view text);

}  // namespace weakpark

#endif  // WEAKPARK_IO_HPP_

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace apollo::io {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Write to a sibling temp file, then rename over `path`.
void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_atomic(const std::filesystem::path& path, std::string_view text);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Lower-case hex CRC32 of a file's contents, used in run manifests.
std::string file_digest(const std::filesystem::path& path);

}  // namespace apollo::io

#include "apollo/io.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <iterator>

#include "apollo/errors.hpp"

namespace apollo::io {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot rename '" + tmp.string() + "': " + ec.message());
}

void write_atomic(const std::filesystem::path& path, std::string_view text) {
    write_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                     text.size()));
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    constexpr std::size_t chunk = 1U << 30;
    for (std::size_t off = 0; off < bytes.size(); off += chunk) {
        const auto len = static_cast<uInt>(std::min(chunk, bytes.size() - off));
        crc = ::crc32(crc, bytes.data() + off, len);
    }
    return static_cast<std::uint32_t>(crc);
}

std::string file_digest(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", crc32(bytes));
    return buf;
}

}  // namespace apollo::io

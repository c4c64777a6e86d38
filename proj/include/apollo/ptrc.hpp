#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "apollo/trace.hpp"

namespace apollo::trace {

/// Contents of a PTRC file.
///
/// Layout (all integers little-endian):
///   "PTRC"  u32 version=1  u64 N  u64 M
///   M catalog entries: u32 name_len, name bytes (UTF-8), u8 kind tag
///     tag 0 single bit
///     tag 1 bus,         followed by u32 width
///     tag 2 gated clock, followed by u32 len + enable name bytes
///   N cycles of ceil(M/64) u64 words, bit j%64 of word j/64 is signal j;
///     padding bits above M must be zero
///   optional "PWRF" + N f64 (IEEE-754) power values
///   u32 CRC32 of every preceding byte
struct TraceFile {
    SignalCatalog catalog;
    ToggleMatrix toggles;
    std::optional<PowerTrace> power;

    bool operator==(const TraceFile&) const = default;
};

inline constexpr std::uint32_t kPtrcVersion = 1;

std::vector<std::uint8_t> encode_trace(const TraceFile& trace);

/// Throws FormatError on bad magic/version, truncation, trailing garbage or CRC mismatch.
TraceFile decode_trace(std::span<const std::uint8_t> bytes);

void write_trace(const std::filesystem::path& path, const TraceFile& trace);
TraceFile read_trace(const std::filesystem::path& path);

}  // namespace apollo::trace

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apollo/trace.hpp"

namespace apollo::trace {

struct VcdVar {
    std::string name;  // dotted scope path + reference
    std::string id;    // identifier code
    std::uint32_t width = 1;
};

/// Every declared variable sampled once per cycle.
struct VcdSamples {
    std::string timescale;
    std::vector<VcdVar> vars;
    /// values[v][i]: value of vars[v] at cycle i, one char per bit, MSB first,
    /// lower-case x/z.
    std::vector<std::vector<std::string>> values;
    std::size_t n_cycles = 0;

    /// Index of the var named `name`, matching either the full dotted path
    /// or an unambiguous leaf name.
    std::optional<std::size_t> find(std::string_view name) const;
};

struct VcdOptions {
    /// Sample at rising edges of this signal. When empty, `period` is used.
    std::string clock;
    /// Fixed sampling period in timescale units (only when `clock` is empty):
    /// samples are taken at period, 2*period, ... up to the last timestamp.
    std::uint64_t period = 0;
    LatchConvention gated_clock = LatchConvention::SameCycle;
    /// Signals to extract and their kinds. When absent every declared variable
    /// except the clock is used: width 1 as SingleBit, wider as Bus.
    std::optional<SignalCatalog> catalog;
};

struct VcdTrace {
    SignalCatalog catalog;
    ToggleMatrix toggles;
};

/// Sample values at each rising clock edge. A sample holds the value as
/// registered by a flip-flop on that edge: changes stamped at the edge time
/// itself are seen at the next edge.
///
/// Supported subset: $timescale, $scope/$upscope, $var (wire/reg),
/// $enddefinitions, #<time>, scalar and binary vector changes, $dumpvars.
/// Throws ParameterError when the clock is not declared, and ParseError (with
/// line number) on decreasing timestamps, undeclared identifier codes or
/// unsupported constructs.
VcdSamples sample_vcd(std::string_view text, const VcdOptions& options);

/// Toggle column of one bit of a sampled variable (bit 0 = LSB).
std::vector<std::uint8_t> bit_toggles(const VcdSamples& samples, std::size_t var, std::uint32_t bit);

/// Sample, then apply extract_toggles / collapse_bus / gated_clock_toggle per catalog kind.
VcdTrace parse_vcd(std::string_view text, const VcdOptions& options);

}  // namespace apollo::trace

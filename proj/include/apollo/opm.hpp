#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apollo/model.hpp"
#include "apollo/trace.hpp"

namespace apollo::opm {

/// ceil(log2(v)) for v >= 1.
unsigned ceil_log2(std::uint64_t v) noexcept;

/// B-bit unsigned fixed-point weights with one global scale
/// (integer units per power unit).
struct QuantizedModel {
    std::vector<std::size_t> proxy_indices;
    std::vector<std::string> proxy_names;
    std::vector<std::uint64_t> q_weights;
    unsigned bits = 10;
    double scale = 1.0;

    std::size_t q() const noexcept { return q_weights.size(); }
    /// Per-cycle adder tree output: B + ceil(log2 Q) bits.
    unsigned cycle_sum_width() const noexcept;
    /// T-cycle accumulator: B + ceil(log2 Q) + ceil(log2 T) bits.
    unsigned window_acc_width(std::size_t window) const noexcept;
};

inline constexpr unsigned kMaxBits = 32;
inline constexpr int kLatencyCycles = 2;

/// scale = (2^B - 1) / max(w); q_j = round-half-even(w_j * scale).
/// Throws ParameterError for B outside [1, 32], negative weights or all-zero weights.
QuantizedModel quantize(const model::PowerModel& model, unsigned bits);

struct OpmOutput {
    std::size_t window = 1;
    /// One value per complete window: accumulator >> log2(T).
    std::vector<std::uint64_t> raw;
    int latency_cycles = kLatencyCycles;
    /// raw values fit in window_acc_width - log2(T) bits.
    unsigned output_width = 0;
    std::size_t dropped_cycles = 0;
};

/// Bit-exact OPM: each cycle adds the weights of toggling proxies (AND
/// gating, no multipliers) into a B+ceil(log2 Q)-bit sum, T sums accumulate
/// into a B+ceil(log2 Q)+ceil(log2 T)-bit register that is emitted shifted
/// right by log2(T) and cleared every T cycles. `proxy_toggles` holds exactly
/// the Q proxy columns in model order. Window k covers input cycles
/// [kT, (k+1)T); the 2-cycle pipeline latency is metadata only.
/// Throws InvariantError if a register would overflow its declared width.
OpmOutput simulate_opm(const QuantizedModel& qmodel, const trace::ToggleMatrix& proxy_toggles, std::size_t window);

/// Raw outputs back to power units: raw / scale.
std::vector<double> dequantize_output(const OpmOutput& out, double scale);

/// Worst-case |dequantized output - float window mean| for a model quantized
/// with `scale`: rounding contributes at most Q/2 LSB per cycle, bit-drop
/// truncation less than one output LSB, i.e. (Q/2 + (T-1)/T) / scale.
double dequantization_error_bound(std::size_t q, std::size_t window, double scale);

std::string opm_to_json(const QuantizedModel& qm, std::size_t window);
QuantizedModel opm_from_json(const std::string& text);
std::string output_to_csv(const OpmOutput& out, double scale);

}  // namespace apollo::opm

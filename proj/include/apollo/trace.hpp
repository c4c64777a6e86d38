#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace apollo::trace {

struct SingleBit {
    bool operator==(const SingleBit&) const = default;
};

struct Bus {
    std::uint32_t width = 2;
    bool operator==(const Bus&) const = default;
};

struct GatedClock {
    std::string enable_name;
    bool operator==(const GatedClock&) const = default;
};

using SignalKind = std::variant<SingleBit, Bus, GatedClock>;

struct SignalInfo {
    std::string name;
    SignalKind kind;
    bool operator==(const SignalInfo&) const = default;
};

/// Ordered, uniquely named list of candidate proxy signals.
class SignalCatalog {
public:
    SignalCatalog() = default;
    explicit SignalCatalog(std::vector<SignalInfo> signals);

    /// Catalog of `count` single-bit signals named s0000, s0001, ...
    static SignalCatalog numbered(std::size_t count);

    std::size_t size() const noexcept { return signals_.size(); }
    bool empty() const noexcept { return signals_.empty(); }
    const SignalInfo& operator[](std::size_t j) const { return signals_.at(j); }
    const std::vector<SignalInfo>& signals() const noexcept { return signals_; }
    std::optional<std::size_t> find(const std::string& name) const;

    bool operator==(const SignalCatalog&) const = default;

private:
    std::vector<SignalInfo> signals_;
};

/// N cycles x M signals of toggle bits, stored cycle-major with each cycle
/// packed into ceil(M/64) little-endian words (bit j%64 of word j/64).
class ToggleMatrix {
public:
    ToggleMatrix() = default;
    ToggleMatrix(std::size_t n_cycles, std::size_t n_signals);

    std::size_t n_cycles() const noexcept { return n_cycles_; }
    std::size_t n_signals() const noexcept { return n_signals_; }
    std::size_t words_per_cycle() const noexcept { return words_per_cycle_; }

    bool get(std::size_t cycle, std::size_t signal) const noexcept {
        return (words_[cycle * words_per_cycle_ + (signal >> 6)] >> (signal & 63)) & 1U;
    }
    void set(std::size_t cycle, std::size_t signal, bool value) noexcept {
        std::uint64_t& w = words_[cycle * words_per_cycle_ + (signal >> 6)];
        const std::uint64_t mask = std::uint64_t{1} << (signal & 63);
        w = value ? (w | mask) : (w & ~mask);
    }

    std::span<const std::uint64_t> cycle_words(std::size_t cycle) const noexcept {
        return {words_.data() + cycle * words_per_cycle_, words_per_cycle_};
    }
    std::span<std::uint64_t> cycle_words(std::size_t cycle) noexcept {
        return {words_.data() + cycle * words_per_cycle_, words_per_cycle_};
    }
    const std::vector<std::uint64_t>& words() const noexcept { return words_; }

    std::vector<std::uint8_t> column(std::size_t signal) const;
    void set_column(std::size_t signal, std::span<const std::uint8_t> bits);

    /// Number of cycles in which `signal` toggles.
    std::size_t column_count(std::size_t signal) const noexcept;

    /// Copy of rows [first, first + count).
    ToggleMatrix slice_cycles(std::size_t first, std::size_t count) const;
    /// Copy keeping only the listed columns, in the listed order.
    ToggleMatrix select_columns(std::span<const std::size_t> signals) const;

    /// Build from per-signal columns of equal length.
    static ToggleMatrix from_columns(const std::vector<std::vector<std::uint8_t>>& columns);

    bool operator==(const ToggleMatrix&) const = default;

private:
    std::size_t n_cycles_ = 0;
    std::size_t n_signals_ = 0;
    std::size_t words_per_cycle_ = 0;
    std::vector<std::uint64_t> words_;
};

/// One label per cycle, arbitrary power units.
using PowerTrace = std::vector<double>;

/// Per-cycle toggle bits of one signal. Any change of the sampled value is a
/// toggle (X and Z states included); cycle 0 has no predecessor and is 0.
template <typename T>
std::vector<std::uint8_t> extract_toggles(std::span<const T> values) {
    std::vector<std::uint8_t> out(values.size(), 0);
    for (std::size_t i = 1; i < values.size(); ++i) {
        out[i] = values[i] != values[i - 1] ? 1 : 0;
    }
    return out;
}

/// Extract toggles for M signals given as per-signal sampled value series.
/// Throws DataError when the series have differing lengths.
ToggleMatrix extract_toggles(const std::vector<std::vector<std::string>>& per_signal_values);

/// Element-wise OR of the bit-toggle columns of one bus.
std::vector<std::uint8_t> collapse_bus(const std::vector<std::vector<std::uint8_t>>& bit_toggles);

enum class LatchConvention { SameCycle, Delayed };

/// Toggle column of a gated clock, represented by its latched enable.
/// `enable_asserted[i]` is whether the sampled enable equals logic 1 at cycle i.
std::vector<std::uint8_t> gated_clock_toggle(std::span<const std::uint8_t> enable_asserted,
                                             LatchConvention convention = LatchConvention::SameCycle);

/// Debug export: header row of names, then one row of 0/1 per cycle.
std::string to_csv(const SignalCatalog& catalog, const ToggleMatrix& toggles);

}  // namespace apollo::trace

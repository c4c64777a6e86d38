#include "apollo/trace.hpp"

#include <bit>
#include <cstdio>
#include <unordered_set>

#include "apollo/errors.hpp"

namespace apollo::trace {

SignalCatalog::SignalCatalog(std::vector<SignalInfo> signals) : signals_(std::move(signals)) {
    std::unordered_set<std::string> seen;
    for (const auto& s : signals_) {
        if (s.name.empty()) throw ParameterError("signal catalog: empty signal name");
        if (!seen.insert(s.name).second) {
            throw ParameterError("signal catalog: duplicate signal name '" + s.name + "'");
        }
        if (const auto* bus = std::get_if<Bus>(&s.kind); bus && bus->width < 2) {
            throw ParameterError("signal catalog: bus '" + s.name + "' must be at least 2 bits wide");
        }
        if (const auto* g = std::get_if<GatedClock>(&s.kind); g && g->enable_name.empty()) {
            throw ParameterError("signal catalog: gated clock '" + s.name + "' has no enable");
        }
    }
}

SignalCatalog SignalCatalog::numbered(std::size_t count) {
    std::vector<SignalInfo> signals;
    signals.reserve(count);
    char buf[32];
    for (std::size_t j = 0; j < count; ++j) {
        std::snprintf(buf, sizeof buf, "s%04zu", j);
        signals.push_back({buf, SingleBit{}});
    }
    return SignalCatalog(std::move(signals));
}

std::optional<std::size_t> SignalCatalog::find(const std::string& name) const {
    for (std::size_t j = 0; j < signals_.size(); ++j) {
        if (signals_[j].name == name) return j;
    }
    return std::nullopt;
}

ToggleMatrix::ToggleMatrix(std::size_t n_cycles, std::size_t n_signals)
    : n_cycles_(n_cycles),
      n_signals_(n_signals),
      words_per_cycle_((n_signals + 63) / 64),
      words_(n_cycles * ((n_signals + 63) / 64), 0) {}

std::vector<std::uint8_t> ToggleMatrix::column(std::size_t signal) const {
    std::vector<std::uint8_t> out(n_cycles_);
    for (std::size_t i = 0; i < n_cycles_; ++i) out[i] = get(i, signal) ? 1 : 0;
    return out;
}

void ToggleMatrix::set_column(std::size_t signal, std::span<const std::uint8_t> bits) {
    if (bits.size() != n_cycles_) throw DataError("set_column: length mismatch");
    for (std::size_t i = 0; i < n_cycles_; ++i) set(i, signal, bits[i] != 0);
}

std::size_t ToggleMatrix::column_count(std::size_t signal) const noexcept {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n_cycles_; ++i) count += get(i, signal) ? 1 : 0;
    return count;
}

ToggleMatrix ToggleMatrix::slice_cycles(std::size_t first, std::size_t count) const {
    if (first > n_cycles_ || count > n_cycles_ - first) {
        throw ParameterError("slice_cycles: range out of bounds");
    }
    ToggleMatrix out(count, n_signals_);
    std::copy(words_.begin() + static_cast<std::ptrdiff_t>(first * words_per_cycle_),
              words_.begin() + static_cast<std::ptrdiff_t>((first + count) * words_per_cycle_),
              out.words_.begin());
    return out;
}

ToggleMatrix ToggleMatrix::select_columns(std::span<const std::size_t> signals) const {
    ToggleMatrix out(n_cycles_, signals.size());
    for (std::size_t k = 0; k < signals.size(); ++k) {
        if (signals[k] >= n_signals_) throw DataError("select_columns: signal index out of range");
    }
    for (std::size_t i = 0; i < n_cycles_; ++i) {
        for (std::size_t k = 0; k < signals.size(); ++k) {
            if (get(i, signals[k])) out.set(i, k, true);
        }
    }
    return out;
}

ToggleMatrix ToggleMatrix::from_columns(const std::vector<std::vector<std::uint8_t>>& columns) {
    const std::size_t n = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns) {
        if (c.size() != n) throw DataError("toggle columns have differing cycle counts");
    }
    ToggleMatrix out(n, columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (columns[j][i] > 1) throw DataError("toggle entries must be 0 or 1");
            if (columns[j][i]) out.set(i, j, true);
        }
    }
    return out;
}

ToggleMatrix extract_toggles(const std::vector<std::vector<std::string>>& per_signal_values) {
    std::vector<std::vector<std::uint8_t>> columns;
    columns.reserve(per_signal_values.size());
    for (const auto& values : per_signal_values) {
        if (!columns.empty() && values.size() != per_signal_values.front().size()) {
            throw DataError("extract_toggles: ragged input, signals have differing cycle counts");
        }
        columns.push_back(extract_toggles(std::span<const std::string>(values)));
    }
    return ToggleMatrix::from_columns(columns);
}

std::vector<std::uint8_t> collapse_bus(const std::vector<std::vector<std::uint8_t>>& bit_toggles) {
    if (bit_toggles.empty()) throw DataError("collapse_bus: bus of width 0");
    const std::size_t n = bit_toggles.front().size();
    std::vector<std::uint8_t> out(n, 0);
    for (const auto& bit : bit_toggles) {
        if (bit.size() != n) throw DataError("collapse_bus: bit columns have differing lengths");
        for (std::size_t i = 0; i < n; ++i) out[i] |= bit[i];
    }
    return out;
}

std::vector<std::uint8_t> gated_clock_toggle(std::span<const std::uint8_t> enable_asserted,
                                             LatchConvention convention) {
    std::vector<std::uint8_t> out(enable_asserted.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (convention == LatchConvention::SameCycle) {
            out[i] = enable_asserted[i] ? 1 : 0;
        } else if (i > 0) {
            out[i] = enable_asserted[i - 1] ? 1 : 0;
        }
    }
    return out;
}

std::string to_csv(const SignalCatalog& catalog, const ToggleMatrix& toggles) {
    if (catalog.size() != toggles.n_signals()) throw DataError("to_csv: catalog/matrix width mismatch");
    std::string out;
    for (std::size_t j = 0; j < catalog.size(); ++j) {
        if (j) out += ',';
        out += catalog[j].name;
    }
    out += '\n';
    for (std::size_t i = 0; i < toggles.n_cycles(); ++i) {
        for (std::size_t j = 0; j < toggles.n_signals(); ++j) {
            if (j) out += ',';
            out += toggles.get(i, j) ? '1' : '0';
        }
        out += '\n';
    }
    return out;
}

}  // namespace apollo::trace

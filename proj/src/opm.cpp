#include "apollo/opm.hpp"

#include <algorithm>
#include <bit>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "apollo/errors.hpp"

namespace apollo::opm {

unsigned ceil_log2(std::uint64_t v) noexcept {
    return v <= 1 ? 0U : static_cast<unsigned>(std::bit_width(v - 1));
}

unsigned QuantizedModel::cycle_sum_width() const noexcept { return bits + ceil_log2(std::max<std::size_t>(q(), 1)); }

unsigned QuantizedModel::window_acc_width(std::size_t window) const noexcept {
    return cycle_sum_width() + ceil_log2(std::max<std::size_t>(window, 1));
}

QuantizedModel quantize(const model::PowerModel& model, unsigned bits) {
    if (bits < 1 || bits > kMaxBits) throw ParameterError("bit width B must lie in [1, 32]");
    double max_w = 0.0;
    for (const double w : model.weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("quantize: weights must be finite and >= 0");
        max_w = std::max(max_w, w);
    }
    if (max_w == 0.0) throw ParameterError("quantize: all weights are zero");

    QuantizedModel qm;
    qm.proxy_indices = model.proxy_indices;
    qm.proxy_names = model.proxy_names;
    qm.bits = bits;
    const double full_scale = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;
    qm.scale = full_scale / max_w;
    qm.q_weights.reserve(model.weights.size());
    const int saved = std::fegetround();
    std::fesetround(FE_TONEAREST);
    for (const double w : model.weights) {
        const double v = std::min(std::nearbyint(w * qm.scale), full_scale);
        qm.q_weights.push_back(static_cast<std::uint64_t>(v));
    }
    std::fesetround(saved);
    return qm;
}

OpmOutput simulate_opm(const QuantizedModel& qm, const trace::ToggleMatrix& toggles, std::size_t window) {
    if (window == 0 || (window & (window - 1)) != 0) {
        throw ParameterError("window T=" + std::to_string(window) + " is not a power of two");
    }
    if (toggles.n_signals() != qm.q()) {
        throw DataError("OPM input has " + std::to_string(toggles.n_signals()) + " columns, model has Q=" +
                        std::to_string(qm.q()));
    }
    const unsigned acc_width = qm.window_acc_width(window);
    if (acc_width > 63) throw ParameterError("OPM accumulator wider than 63 bits");
    const std::uint64_t weight_limit = std::uint64_t{1} << qm.bits;
    for (const auto w : qm.q_weights) {
        if (w >= weight_limit) throw InvariantError("quantized weight does not fit in B bits");
    }
    const std::uint64_t sum_limit = std::uint64_t{1} << qm.cycle_sum_width();
    const std::uint64_t acc_limit = std::uint64_t{1} << acc_width;
    const unsigned shift = ceil_log2(window);

    OpmOutput out;
    out.window = window;
    out.output_width = acc_width - shift;
    const std::size_t n_windows = toggles.n_cycles() / window;
    out.raw.reserve(n_windows);
    out.dropped_cycles = toggles.n_cycles() - n_windows * window;

    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < n_windows * window; ++i) {
        const auto row = toggles.cycle_words(i);
        std::uint64_t sum = 0;
        for (std::size_t k = 0; k < row.size(); ++k) {
            for (std::uint64_t word = row[k]; word; word &= word - 1) {
                sum += qm.q_weights[k * 64 + static_cast<std::size_t>(std::countr_zero(word))];
            }
        }
        if (sum >= sum_limit) throw InvariantError("OPM cycle sum overflowed its declared width");
        acc += sum;
        if (acc >= acc_limit) throw InvariantError("OPM window accumulator overflowed its declared width");
        if ((i + 1) % window == 0) {
            out.raw.push_back(acc >> shift);
            acc = 0;
        }
    }
    return out;
}

std::vector<double> dequantize_output(const OpmOutput& out, double scale) {
    if (!(scale > 0.0)) throw ParameterError("dequantize: scale must be positive");
    std::vector<double> v(out.raw.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<double>(out.raw[k]) / scale;
    return v;
}

double dequantization_error_bound(std::size_t q, std::size_t window, double scale) {
    const double t = static_cast<double>(window);
    return (0.5 * static_cast<double>(q) + (t - 1.0) / t) / scale;
}

std::string opm_to_json(const QuantizedModel& qm, std::size_t window) {
    nlohmann::ordered_json j;
    j["toolkit"] = "apollo";
    j["version"] = model::kToolkitVersion;
    j["q"] = qm.q();
    j["bits"] = qm.bits;
    j["window"] = window;
    j["scale"] = qm.scale;
    j["q_weights"] = qm.q_weights;
    j["proxy_indices"] = qm.proxy_indices;
    j["proxy_names"] = qm.proxy_names;
    j["cycle_sum_width"] = qm.cycle_sum_width();
    j["window_acc_width"] = qm.window_acc_width(window);
    j["output_width"] = qm.window_acc_width(window) - ceil_log2(window);
    j["latency_cycles"] = kLatencyCycles;
    return j.dump(2) + "\n";
}

QuantizedModel opm_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::ordered_json::parse(text);
        QuantizedModel qm;
        qm.bits = j.at("bits").get<unsigned>();
        if (qm.bits < 1 || qm.bits > kMaxBits) throw DataError("OPM JSON: bits outside [1, 32]");
        qm.scale = j.at("scale").get<double>();
        if (!(qm.scale > 0.0) || !std::isfinite(qm.scale)) throw DataError("OPM JSON: scale must be positive");
        qm.q_weights = j.at("q_weights").get<std::vector<std::uint64_t>>();
        qm.proxy_indices = j.at("proxy_indices").get<std::vector<std::size_t>>();
        qm.proxy_names = j.value("proxy_names", std::vector<std::string>{});
        if (qm.proxy_indices.size() != qm.q_weights.size()) throw DataError("OPM JSON: index/weight count mismatch");
        for (const auto w : qm.q_weights) {
            if (w >> qm.bits) throw DataError("OPM JSON: quantized weight does not fit in B bits");
        }
        return qm;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("OPM JSON: ") + e.what());
    }
}

std::string output_to_csv(const OpmOutput& out, double scale) {
    std::string s = "window,first_cycle,raw,power\n";
    char buf[128];
    for (std::size_t k = 0; k < out.raw.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%llu,%.17g\n", k, k * out.window,
                      static_cast<unsigned long long>(out.raw[k]), static_cast<double>(out.raw[k]) / scale);
        s += buf;
    }
    return s;
}

}  // namespace apollo::opm

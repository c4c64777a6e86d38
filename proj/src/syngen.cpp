#include "apollo/syngen.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "apollo/errors.hpp"
#include "apollo/rng.hpp"

namespace apollo::syngen {
namespace {

template <typename T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
}

}  // namespace

std::vector<std::size_t> SyntheticDesign::support() const {
    std::vector<std::size_t> s;
    for (std::size_t j = 0; j < true_weights.size(); ++j) {
        if (true_weights[j] > 0.0) s.push_back(j);
    }
    return s;
}

std::size_t WorkloadProfile::n_cycles() const noexcept {
    std::size_t n = 0;
    for (const auto& p : phases) n += p.length;
    return n;
}

SyntheticDesign gen_design(const DesignParams& params) {
    const auto m = params.n_signals;
    if (params.n_true == 0 || params.n_true > m) {
        throw ParameterError("gen_design: need 0 < K <= M (K=" + std::to_string(params.n_true) +
                             ", M=" + std::to_string(m) + ")");
    }
    if (params.n_clusters == 0 || params.n_clusters > m) throw ParameterError("gen_design: need 1 <= clusters <= M");
    if (!(params.rho >= 0.0 && params.rho <= 1.0)) throw ParameterError("gen_design: rho must lie in [0,1]");
    if (!(params.weight_lo > 0.0 && params.weight_lo <= params.weight_hi)) {
        throw ParameterError("gen_design: need 0 < weight_lo <= weight_hi");
    }
    if (!(params.activity_lo > 0.0 && params.activity_lo <= params.activity_hi && params.activity_hi < 1.0)) {
        throw ParameterError("gen_design: need 0 < activity_lo <= activity_hi < 1");
    }
    if (!(params.noise_fraction >= 0.0)) throw ParameterError("gen_design: noise_fraction must be >= 0");

    CounterRng rng(params.seed);
    SyntheticDesign d;
    d.n_signals = m;
    d.rho = params.rho;
    d.seed = params.seed;

    // Random balanced assignment: every cluster gets at least one member.
    std::vector<std::uint32_t> slots(m);
    for (std::size_t j = 0; j < m; ++j) slots[j] = static_cast<std::uint32_t>(j % params.n_clusters);
    shuffle(slots, rng);
    d.cluster_map = std::move(slots);

    d.base_activity.resize(params.n_clusters);
    for (auto& a : d.base_activity) a = rng.uniform(params.activity_lo, params.activity_hi);

    std::vector<std::vector<std::size_t>> members(params.n_clusters);
    for (std::size_t j = 0; j < m; ++j) members[d.cluster_map[j]].push_back(j);
    for (auto& mem : members) shuffle(mem, rng);
    std::vector<std::size_t> cluster_order(params.n_clusters);
    std::iota(cluster_order.begin(), cluster_order.end(), 0);
    shuffle(cluster_order, rng);

    // Spread the support round-robin across clusters in random order.
    std::vector<std::size_t> next(params.n_clusters, 0);
    d.true_weights.assign(m, 0.0);
    const double log_lo = std::log(params.weight_lo);
    const double log_hi = std::log(params.weight_hi);
    std::size_t placed = 0;
    for (std::size_t k = 0; placed < params.n_true; ++k) {
        const auto c = cluster_order[k % params.n_clusters];
        if (next[c] >= members[c].size()) continue;
        const auto j = members[c][next[c]++];
        d.true_weights[j] = std::exp(rng.uniform(log_lo, log_hi));
        ++placed;
    }

    double expected = 0.0;
    for (std::size_t j = 0; j < m; ++j) expected += d.true_weights[j] * d.base_activity[d.cluster_map[j]];
    d.noise_sigma = params.noise_fraction * expected;
    return d;
}

WorkloadProfile default_profile(std::size_t n_cycles, std::uint64_t seed) {
    std::vector<double> multipliers{0.25, 1.0, 0.5, 2.0, 0.35, 1.5, 0.7, 2.5};
    CounterRng rng(seed);
    shuffle(multipliers, rng);
    WorkloadProfile profile;
    profile.seed = seed;
    const std::size_t n_phases = multipliers.size();
    for (std::size_t k = 0; k < n_phases; ++k) {
        Phase p;
        p.length = n_cycles / n_phases + (k == n_phases - 1 ? n_cycles % n_phases : 0);
        p.multiplier = multipliers[k] * std::exp(rng.uniform(std::log(0.8), std::log(1.25)));
        profile.phases.push_back(p);
    }
    return profile;
}

trace::ToggleMatrix gen_workload(const SyntheticDesign& design, const WorkloadProfile& profile) {
    if (design.cluster_map.size() != design.n_signals || design.true_weights.size() != design.n_signals) {
        throw ParameterError("gen_workload: inconsistent design");
    }
    for (const auto& p : profile.phases) {
        if (!(p.multiplier >= 0.0) || !std::isfinite(p.multiplier)) {
            throw ParameterError("gen_workload: phase multipliers must be finite and >= 0");
        }
    }
    const std::size_t m = design.n_signals;
    const std::size_t n_clusters = design.n_clusters();
    trace::ToggleMatrix out(profile.n_cycles(), m);
    CounterRng rng = CounterRng(design.seed).fork(profile.seed);
    const double copy = std::sqrt(design.rho);

    std::vector<double> p(n_clusters);
    std::vector<std::uint8_t> latent(n_clusters);
    std::size_t cycle = 0;
    for (const auto& phase : profile.phases) {
        for (std::size_t c = 0; c < n_clusters; ++c) {
            p[c] = std::clamp(design.base_activity[c] * phase.multiplier, kActivityFloor, kActivityCeiling);
        }
        for (std::size_t i = 0; i < phase.length; ++i, ++cycle) {
            for (std::size_t c = 0; c < n_clusters; ++c) latent[c] = rng.bernoulli(p[c]) ? 1 : 0;
            auto row = out.cycle_words(cycle);
            for (std::size_t j = 0; j < m; ++j) {
                const auto c = design.cluster_map[j];
                const bool bit = rng.bernoulli(copy) ? latent[c] != 0 : rng.bernoulli(p[c]);
                if (bit) row[j >> 6] |= std::uint64_t{1} << (j & 63);
            }
        }
    }
    return out;
}

trace::PowerTrace gen_power_labels(const SyntheticDesign& design, const trace::ToggleMatrix& toggles,
                                   bool include_noise, std::uint64_t noise_seed) {
    if (toggles.n_signals() != design.n_signals) {
        throw DataError("gen_power_labels: toggle matrix has " + std::to_string(toggles.n_signals()) +
                        " columns, design has " + std::to_string(design.n_signals));
    }
    const auto support = design.support();
    trace::PowerTrace y(toggles.n_cycles(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        double acc = 0.0;
        for (const auto j : support) {
            if (toggles.get(i, j)) acc += design.true_weights[j];
        }
        y[i] = acc;
    }
    if (include_noise && design.noise_sigma > 0.0) {
        CounterRng rng = CounterRng(design.seed ^ 0x6e6f697365ULL).fork(noise_seed);
        for (auto& v : y) v += design.noise_sigma * rng.normal();
    }
    return y;
}

std::vector<std::size_t> subsample_uniform_power(const std::vector<double>& mean_powers, std::size_t count,
                                                 std::size_t n_bins) {
    if (n_bins == 0) throw ParameterError("subsample_uniform_power: need at least one bin");
    if (mean_powers.empty() || count == 0) return {};
    const auto [lo_it, hi_it] = std::minmax_element(mean_powers.begin(), mean_powers.end());
    const double lo = *lo_it;
    const double width = (*hi_it - lo) / static_cast<double>(n_bins);
    std::vector<std::vector<std::size_t>> bins(n_bins);
    for (std::size_t k = 0; k < mean_powers.size(); ++k) {
        std::size_t b = width > 0.0 ? static_cast<std::size_t>((mean_powers[k] - lo) / width) : 0;
        bins[std::min(b, n_bins - 1)].push_back(k);
    }
    std::vector<std::size_t> picked;
    std::vector<std::size_t> cursor(n_bins, 0);
    bool progress = true;
    while (picked.size() < count && progress) {
        progress = false;
        for (std::size_t b = 0; b < n_bins && picked.size() < count; ++b) {
            if (cursor[b] < bins[b].size()) {
                picked.push_back(bins[b][cursor[b]++]);
                progress = true;
            }
        }
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

std::string design_to_json(const SyntheticDesign& d) {
    nlohmann::json j;
    j["n_signals"] = d.n_signals;
    j["seed"] = d.seed;
    j["rho"] = d.rho;
    j["noise_sigma"] = d.noise_sigma;
    j["true_weights"] = d.true_weights;
    j["cluster_map"] = d.cluster_map;
    j["base_activity"] = d.base_activity;
    j["support"] = d.support();
    return j.dump(2) + "\n";
}

SyntheticDesign design_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        SyntheticDesign d;
        d.n_signals = j.at("n_signals").get<std::size_t>();
        d.seed = j.at("seed").get<std::uint64_t>();
        d.rho = j.at("rho").get<double>();
        d.noise_sigma = j.at("noise_sigma").get<double>();
        d.true_weights = j.at("true_weights").get<std::vector<double>>();
        d.cluster_map = j.at("cluster_map").get<std::vector<std::uint32_t>>();
        d.base_activity = j.at("base_activity").get<std::vector<double>>();
        if (d.true_weights.size() != d.n_signals || d.cluster_map.size() != d.n_signals) {
            throw DataError("design JSON: array lengths disagree with n_signals");
        }
        for (const auto c : d.cluster_map) {
            if (c >= d.base_activity.size()) throw DataError("design JSON: cluster id out of range");
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("design JSON: ") + e.what());
    }
}

}  // namespace apollo::syngen

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apollo/trace.hpp"

namespace apollo::syngen {

struct DesignParams {
    std::size_t n_signals = 2000;
    std::size_t n_true = 50;
    std::size_t n_clusters = 100;
    std::uint64_t seed = 1;
    /// Pairwise toggle correlation between two members of one cluster
    /// within a phase of constant activity.
    double rho = 0.6;
    /// True weights are log-uniform over [weight_lo, weight_hi].
    double weight_lo = 1.0;
    double weight_hi = 10.0;
    /// Per-cluster base toggle probability, uniform over [activity_lo, activity_hi].
    double activity_lo = 0.05;
    double activity_hi = 0.3;
    /// Label noise standard deviation as a fraction of the expected
    /// noiseless power at activity multiplier 1.
    double noise_fraction = 0.02;
};

/// Ground-truth sparse linear power model over correlated toggle clusters.
struct SyntheticDesign {
    std::size_t n_signals = 0;
    std::vector<double> true_weights;        // M entries, exactly K positive
    std::vector<std::uint32_t> cluster_map;  // signal -> cluster
    std::vector<double> base_activity;       // per cluster, in (0,1)
    double rho = 0.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    std::vector<std::size_t> support() const;
    std::size_t n_clusters() const noexcept { return base_activity.size(); }

    bool operator==(const SyntheticDesign&) const = default;
};

struct Phase {
    std::size_t length = 0;
    double multiplier = 1.0;
};

struct WorkloadProfile {
    std::vector<Phase> phases;
    std::uint64_t seed = 0;

    std::size_t n_cycles() const noexcept;
};

/// Smallest toggle probability any signal is driven with; activity
/// multipliers at or near zero clamp here.
inline constexpr double kActivityFloor = 1e-4;
inline constexpr double kActivityCeiling = 0.95;

SyntheticDesign gen_design(const DesignParams& params);

/// Eight phases over `n_cycles` with activity multipliers spanning more than
/// a decade, order and jitter drawn from `seed`.
WorkloadProfile default_profile(std::size_t n_cycles, std::uint64_t seed);

trace::ToggleMatrix gen_workload(const SyntheticDesign& design, const WorkloadProfile& profile);

/// y[i] = sum_j w*_j x_j[i], plus N(0, noise_sigma^2) when `include_noise`.
/// The noise stream is derived from `noise_seed`.
trace::PowerTrace gen_power_labels(const SyntheticDesign& design, const trace::ToggleMatrix& toggles,
                                   bool include_noise, std::uint64_t noise_seed = 0);

/// Pick up to `count` workloads so their mean powers cover [min, max] evenly:
/// bin by mean power into `n_bins` equal-width bins, then draw round-robin
/// across bins (lowest index first inside a bin).
std::vector<std::size_t> subsample_uniform_power(const std::vector<double>& mean_powers, std::size_t count,
                                                 std::size_t n_bins);

std::string design_to_json(const SyntheticDesign& design);
SyntheticDesign design_from_json(const std::string& text);

}  // namespace apollo::syngen

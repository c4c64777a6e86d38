#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "apollo/errors.hpp"
#include "apollo/syngen.hpp"

using namespace apollo;
using namespace apollo::syngen;

namespace {

SyntheticDesign small_design(std::uint64_t seed) {
    DesignParams p;
    p.n_signals = 6;
    p.n_true = 2;
    p.n_clusters = 2;
    p.seed = seed;
    return gen_design(p);
}

double mean_activity(const trace::ToggleMatrix& t, std::size_t first, std::size_t count) {
    double total = 0.0;
    for (std::size_t i = first; i < first + count; ++i) {
        for (std::size_t j = 0; j < t.n_signals(); ++j) total += t.get(i, j);
    }
    return total / static_cast<double>(count * t.n_signals());
}

}  // namespace

TEST_SUITE("syngen") {

TEST_CASE("designs are reproducible") {
    const auto a = small_design(7);
    const auto b = small_design(7);
    CHECK(a == b);
    CHECK(a.support().size() == 2);
    CHECK(design_to_json(a) == design_to_json(b));
    CHECK(small_design(8).true_weights != a.true_weights);

    const auto back = design_from_json(design_to_json(a));
    CHECK(back == a);
}

TEST_CASE("reference design shape") {
    DesignParams p;
    p.seed = 1;
    const auto d = gen_design(p);
    const auto support = d.support();
    CHECK(support.size() == 50);
    CHECK(d.n_clusters() == 100);
    for (const auto j : support) {
        CHECK(d.true_weights[j] >= p.weight_lo);
        CHECK(d.true_weights[j] <= p.weight_hi);
    }
    CHECK(d.cluster_map.size() == 2000);
    for (const auto c : d.cluster_map) CHECK(c < 100);
    for (const auto a : d.base_activity) CHECK((a > 0.0 && a < 1.0));

    // Support spread over clusters: no cluster holds more than one true proxy.
    std::vector<int> per_cluster(100, 0);
    for (const auto j : support) ++per_cluster[d.cluster_map[j]];
    CHECK(*std::max_element(per_cluster.begin(), per_cluster.end()) == 1);
}

TEST_CASE("parameter checks") {
    DesignParams p;
    p.n_signals = 5;
    p.n_true = 6;
    p.n_clusters = 2;
    CHECK_THROWS_AS(gen_design(p), ParameterError);
    p.n_true = 0;
    CHECK_THROWS_AS(gen_design(p), ParameterError);
    p.n_true = 2;
    p.n_clusters = 0;
    CHECK_THROWS_AS(gen_design(p), ParameterError);
}

TEST_CASE("phase multipliers scale activity") {
    DesignParams p;
    p.n_signals = 200;
    p.n_true = 10;
    p.n_clusters = 20;
    p.activity_lo = 0.02;
    p.activity_hi = 0.1;
    p.seed = 3;
    const auto d = gen_design(p);
    const WorkloadProfile prof{{{20000, 1.0}, {20000, 5.0}}, 9};
    const auto t = gen_workload(d, prof);
    const double a1 = mean_activity(t, 0, 20000);
    const double a2 = mean_activity(t, 20000, 20000);
    CHECK(a2 / a1 == doctest::Approx(5.0).epsilon(0.03));

    // Multiplier 0 clamps to the activity floor.
    const auto quiet = gen_workload(d, WorkloadProfile{{{5000, 0.0}}, 1});
    CHECK(mean_activity(quiet, 0, 5000) < 10 * kActivityFloor);
}

TEST_CASE("within-cluster correlation matches rho") {
    DesignParams p;
    p.n_signals = 40;
    p.n_true = 4;
    p.n_clusters = 2;
    p.rho = 0.6;
    p.seed = 5;
    const auto d = gen_design(p);
    const auto t = gen_workload(d, WorkloadProfile{{{40000, 1.0}}, 2});
    std::vector<std::size_t> c0;
    for (std::size_t j = 0; j < 40 && c0.size() < 2; ++j) {
        if (d.cluster_map[j] == 0) c0.push_back(j);
    }
    REQUIRE(c0.size() == 2);
    double sa = 0, sb = 0, sab = 0;
    const double n = 40000;
    for (std::size_t i = 0; i < 40000; ++i) {
        const double a = t.get(i, c0[0]);
        const double b = t.get(i, c0[1]);
        sa += a;
        sb += b;
        sab += a * b;
    }
    const double ma = sa / n, mb = sb / n;
    const double corr = (sab / n - ma * mb) / std::sqrt(ma * (1 - ma) * mb * (1 - mb));
    CHECK(corr == doctest::Approx(0.6).epsilon(0.1));
}

TEST_CASE("default profile spans a wide power range") {
    DesignParams p;
    p.seed = 1;
    const auto d = gen_design(p);
    const auto prof = default_profile(10000, 11);
    CHECK(prof.n_cycles() == 10000);
    CHECK(prof.phases.size() == 8);
    const auto y = gen_power_labels(d, gen_workload(d, prof), false);
    double lo = 1e300, hi = 0;
    for (std::size_t w = 0; w + 256 <= y.size(); w += 256) {
        double s = 0;
        for (std::size_t i = w; i < w + 256; ++i) s += y[i];
        lo = std::min(lo, s / 256);
        hi = std::max(hi, s / 256);
    }
    CHECK(hi / lo >= 5.0);
}

TEST_CASE("labels are the dot product") {
    SyntheticDesign d;
    d.n_signals = 2;
    d.true_weights = {2.0, 3.0};
    d.cluster_map = {0, 0};
    d.base_activity = {0.5};
    const auto t = trace::ToggleMatrix::from_columns({{1, 0}, {1, 0}});
    const auto y = gen_power_labels(d, t, false);
    CHECK(y[0] == 5.0);
    CHECK(y[1] == 0.0);

    // Random 20x6 instance against a double loop.
    const auto sd = small_design(4);
    const auto x = gen_workload(sd, WorkloadProfile{{{20, 3.0}}, 4});
    const auto labels = gen_power_labels(sd, x, false);
    for (std::size_t i = 0; i < 20; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 6; ++j) acc += sd.true_weights[j] * (x.get(i, j) ? 1.0 : 0.0);
        CHECK(labels[i] == doctest::Approx(acc).epsilon(1e-15));
    }
    CHECK_THROWS_AS(gen_power_labels(sd, trace::ToggleMatrix(3, 5), false), DataError);
}

TEST_CASE("noiseless labels are linear") {
    auto d = small_design(9);
    std::mt19937 gen(1);
    for (int trial = 0; trial < 100; ++trial) {
        // Rows a, b with disjoint supports, and their OR.
        trace::ToggleMatrix t(3, 6);
        for (std::size_t j = 0; j < 6; ++j) {
            const auto r = gen() % 3;
            if (r == 1) t.set(0, j, true);
            if (r == 2) t.set(1, j, true);
            if (r != 0) t.set(2, j, true);
        }
        const auto y = gen_power_labels(d, t, false);
        CHECK(y[0] + y[1] == doctest::Approx(y[2]).epsilon(1e-14));
    }

    const auto x = gen_workload(d, WorkloadProfile{{{50, 2.0}}, 1});
    const auto y1 = gen_power_labels(d, x, false);
    auto scaled = d;
    for (auto& w : scaled.true_weights) w *= 3.0;
    const auto y3 = gen_power_labels(scaled, x, false);
    for (std::size_t i = 0; i < 50; ++i) CHECK(y3[i] == doctest::Approx(3.0 * y1[i]).epsilon(1e-14));
}

TEST_CASE("noise has the configured spread") {
    DesignParams p;
    p.seed = 2;
    const auto d = gen_design(p);
    const auto x = gen_workload(d, default_profile(4000, 1));
    const auto clean = gen_power_labels(d, x, false);
    const auto noisy = gen_power_labels(d, x, true, 1);
    double ss = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) ss += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
    CHECK(std::sqrt(ss / 4000) == doctest::Approx(d.noise_sigma).epsilon(0.05));
    CHECK(gen_power_labels(d, x, true, 1) == noisy);
    CHECK(gen_power_labels(d, x, true, 2) != noisy);
}

TEST_CASE("uniform power subsampling") {
    const std::vector<double> powers{1.0, 1.1, 1.2, 1.3, 5.0, 9.0, 9.5, 10.0};
    const auto picked = subsample_uniform_power(powers, 3, 3);
    // One per bin: [1, 4), [4, 7), [7, 10].
    CHECK(picked == std::vector<std::size_t>{0, 4, 5});
    CHECK(subsample_uniform_power(powers, 100, 3).size() == powers.size());
    CHECK(subsample_uniform_power({}, 3, 2).empty());
}

}  // TEST_SUITE

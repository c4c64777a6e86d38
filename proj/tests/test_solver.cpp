#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "apollo/errors.hpp"
#include "apollo/solver.hpp"
#include "apollo/syngen.hpp"
#include "prox_oracle.hpp"

using namespace apollo;
using namespace apollo::solver;
using namespace apollo::testing;

namespace {

DesignMatrix dense(std::size_t n, std::size_t m, std::mt19937& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n * m);
    for (auto& x : v) x = u(gen);
    return DesignMatrix::from_dense(n, m, std::move(v));
}

void check_monotone(const FitResult& f) {
    for (std::size_t k = 1; k < f.objective_trace.size(); ++k) {
        const double prev = f.objective_trace[k - 1];
        CHECK(f.objective_trace[k] <= prev + 1e-12 * std::max(1.0, std::abs(prev)));
    }
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("prox examples") {
    CHECK(prox_mcp(0.5, 1, 3, 1) == 0.0);
    CHECK(prox_mcp(4, 1, 3, 1) == 4.0);
    CHECK(prox_mcp(2, 1, 3, 1) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(static_cast<double>(prox_oracle(2, 1, 3, 1, true, false)) == doctest::Approx(1.5).epsilon(1e-8));
    CHECK(prox_mcp(-2, 1, 3, 1) == doctest::Approx(-1.5));
    CHECK(prox_mcp(-2, 1, 3, 1, true) == 0.0);

    CHECK(prox_lasso(2, 1, 1) == 1.0);
    CHECK(prox_lasso(0.3, 1, 1) == 0.0);
    CHECK(prox_lasso(-2, 1, 1, true) == 0.0);
    CHECK(prox_lasso(-2, 1, 1) == -1.0);

    CHECK_THROWS_AS(prox_mcp(1, 1, 1.0, 1), ParameterError);
    CHECK_THROWS_AS(prox_mcp(1, 1, 3, 0), ParameterError);
}

TEST_CASE("prox matches scalar minimization") {
    std::mt19937 gen(17);
    std::uniform_real_distribution<double> uz(-10, 10), ul(0.01, 3), ug(1.01, 20), us(0.01, 4);
    for (int trial = 0; trial < 2000; ++trial) {
        const double z = uz(gen), lambda = ul(gen), gamma = ug(gen), s = us(gen);
        const bool nonneg = trial % 2 == 0;
        const double w = prox_mcp(z, lambda, gamma, s, nonneg);
        const auto oracle = prox_oracle(z, lambda, gamma, s, true, nonneg);
        // Compare objective values; at ties the argmin is not unique.
        const auto fw = prox_objective(w, z, lambda, gamma, s, true);
        const auto fo = prox_objective(oracle, z, lambda, gamma, s, true);
        CHECK(static_cast<double>(fw - fo) <= 1e-12);
        // Distinct minimizers are only acceptable at an exact tie.
        if (std::abs(w - static_cast<double>(oracle)) > 1e-8) CHECK(std::abs(static_cast<double>(fw - fo)) <= 1e-12);

        const double wl = prox_lasso(z, lambda, s, nonneg);
        CHECK(std::abs(wl - static_cast<double>(prox_oracle(z, lambda, gamma, s, false, nonneg))) <= 1e-8);

        // Dense grid never beats the prox.
        for (int g = -200; g <= 200; ++g) {
            const double v = (std::abs(z) + gamma * lambda) * g / 100.0;
            if (nonneg && v < 0) continue;
            CHECK(fw <= prox_objective(v, z, lambda, gamma, s, true) + 1e-9);
        }
    }
}

TEST_CASE("non-convex coordinate subproblem") {
    // s*gamma < 1: the closed form no longer applies.
    const double lambda = 1, gamma = 2, s = 0.25;
    for (double z : {0.5, 2.0, 3.9, 4.1, 6.0, 10.0, -7.0}) {
        const double w = prox_mcp(z, lambda, gamma, s);
        const auto o = prox_oracle(z, lambda, gamma, s, true, false);
        CHECK(static_cast<double>(prox_objective(w, z, lambda, gamma, s, true) - prox_objective(o, z, lambda, gamma, s, true)) <= 1e-12);
    }
    // s*gamma == 1 exactly.
    const double w = prox_mcp(3.0, 1, 2, 0.5);
    CHECK(static_cast<double>(prox_objective(w, 3.0, 1, 2, 0.5, true) - prox_objective(prox_oracle(3.0, 1, 2, 0.5, true, false), 3.0, 1, 2, 0.5, true)) <= 1e-12);
}

TEST_CASE("MCP with huge gamma is the lasso") {
    std::mt19937 gen(23);
    std::uniform_real_distribution<double> uz(-10, 10), ul(0.01, 3), us(0.01, 4);
    for (int trial = 0; trial < 10000; ++trial) {
        const double z = uz(gen), lambda = ul(gen), s = us(gen);
        CHECK(std::abs(prox_mcp(z, lambda, 1e9, s) - prox_lasso(z, lambda, s)) <= 1e-6);
    }
}

TEST_CASE("penalties") {
    CHECK(penalty_lasso(-2, 0.5) == 1.0);
    CHECK(penalty_mcp(1, 1, 3) == doctest::Approx(1 - 1.0 / 6));
    CHECK(penalty_mcp(5, 1, 3) == 1.5);
    CHECK(penalty_mcp(3, 1, 3) == doctest::Approx(1.5));
    CHECK(penalty_from_string("mcp") == Penalty::Mcp);
    CHECK(to_string(Penalty::Lasso) == "lasso");
    CHECK_THROWS_AS(penalty_from_string("scad"), ParameterError);
}

TEST_CASE("design storages agree") {
    std::mt19937 gen(2);
    trace::ToggleMatrix t(80, 5);
    for (std::size_t i = 0; i < 80; ++i) {
        for (std::size_t j = 0; j < 5; ++j) t.set(i, j, gen() % 3 == 0);
    }
    const auto bits = DesignMatrix::from_toggles(t);
    std::vector<double> v(80 * 5);
    for (std::size_t j = 0; j < 5; ++j) {
        for (std::size_t i = 0; i < 80; ++i) v[j * 80 + i] = t.get(i, j);
    }
    const auto d = DesignMatrix::from_dense(80, 5, v);
    std::vector<double> r(80);
    for (auto& x : r) x = static_cast<double>(gen() % 100) / 7.0;
    for (std::size_t j = 0; j < 5; ++j) {
        CHECK(bits.dot(j, r) == doctest::Approx(d.dot(j, r)).epsilon(1e-14));
        for (std::size_t k = 0; k < 5; ++k) CHECK(bits.gram(j, k) == d.gram(j, k));
    }

    // tau = 8 on 80 cycles: 10 rows, each the mean of its 8 cycles.
    const auto iv = DesignMatrix::interval_means(t, 8);
    CHECK(iv.rows() == 10);
    for (std::size_t k = 0; k < 10; ++k) {
        for (std::size_t j = 0; j < 5; ++j) {
            int c = 0;
            for (std::size_t i = 8 * k; i < 8 * k + 8; ++i) c += t.get(i, j);
            CHECK(iv.value(k, j) == doctest::Approx(c / 8.0).epsilon(1e-15));
        }
    }
    CHECK(DesignMatrix::interval_means(t, 80).rows() == 1);
    CHECK(DesignMatrix::interval_means(t, 7).rows() == 11);

    CHECK_THROWS_AS(DesignMatrix::from_dense(2, 1, {1.0, std::nan("")}), DataError);
    CHECK_THROWS_AS(DesignMatrix::from_dense(2, 2, {1.0}), DataError);
}

TEST_CASE("univariate fits") {
    const std::size_t n = 10;
    const auto x = DesignMatrix::from_dense(n, 1, std::vector<double>(n, 1.0));
    const std::vector<double> y(n, 2.0);
    FitConfig cfg;
    cfg.lambda = 0;
    CHECK(fit_penalized(x, y, Penalty::Lasso, cfg).weights[0] == 2.0);
    CHECK(fit_penalized(x, y, Penalty::Mcp, cfg).weights[0] == 2.0);

    // s = 2, so lambda = 1 gives lambda/s = 0.5.
    cfg.lambda = 1.0;
    const double wl = fit_penalized(x, y, Penalty::Lasso, cfg).weights[0];
    CHECK(wl == doctest::Approx(1.5).epsilon(1e-12));
    cfg.gamma = 10;
    const double wm = fit_penalized(x, y, Penalty::Mcp, cfg).weights[0];
    CHECK(wm > 1.5);
    CHECK(wm == doctest::Approx(static_cast<double>(prox_oracle(2.0, 1.0, 10, 2.0, true, true))).epsilon(1e-8));

    // OLS beyond gamma*lambda: MCP leaves it alone, lasso still shrinks.
    cfg.lambda = 0.1;
    cfg.gamma = 3;
    CHECK(fit_penalized(x, y, Penalty::Mcp, cfg).weights[0] == doctest::Approx(2.0));
    CHECK(fit_penalized(x, y, Penalty::Lasso, cfg).weights[0] < 2.0);
}

TEST_CASE("small instance against a grid search") {
    std::mt19937 gen(31);
    const std::size_t n = 40, m = 6;
    const auto x = dense(n, m, gen);
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) y[i] = 3.0 * x.value(i, 1) + 1.5 * x.value(i, 4);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (auto& v : y) v += noise(gen);

    FitConfig cfg;
    cfg.lambda = 0.3;
    cfg.gamma = 3;
    cfg.max_iter = 5000;
    cfg.tol = 1e-12;
    const auto fit = fit_penalized(x, y, Penalty::Mcp, cfg);
    check_monotone(fit);
    // Non-convex: the fixed point need not be the true support, but it must
    // minimize over its own support and be coordinate-wise minimal.
    REQUIRE(fit.support.size() == 2);
    const std::size_t ia = fit.support[0], ib = fit.support[1];

    // Zooming grid over the two active coordinates.
    auto obj = [&](double a, double b) {
        std::vector<double> w(m, 0.0);
        w[ia] = a;
        w[ib] = b;
        return objective(x, y, w, Penalty::Mcp, cfg.lambda, cfg.gamma);
    };
    double ca = 3, cb = 3, width = 6;
    double best = obj(ca, cb);
    for (int level = 0; level < 30; ++level) {
        double ba = ca, bb = cb;
        for (int i = -20; i <= 20; ++i) {
            for (int k = -20; k <= 20; ++k) {
                const double a = std::max(0.0, ca + width * i / 20.0);
                const double b = std::max(0.0, cb + width * k / 20.0);
                const double v = obj(a, b);
                if (v < best) {
                    best = v;
                    ba = a;
                    bb = b;
                }
            }
        }
        ca = ba;
        cb = bb;
        width /= 4;
    }
    for (std::size_t j = 0; j < m; ++j) {
        for (int step = 0; step <= 2000; ++step) {
            auto w = fit.weights;
            w[j] = step * 0.0025;
            CHECK(objective(x, y, w, Penalty::Mcp, cfg.lambda, cfg.gamma) >= fit.objective_trace.back() - 1e-12);
        }
    }
    CHECK(fit.objective_trace.back() == doctest::Approx(best).epsilon(1e-6));
    CHECK(fit.objective_trace.back() <= best + 1e-9);
}

TEST_CASE("objective never increases across sweeps") {
    std::mt19937 gen(41);
    for (int trial = 0; trial < 20; ++trial) {
        trace::ToggleMatrix t(300, 30);
        for (std::size_t i = 0; i < 300; ++i) {
            const bool common = gen() % 4 == 0;
            for (std::size_t j = 0; j < 30; ++j) t.set(i, j, common ? gen() % 2 == 0 : gen() % 6 == 0);
        }
        const auto x = DesignMatrix::from_toggles(t);
        std::vector<double> y(300);
        for (std::size_t i = 0; i < 300; ++i) y[i] = 2 * t.get(i, 3) + 5 * t.get(i, 17) + t.get(i, 20) + 0.1 * (gen() % 10);
        FitConfig cfg;
        cfg.lambda = lambda_max(x, y) * (0.01 + 0.02 * trial);
        for (const auto pen : {Penalty::Mcp, Penalty::Lasso}) {
            const auto f = fit_penalized(x, y, pen, cfg);
            CHECK(f.n_iter == static_cast<int>(f.objective_trace.size()));
            check_monotone(f);
        }
    }
}

TEST_CASE("lambda = 0 gives least squares for both penalties") {
    std::mt19937 gen(5);
    const auto x = dense(60, 4, gen);
    std::vector<double> y(60);
    for (std::size_t i = 0; i < 60; ++i) y[i] = x.value(i, 0) + 2 * x.value(i, 2) + 0.5 * x.value(i, 3);
    FitConfig cfg;
    cfg.lambda = 0;
    cfg.max_iter = 20000;
    cfg.tol = 1e-12;
    const auto a = fit_penalized(x, y, Penalty::Mcp, cfg);
    const auto b = fit_penalized(x, y, Penalty::Lasso, cfg);
    const auto r = fit_ridge(x, y, 0.0, true);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(a.weights[j] == doctest::Approx(b.weights[j]).epsilon(1e-8));
        CHECK(a.weights[j] == doctest::Approx(r[j]).epsilon(1e-6));
    }
    CHECK(a.support.size() == 3);
}

TEST_CASE("lambda_max zeroes every weight") {
    std::mt19937 gen(8);
    const auto x = dense(50, 10, gen);
    std::vector<double> y(50);
    for (auto& v : y) v = static_cast<double>(gen() % 50);
    FitConfig cfg;
    cfg.lambda = lambda_max(x, y);
    CHECK(fit_penalized(x, y, Penalty::Lasso, cfg).support.empty());
    CHECK(fit_penalized(x, y, Penalty::Mcp, cfg).support.empty());
    cfg.lambda *= 0.9;
    CHECK_FALSE(fit_penalized(x, y, Penalty::Lasso, cfg).support.empty());
}

TEST_CASE("lasso support shrinks with lambda on an orthogonal design") {
    // Each cycle toggles one column: orthogonal columns.
    trace::ToggleMatrix t(60, 6);
    std::vector<double> y(60);
    for (std::size_t i = 0; i < 60; ++i) {
        t.set(i, i % 6, true);
        y[i] = 1.0 + static_cast<double>(i % 6) * 2 + 0.1 * static_cast<double>(i % 5);
    }
    const auto x = DesignMatrix::from_toggles(t);
    std::size_t prev = 7;
    for (double f = 0.01; f < 1.0; f *= 1.5) {
        FitConfig cfg;
        cfg.lambda = lambda_max(x, y) * f;
        const auto s = fit_penalized(x, y, Penalty::Lasso, cfg).support.size();
        CHECK(s <= prev);
        prev = s;
    }
}

TEST_CASE("ridge closed forms") {
    // Orthonormal columns.
    const auto q = DesignMatrix::from_dense(4, 2, {0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5});
    const std::vector<double> y{1, 2, 3, 4};
    const auto w = fit_ridge(q, y, 0.0, false);
    CHECK(w[0] == doctest::Approx(0.5 * (1 + 2 + 3 + 4)));
    CHECK(w[1] == doctest::Approx(0.5 * (1 - 2 + 3 - 4)));
    // Nonnegativity: the negative OLS weight is projected.
    CHECK(fit_ridge(q, y, 0.0, true)[1] == 0.0);

    // Identity-like: cycle i toggles proxy i only, so G = I and w_j = y_j / (1 + N lambda).
    trace::ToggleMatrix t(5, 5);
    for (std::size_t i = 0; i < 5; ++i) t.set(i, i, true);
    const auto x = DesignMatrix::from_toggles(t);
    const std::vector<double> yy{1, 2, 3, 4, 5};
    const double lr = 0.3;
    const auto wr = fit_ridge(x, yy, lr, true);
    for (std::size_t j = 0; j < 5; ++j) CHECK(wr[j] == doctest::Approx(yy[j] / (1 + 5 * lr)).epsilon(1e-14));

    const auto big = fit_ridge(x, yy, 1e12, true);
    for (const auto v : big) CHECK(v < 1e-10);

    CHECK_THROWS_AS(fit_ridge(DesignMatrix::from_dense(5, 0, {}), yy, 0.1, true), ParameterError);
}

TEST_CASE("input validation") {
    const auto x = DesignMatrix::from_dense(2, 1, {1, 1});
    FitConfig cfg;
    CHECK_THROWS_AS(fit_penalized(x, std::vector<double>{1, std::nan("")}, Penalty::Mcp, cfg), DataError);
    CHECK_THROWS_AS(fit_penalized(x, std::vector<double>{1, 2, 3}, Penalty::Mcp, cfg), DataError);
    cfg.gamma = 1.0;
    CHECK_THROWS_AS(fit_penalized(x, std::vector<double>{1, 2}, Penalty::Mcp, cfg), ParameterError);
    cfg.gamma = 3;
    cfg.tol = 0;
    CHECK_THROWS_AS(fit_penalized(x, std::vector<double>{1, 2}, Penalty::Mcp, cfg), ParameterError);

    // Non-convergence is reported, not thrown.
    std::mt19937 gen(3);
    const auto d = dense(30, 8, gen);
    std::vector<double> y(30, 1.0);
    FitConfig one;
    one.max_iter = 1;
    one.lambda = 1e-4;
    const auto f = fit_penalized(d, y, Penalty::Mcp, one);
    CHECK(f.n_iter == 1);
    CHECK_FALSE(f.converged);
}

TEST_CASE("lambda search lands on the target") {
    syngen::DesignParams p;
    p.seed = 4;
    const auto design = syngen::gen_design(p);
    const auto t = syngen::gen_workload(design, syngen::default_profile(10000, 1));
    const auto y = syngen::gen_power_labels(design, t, true, 1);
    const auto x = DesignMatrix::from_toggles(t);
    FitConfig base;
    const auto r = lambda_search(x, y, Penalty::Mcp, 50, 5, base);
    CHECK(r.reached);
    CHECK(r.fit.support.size() >= 45);
    CHECK(r.fit.support.size() <= 55);
    CHECK(r.lambda < r.lambda_max);
    check_monotone(r.fit);

    CHECK_THROWS_AS(lambda_search(x, y, Penalty::Mcp, 0, 0, base), ParameterError);
    CHECK_THROWS_AS(lambda_search(x, y, Penalty::Mcp, 2001, 0, base), ParameterError);
}

}  // TEST_SUITE

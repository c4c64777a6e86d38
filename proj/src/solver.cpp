#include "apollo/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "apollo/errors.hpp"

namespace apollo::solver {
namespace {

void require_finite(std::span<const double> v, const char* what) {
    for (const double x : v) {
        if (!std::isfinite(x)) throw DataError(std::string(what) + " contains NaN or Inf");
    }
}

std::vector<std::size_t> all_columns(std::size_t m) {
    std::vector<std::size_t> c(m);
    std::iota(c.begin(), c.end(), 0);
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// DesignMatrix

DesignMatrix DesignMatrix::from_toggles(const trace::ToggleMatrix& toggles, std::span<const std::size_t> columns) {
    const auto cols = columns.empty() ? all_columns(toggles.n_signals()) : std::vector<std::size_t>(columns.begin(), columns.end());
    DesignMatrix x;
    x.storage_ = Storage::Bits;
    x.rows_ = toggles.n_cycles();
    x.cols_ = cols.size();
    x.words_per_col_ = (x.rows_ + 63) / 64;
    x.bits_.assign(x.cols_ * x.words_per_col_, 0);
    for (const auto c : cols) {
        if (c >= toggles.n_signals()) throw DataError("design column index out of range");
    }
    for (std::size_t i = 0; i < x.rows_; ++i) {
        const auto row = toggles.cycle_words(i);
        const std::uint64_t bit = std::uint64_t{1} << (i & 63);
        const std::size_t word = i >> 6;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if ((row[cols[k] >> 6] >> (cols[k] & 63)) & 1U) x.bits_[k * x.words_per_col_ + word] |= bit;
        }
    }
    x.finish();
    return x;
}

DesignMatrix DesignMatrix::interval_means(const trace::ToggleMatrix& toggles, std::size_t tau,
                                          std::span<const std::size_t> columns) {
    if (tau == 0) throw ParameterError("interval length must be >= 1");
    if (tau > std::numeric_limits<std::uint16_t>::max()) throw ParameterError("interval length too large");
    const auto cols = columns.empty() ? all_columns(toggles.n_signals()) : std::vector<std::size_t>(columns.begin(), columns.end());
    for (const auto c : cols) {
        if (c >= toggles.n_signals()) throw DataError("design column index out of range");
    }
    DesignMatrix x;
    x.storage_ = Storage::Counts;
    x.rows_ = toggles.n_cycles() / tau;
    x.cols_ = cols.size();
    x.scale_ = 1.0 / static_cast<double>(tau);
    x.counts_.assign(x.rows_ * x.cols_, 0);
    for (std::size_t i = 0; i < x.rows_ * tau; ++i) {
        const auto row = toggles.cycle_words(i);
        const std::size_t k = i / tau;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if ((row[cols[c] >> 6] >> (cols[c] & 63)) & 1U) ++x.counts_[c * x.rows_ + k];
        }
    }
    x.finish();
    return x;
}

DesignMatrix DesignMatrix::from_dense(std::size_t rows, std::size_t cols, std::vector<double> values) {
    if (values.size() != rows * cols) throw DataError("dense design: value count differs from rows*cols");
    require_finite(values, "design matrix");
    DesignMatrix x;
    x.storage_ = Storage::Dense;
    x.rows_ = rows;
    x.cols_ = cols;
    x.dense_ = std::move(values);
    x.finish();
    return x;
}

void DesignMatrix::finish() {
    sq_norm_.resize(cols_);
    for (std::size_t j = 0; j < cols_; ++j) sq_norm_[j] = gram(j, j);
}

double DesignMatrix::value(std::size_t row, std::size_t col) const {
    switch (storage_) {
        case Storage::Bits:
            return static_cast<double>((bits_[col * words_per_col_ + (row >> 6)] >> (row & 63)) & 1U);
        case Storage::Counts: return counts_[col * rows_ + row] * scale_;
        case Storage::Dense: return dense_[col * rows_ + row];
    }
    return 0.0;
}

double DesignMatrix::dot(std::size_t col, std::span<const double> v) const {
    double acc = 0.0;
    switch (storage_) {
        case Storage::Bits: {
            const auto* w = bits_.data() + col * words_per_col_;
            for (std::size_t k = 0; k < words_per_col_; ++k) {
                for (std::uint64_t word = w[k]; word; word &= word - 1) {
                    acc += v[k * 64 + static_cast<std::size_t>(std::countr_zero(word))];
                }
            }
            return acc;
        }
        case Storage::Counts: {
            const auto* c = counts_.data() + col * rows_;
            for (std::size_t i = 0; i < rows_; ++i) {
                if (c[i]) acc += c[i] * v[i];
            }
            return acc * scale_;
        }
        case Storage::Dense: {
            const auto* d = dense_.data() + col * rows_;
            for (std::size_t i = 0; i < rows_; ++i) acc += d[i] * v[i];
            return acc;
        }
    }
    return acc;
}

double DesignMatrix::gram(std::size_t a, std::size_t b) const {
    switch (storage_) {
        case Storage::Bits: {
            const auto* wa = bits_.data() + a * words_per_col_;
            const auto* wb = bits_.data() + b * words_per_col_;
            std::uint64_t n = 0;
            for (std::size_t k = 0; k < words_per_col_; ++k) n += static_cast<std::uint64_t>(std::popcount(wa[k] & wb[k]));
            return static_cast<double>(n);
        }
        case Storage::Counts: {
            const auto* ca = counts_.data() + a * rows_;
            const auto* cb = counts_.data() + b * rows_;
            std::uint64_t n = 0;
            for (std::size_t i = 0; i < rows_; ++i) n += static_cast<std::uint64_t>(ca[i]) * cb[i];
            return static_cast<double>(n) * scale_ * scale_;
        }
        case Storage::Dense: {
            const auto* da = dense_.data() + a * rows_;
            const auto* db = dense_.data() + b * rows_;
            double acc = 0.0;
            for (std::size_t i = 0; i < rows_; ++i) acc += da[i] * db[i];
            return acc;
        }
    }
    return 0.0;
}

void DesignMatrix::gram_column(std::size_t col, std::span<double> out) const {
    for (std::size_t j = 0; j < cols_; ++j) out[j] = gram(j, col);
}

void DesignMatrix::axpy(std::size_t col, double a, std::span<double> out) const {
    switch (storage_) {
        case Storage::Bits: {
            const auto* w = bits_.data() + col * words_per_col_;
            for (std::size_t k = 0; k < words_per_col_; ++k) {
                for (std::uint64_t word = w[k]; word; word &= word - 1) {
                    out[k * 64 + static_cast<std::size_t>(std::countr_zero(word))] += a;
                }
            }
            return;
        }
        case Storage::Counts: {
            const auto* c = counts_.data() + col * rows_;
            for (std::size_t i = 0; i < rows_; ++i) {
                if (c[i]) out[i] += a * (c[i] * scale_);
            }
            return;
        }
        case Storage::Dense: {
            const auto* d = dense_.data() + col * rows_;
            for (std::size_t i = 0; i < rows_; ++i) out[i] += a * d[i];
            return;
        }
    }
}

std::vector<double> DesignMatrix::multiply(std::span<const double> weights) const {
    if (weights.size() != cols_) throw DataError("multiply: weight count differs from column count");
    std::vector<double> out(rows_, 0.0);
    for (std::size_t j = 0; j < cols_; ++j) {
        if (weights[j] != 0.0) axpy(j, weights[j], out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Penalties and proximal operators

std::string to_string(Penalty p) { return p == Penalty::Mcp ? "mcp" : "lasso"; }

Penalty penalty_from_string(const std::string& name) {
    if (name == "mcp") return Penalty::Mcp;
    if (name == "lasso") return Penalty::Lasso;
    throw ParameterError("unknown penalty '" + name + "' (expected mcp or lasso)");
}

double penalty_lasso(double w, double lambda) { return lambda * std::abs(w); }

double penalty_mcp(double w, double lambda, double gamma) {
    const double a = std::abs(w);
    if (a <= gamma * lambda) return lambda * a - w * w / (2.0 * gamma);
    return 0.5 * gamma * lambda * lambda;
}

double prox_lasso(double z, double lambda, double s, bool nonneg) {
    if (!(s > 0.0)) throw ParameterError("prox_lasso: curvature must be positive");
    const double t = lambda / s;
    double w = 0.0;
    if (z > t) {
        w = z - t;
    } else if (z < -t) {
        w = z + t;
    }
    return nonneg ? std::max(w, 0.0) : w;
}

double prox_mcp(double z, double lambda, double gamma, double s, bool nonneg) {
    if (!(gamma > 1.0)) throw ParameterError("prox_mcp: gamma must be > 1");
    if (!(s > 0.0)) throw ParameterError("prox_mcp: curvature must be positive");
    if (nonneg && z <= 0.0) return 0.0;
    const double az = std::abs(z);
    const double sign = z < 0.0 ? -1.0 : 1.0;
    const double knee = gamma * lambda;

    if (s * gamma > 1.0) {
        if (az <= lambda / s) return 0.0;
        if (az <= knee) return sign * (az - lambda / s) / (1.0 - 1.0 / (s * gamma));
        return z;
    }

    auto f = [&](double w) { return 0.5 * s * (w - z) * (w - z) + penalty_mcp(w, lambda, gamma); };
    double best = 0.0;
    double best_val = f(0.0);
    auto consider = [&](double w) {
        const double v = f(w);
        if (v < best_val) {
            best = w;
            best_val = v;
        }
    };
    consider(sign * knee);
    if (az > knee) consider(z);
    if (s * gamma < 1.0) {
        const double interior = (az - lambda / s) / (1.0 - 1.0 / (s * gamma));
        if (interior > 0.0 && interior <= knee) consider(sign * interior);
    }
    return best;
}

double objective(const DesignMatrix& x, std::span<const double> y, std::span<const double> weights, Penalty penalty,
                 double lambda, double gamma) {
    const auto p = x.multiply(weights);
    double rss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) rss += (y[i] - p[i]) * (y[i] - p[i]);
    double pen = 0.0;
    for (const double w : weights) {
        if (w != 0.0) pen += penalty == Penalty::Mcp ? penalty_mcp(w, lambda, gamma) : penalty_lasso(w, lambda);
    }
    return rss / static_cast<double>(y.size()) + pen;
}

// ---------------------------------------------------------------------------
// Coordinate descent

namespace {

class GramCache {
public:
    explicit GramCache(const DesignMatrix& x) : x_(x), cols_(x.cols()) {}

    std::span<const double> column(std::size_t j) {
        auto& c = cols_[j];
        if (c.empty()) {
            c.resize(x_.cols());
            x_.gram_column(j, c);
        }
        return c;
    }

private:
    const DesignMatrix& x_;
    std::vector<std::vector<double>> cols_;
};

void check_inputs(const DesignMatrix& x, std::span<const double> y) {
    if (x.rows() != y.size()) {
        throw DataError("design has " + std::to_string(x.rows()) + " rows but labels have " +
                        std::to_string(y.size()) + " entries");
    }
    if (y.empty()) throw DataError("need at least one row to fit");
    require_finite(y, "labels");
}

}  // namespace

FitResult fit_penalized(const DesignMatrix& x, std::span<const double> y, Penalty penalty, const FitConfig& cfg,
                        std::span<const double> warm_start) {
    check_inputs(x, y);
    if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ParameterError("lambda must be finite and >= 0");
    if (penalty == Penalty::Mcp && !(cfg.gamma > 1.0)) throw ParameterError("gamma must be > 1");
    if (!(cfg.tol > 0.0)) throw ParameterError("tol must be > 0");
    if (cfg.max_iter < 1) throw ParameterError("max_iter must be >= 1");

    const std::size_t m = x.cols();
    const double n = static_cast<double>(x.rows());
    FitResult res;
    res.weights.assign(m, 0.0);
    if (!warm_start.empty()) {
        if (warm_start.size() != m) throw ParameterError("warm start has the wrong length");
        std::copy(warm_start.begin(), warm_start.end(), res.weights.begin());
        require_finite(res.weights, "warm start");
        if (cfg.nonneg) {
            for (auto& w : res.weights) w = std::max(w, 0.0);
        }
    }
    auto& w = res.weights;

    GramCache gram(x);
    std::vector<double> xty(m);
    for (std::size_t j = 0; j < m; ++j) xty[j] = x.dot(j, y);

    // corr[j] = x_j' r, r = y - X w
    std::vector<double> corr(m);
    auto refresh_corr = [&] {
        corr = xty;
        for (std::size_t k = 0; k < m; ++k) {
            if (w[k] == 0.0) continue;
            const auto g = gram.column(k);
            for (std::size_t j = 0; j < m; ++j) corr[j] -= w[k] * g[j];
        }
    };

    auto prox = [&](double z, double s) {
        return penalty == Penalty::Mcp ? prox_mcp(z, cfg.lambda, cfg.gamma, s, cfg.nonneg)
                                       : prox_lasso(z, cfg.lambda, s, cfg.nonneg);
    };

    auto update = [&](std::size_t j) {
        const double nrm = x.sq_norm(j);
        if (nrm <= 0.0) return 0.0;
        const double z = w[j] + corr[j] / nrm;
        const double next = prox(z, 2.0 * nrm / n);
        const double delta = next - w[j];
        if (delta != 0.0) {
            const auto g = gram.column(j);
            for (std::size_t k = 0; k < m; ++k) corr[k] -= delta * g[k];
            w[j] = next;
        }
        return std::abs(delta);
    };

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        // Rebuild x'r from the Gram cache each sweep so rounding cannot drift.
        refresh_corr();
        double max_delta = 0.0;
        for (std::size_t j = 0; j < m; ++j) max_delta = std::max(max_delta, update(j));
        res.n_iter = iter + 1;
        res.objective_trace.push_back(objective(x, y, w, penalty, cfg.lambda, cfg.gamma));

        double max_w = 0.0;
        for (const double v : w) max_w = std::max(max_w, std::abs(v));
        if (max_delta == 0.0 || (max_w > 0.0 && max_delta < cfg.tol * max_w)) {
            res.converged = true;
            break;
        }
    }

    for (std::size_t j = 0; j < m; ++j) {
        if (w[j] != 0.0) res.support.push_back(j);
    }
    return res;
}

std::vector<double> fit_ridge(const DesignMatrix& x, std::span<const double> y, double lambda_ridge, bool nonneg) {
    check_inputs(x, y);
    const std::size_t q = x.cols();
    if (q == 0) throw ParameterError("fit_ridge: empty support");
    if (!(lambda_ridge >= 0.0) || !std::isfinite(lambda_ridge)) throw ParameterError("fit_ridge: lambda must be finite and >= 0");
    const double n = static_cast<double>(x.rows());

    // Normal equations of (1/N)||y - Xw||^2 + lambda ||w||^2: (G + N lambda I) w = X'y.
    Eigen::MatrixXd a(q, q);
    Eigen::VectorXd b(q);
    for (std::size_t j = 0; j < q; ++j) {
        b(static_cast<Eigen::Index>(j)) = x.dot(j, y);
        for (std::size_t k = 0; k <= j; ++k) {
            const double g = x.gram(j, k);
            a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = g;
            a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = g;
        }
    }
    a.diagonal().array() += n * lambda_ridge;

    Eigen::VectorXd sol = a.ldlt().solve(b);
    std::vector<double> w(q, 0.0);
    bool usable = sol.allFinite();
    for (std::size_t j = 0; usable && j < q; ++j) w[j] = sol(static_cast<Eigen::Index>(j));
    if (!usable) std::fill(w.begin(), w.end(), 0.0);

    const bool feasible = usable && std::all_of(w.begin(), w.end(), [](double v) { return v >= 0.0; });
    if (!nonneg || feasible) {
        if (usable) return w;
    }

    // Projected coordinate descent on the same quadratic.
    for (auto& v : w) v = std::max(v, 0.0);
    Eigen::VectorXd wv(q);
    for (std::size_t j = 0; j < q; ++j) wv(static_cast<Eigen::Index>(j)) = w[j];
    Eigen::VectorXd grad = b - a * wv;  // b - A w
    constexpr int kMaxSweeps = 100000;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double max_delta = 0.0;
        double max_w = 0.0;
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(q); ++j) {
            const double ajj = a(j, j);
            if (ajj <= 0.0) continue;
            double next = wv(j) + grad(j) / ajj;
            if (nonneg) next = std::max(next, 0.0);
            const double delta = next - wv(j);
            if (delta != 0.0) {
                grad -= delta * a.col(j);
                wv(j) = next;
            }
            max_delta = std::max(max_delta, std::abs(delta));
            max_w = std::max(max_w, std::abs(next));
        }
        if (max_delta <= 1e-14 * std::max(max_w, 1e-300)) break;
    }
    for (std::size_t j = 0; j < q; ++j) w[j] = wv(static_cast<Eigen::Index>(j));
    return w;
}

double lambda_max(const DesignMatrix& x, std::span<const double> y) {
    check_inputs(x, y);
    double best = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) best = std::max(best, std::abs(x.dot(j, y)));
    return 2.0 * best / static_cast<double>(x.rows());
}

SearchResult lambda_search(const DesignMatrix& x, std::span<const double> y, Penalty penalty, std::size_t target_q,
                           std::size_t slack, const FitConfig& base, int max_probes) {
    if (target_q == 0 || target_q > x.cols()) {
        throw ParameterError("target proxy count " + std::to_string(target_q) + " outside [1, " +
                             std::to_string(x.cols()) + "]");
    }
    if (max_probes < 1) throw ParameterError("lambda_search: max_probes must be >= 1");
    const std::size_t lo_target = target_q > slack ? target_q - slack : 0;
    const std::size_t hi_target = target_q + slack;
    auto within = [&](const FitResult& f) {
        return f.support.size() >= lo_target && f.support.size() <= hi_target;
    };
    auto gap = [&](const FitResult& f) {
        const auto s = f.support.size();
        return s > target_q ? s - target_q : target_q - s;
    };

    SearchResult out;
    out.lambda_max = lambda_max(x, y);
    bool have_best = false;
    auto probe = [&](double lambda, std::span<const double> warm) {
        FitConfig cfg = base;
        cfg.lambda = lambda;
        auto fit = fit_penalized(x, y, penalty, cfg, warm);
        ++out.probes;
        if (!have_best || gap(fit) < gap(out.fit)) {
            out.fit = fit;
            out.lambda = lambda;
            have_best = true;
        }
        return fit;
    };
    auto done = [&](const FitResult& f, double lambda) {
        out.fit = f;
        out.lambda = lambda;
        out.reached = true;
        return out;
    };

    if (out.lambda_max == 0.0) {
        auto f = probe(0.0, {});
        if (within(f)) return done(f, 0.0);
        return out;
    }

    // Upper bracket: sparse enough.
    double hi = out.lambda_max;
    FitResult fit_hi = probe(hi, {});
    while (fit_hi.support.size() > hi_target && out.probes < max_probes) {
        hi *= 2.0;
        fit_hi = probe(hi, {});
    }
    if (within(fit_hi)) return done(fit_hi, hi);
    if (fit_hi.support.size() > hi_target) return out;

    // Lower bracket: dense enough.
    double lo = hi * 1e-2;
    FitResult fit_lo = probe(lo, fit_hi.weights);
    while (fit_lo.support.size() < lo_target && out.probes < max_probes && lo > out.lambda_max * 1e-12) {
        lo *= 1e-2;
        fit_lo = probe(lo, fit_hi.weights);
    }
    if (within(fit_lo)) return done(fit_lo, lo);
    if (fit_lo.support.size() < lo_target) return out;

    // Warm-start from the denser bracket: its support already contains most of what the
    // midpoint keeps, so the sweep mostly prunes instead of discovering.
    while (out.probes < max_probes && hi / lo > 1.0 + 1e-6) {
        const double mid = std::sqrt(lo * hi);
        auto f = probe(mid, fit_lo.weights);
        if (within(f)) return done(f, mid);
        if (f.support.size() > hi_target) {
            lo = mid;
            fit_lo = std::move(f);
        } else {
            hi = mid;
            fit_hi = std::move(f);
        }
    }

    // Support size jumped over the target between two adjacent lambdas (several
    // coordinates enter together). Keep the target_q largest weights of the
    // denser fit; ties go to the lower index.
    if (fit_lo.support.size() > target_q) {
        auto order = fit_lo.support;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(fit_lo.weights[a]) > std::abs(fit_lo.weights[b]);
        });
        order.resize(target_q);
        std::sort(order.begin(), order.end());
        std::vector<double> kept(fit_lo.weights.size(), 0.0);
        for (const auto j : order) kept[j] = fit_lo.weights[j];
        fit_lo.weights = std::move(kept);
        fit_lo.support = std::move(order);
        out.fit = std::move(fit_lo);
        out.lambda = lo;
        out.trimmed = true;
    }
    return out;
}

std::string fit_to_json(const FitResult& fit) {
    nlohmann::json j;
    j["weights"] = fit.weights;
    j["support"] = fit.support;
    j["n_iter"] = fit.n_iter;
    j["converged"] = fit.converged;
    j["objective_trace"] = fit.objective_trace;
    return j.dump(2) + "\n";
}

}  // namespace apollo::solver

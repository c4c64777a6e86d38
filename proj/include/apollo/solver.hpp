#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apollo/trace.hpp"

namespace apollo::solver {

/// Column-oriented N x M regression design. Three storages:
///  - bits:   binary toggle columns, packed 64 rows per word
///  - counts: small integer columns times a common scale (interval means
///            stored as toggle sums times 1/tau)
///  - dense:  arbitrary finite reals
/// Gram entries are exact for bits and counts (integer arithmetic).
class DesignMatrix {
public:
    DesignMatrix() = default;

    /// Binary design from toggle columns; all columns when `columns` is empty.
    static DesignMatrix from_toggles(const trace::ToggleMatrix& toggles, std::span<const std::size_t> columns = {});
    /// Interval means: row k of column j is (1/tau) * toggles of signal j in
    /// cycles [k*tau, (k+1)*tau). Trailing cycles that do not fill an interval
    /// are dropped.
    static DesignMatrix interval_means(const trace::ToggleMatrix& toggles, std::size_t tau,
                                       std::span<const std::size_t> columns = {});
    /// Column-major dense values.
    static DesignMatrix from_dense(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double value(std::size_t row, std::size_t col) const;
    double dot(std::size_t col, std::span<const double> v) const;
    double sq_norm(std::size_t col) const { return sq_norm_.at(col); }
    double gram(std::size_t a, std::size_t b) const;
    void gram_column(std::size_t col, std::span<double> out) const;
    /// out += a * column
    void axpy(std::size_t col, double a, std::span<double> out) const;

    /// X w for a full-length weight vector.
    std::vector<double> multiply(std::span<const double> weights) const;

private:
    enum class Storage { Bits, Counts, Dense };

    void finish();

    Storage storage_ = Storage::Dense;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t words_per_col_ = 0;
    std::vector<std::uint64_t> bits_;
    std::vector<std::uint16_t> counts_;
    std::vector<double> dense_;
    double scale_ = 1.0;
    std::vector<double> sq_norm_;
};

enum class Penalty { Mcp, Lasso };

std::string to_string(Penalty p);
Penalty penalty_from_string(const std::string& name);

struct FitConfig {
    double lambda = 0.0;
    double gamma = 10.0;
    int max_iter = 200;
    double tol = 1e-6;
    bool nonneg = true;
};

struct FitResult {
    std::vector<double> weights;
    std::vector<std::size_t> support;
    int n_iter = 0;
    bool converged = false;
    /// Penalized loss after every coordinate sweep.
    std::vector<double> objective_trace;
};

double penalty_lasso(double w, double lambda);
double penalty_mcp(double w, double lambda, double gamma);

/// argmin_w  s/2 (w - z)^2 + lambda |w|, projected to w >= 0 when `nonneg`.
double prox_lasso(double z, double lambda, double s, bool nonneg = false);

/// argmin_w  s/2 (w - z)^2 + P_MCP(w; lambda, gamma), projected to w >= 0
/// when `nonneg`. When s*gamma <= 1 the scalar problem is not convex and the
/// closed-form candidates (0, the boundary +-gamma*lambda, z in the flat
/// region, the interior stationary point) are compared directly.
/// Throws ParameterError for gamma <= 1 or s <= 0.
double prox_mcp(double z, double lambda, double gamma, double s, bool nonneg = false);

/// (1/N) ||y - X w||^2 + sum_j P(w_j), evaluated from the residual.
double objective(const DesignMatrix& x, std::span<const double> y, std::span<const double> weights, Penalty penalty,
                 double lambda, double gamma);

/// Cyclic coordinate descent on (1/N)||y - Xw||^2 + sum_j P(w_j).
///
/// Per coordinate: s_j = 2||x_j||^2/N, z_j = w_j + x_j'r/||x_j||^2, then the
/// matching prox. Inner products x_j'r are kept up to date through lazily
/// cached Gram columns, so a sweep costs O(M) plus O(M) per nonzero change.
/// Every sweep visits all M coordinates in index order; convergence is
/// declared when the largest weight change of a sweep is below tol relative to
/// the largest weight. Not converging is reported, not thrown.
FitResult fit_penalized(const DesignMatrix& x, std::span<const double> y, Penalty penalty, const FitConfig& cfg,
                        std::span<const double> warm_start = {});

/// Ridge refit: argmin (1/N)||y - Xw||^2 + lambda_ridge ||w||^2, with w >= 0
/// when `nonneg`. Solved by Cholesky (LDLT) on the Gram system; if the
/// unconstrained solution has negative entries, projected coordinate descent
/// from its clamped value finishes the job.
std::vector<double> fit_ridge(const DesignMatrix& x, std::span<const double> y, double lambda_ridge,
                              bool nonneg = true);

/// Smallest lambda at which w = 0 is a fixed point of every Lasso (and convex
/// MCP) coordinate update: max_j (2/N)|x_j'y|.
double lambda_max(const DesignMatrix& x, std::span<const double> y);

struct SearchResult {
    double lambda = 0.0;
    FitResult fit;
    /// |support| landed inside [target - slack, target + slack].
    bool reached = false;
    /// The bisection could not land on target_q exactly, so the denser bracket
    /// was cut down to its target_q largest weights.
    bool trimmed = false;
    int probes = 0;
    double lambda_max = 0.0;
};

/// Bisection on log(lambda) until the support size is within `slack` of
/// `target_q`. Each probe warm-starts from the fit at the current lower
/// (denser) bracket. If the brackets collapse or `max_probes` runs out, the
/// denser bracket is trimmed to target_q (trimmed = true); failing that, the
/// probe whose support size is closest to the target is returned. reached is
/// false in both cases.
SearchResult lambda_search(const DesignMatrix& x, std::span<const double> y, Penalty penalty, std::size_t target_q,
                           std::size_t slack, const FitConfig& base, int max_probes = 60);

std::string fit_to_json(const FitResult& fit);

}  // namespace apollo::solver

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apollo/metrics.hpp"
#include "apollo/solver.hpp"
#include "apollo/trace.hpp"

namespace apollo::model {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct DroppedSignal {
    std::size_t index = 0;
    std::string reason;  // "never toggles", "toggles every cycle", "duplicate"
    std::optional<std::size_t> duplicate_of;
};

struct ScreenReport {
    std::vector<std::size_t> kept;
    std::vector<DroppedSignal> dropped;
};

/// Drop columns that never toggle, toggle every cycle, or exactly repeat a
/// lower-indexed column.
ScreenReport screen_signals(const trace::ToggleMatrix& toggles);

struct SelectConfig {
    std::size_t target_q = 50;
    double gamma = 10.0;
    std::size_t slack = 0;
    int max_iter = 200;
    double tol = 1e-6;
    int max_probes = 60;
    solver::Penalty penalty = solver::Penalty::Mcp;
    /// Interval length; 1 selects on the per-cycle design.
    std::size_t tau = 1;
};

/// Selected proxies S_Q with their temporary (penalized) weights.
struct ProxySet {
    std::vector<std::size_t> indices;  // signal indices, strictly increasing
    std::vector<double> weights;
    double lambda = 0.0;
    bool target_reached = false;
    bool trimmed = false;
    int probes = 0;
    int n_iter = 0;
    bool converged = false;
    std::vector<double> objective_trace;
};

struct TrainingMeta {
    std::string penalty = "mcp";
    double lambda = 0.0;
    double lambda_ridge = 0.0;
    double gamma = 10.0;
    double tol = 1e-6;
    int max_iter = 200;
    std::size_t target_q = 0;
    bool target_reached = false;
    bool trimmed = false;
    std::size_t dropped_columns = 0;
    std::size_t dropped_cycles = 0;
};

/// Linear power model over Q proxies. tau == 1 is the per-cycle flavor; a
/// larger tau marks a model trained on tau-cycle interval means, which is
/// still applied to per-cycle toggles at inference.
struct PowerModel {
    std::vector<std::size_t> proxy_indices;
    std::vector<std::string> proxy_names;
    std::vector<double> weights;
    std::size_t tau = 1;
    TrainingMeta meta;

    std::size_t q() const noexcept { return proxy_indices.size(); }
    bool per_cycle() const noexcept { return tau == 1; }
};

/// Regression design for training at interval length tau (bits when tau == 1)
/// and the matching labels (interval means). Trailing cycles that do not
/// fill an interval are dropped.
struct TrainingData {
    solver::DesignMatrix x;
    std::vector<double> y;
    std::size_t dropped_cycles = 0;
};
TrainingData training_data(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels, std::size_t tau,
                           std::span<const std::size_t> columns);

/// MCP (or Lasso) fit over the screened columns with lambda tuned to the
/// target proxy count; the nonzero support becomes S_Q.
ProxySet select_proxies(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels,
                        std::span<const std::size_t> kept, const SelectConfig& cfg);

/// Ridge refit restricted to the proxy set (weights >= 0).
/// lambda_ridge defaults to lambda_select / 100 when negative.
PowerModel relax(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels, const ProxySet& proxies,
                 std::size_t tau = 1, double lambda_ridge = -1.0);

struct TrainConfig {
    SelectConfig select;
    /// Relaxation ridge strength as a fraction of the selection lambda.
    double ridge_ratio = 0.01;
};

struct TrainOutput {
    PowerModel model;
    ProxySet selection;
    ScreenReport screen;
};

/// screen -> select -> relax. Names come from `catalog` when it is non-empty.
TrainOutput train(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels,
                  const trace::SignalCatalog& catalog, const TrainConfig& cfg);

/// Interval model: train on tau-cycle means of toggles and power.
TrainOutput train_multicycle(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels, std::size_t tau,
                             const trace::SignalCatalog& catalog, TrainConfig cfg);

/// p[i] = sum_j w_j x_{S_Q[j]}[i]
trace::PowerTrace predict_per_cycle(const PowerModel& model, const trace::ToggleMatrix& toggles);

struct WindowPrediction {
    std::size_t window = 1;
    std::vector<double> values;
    std::size_t dropped_cycles = 0;
};

/// Mean power over consecutive T-cycle windows, computed as per-cycle
/// predictions averaged over each window (multiplier-free order).
WindowPrediction predict_window(const PowerModel& model, const trace::ToggleMatrix& toggles, std::size_t window);

/// Same quantity computed in the other order: average each proxy's toggles
/// over the window, then apply the weights.
WindowPrediction predict_window_from_means(const PowerModel& model, const trace::ToggleMatrix& toggles,
                                           std::size_t window);

/// Mean of each complete T-cycle window of a series.
std::vector<double> window_means(std::span<const double> series, std::size_t window);

bool is_power_of_two(std::size_t v) noexcept;

struct WindowMetrics {
    std::size_t window = 1;
    metrics::MetricsReport metrics;
    std::size_t dropped_cycles = 0;
};

struct EvalReport {
    metrics::MetricsReport per_cycle;
    std::vector<WindowMetrics> windows;
};

EvalReport evaluate(const PowerModel& model, const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels,
                    const std::vector<std::size_t>& windows);

struct QCandidateResult {
    std::size_t target_q = 0;
    std::size_t achieved_q = 0;
    double validation_nrmse = 0.0;
};

struct ValidationChoice {
    std::size_t best_q = 0;
    std::vector<QCandidateResult> candidates;
};

/// Hold out the trailing `fraction` of cycles, train on the rest for each
/// candidate Q and pick the lowest validation NRMSE (ties: smaller Q).
ValidationChoice choose_q_by_validation(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels,
                                        const std::vector<std::size_t>& candidates, const TrainConfig& cfg,
                                        double fraction, unsigned jobs = 1);

std::string model_to_json(const PowerModel& model);
PowerModel model_from_json(const std::string& text);
std::string eval_to_json(const EvalReport& report);

}  // namespace apollo::model

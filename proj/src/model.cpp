#include "apollo/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <thread>
#include <unordered_map>

#include "apollo/errors.hpp"

namespace apollo::model {

using nlohmann::ordered_json;

bool is_power_of_two(std::size_t v) noexcept { return v != 0 && (v & (v - 1)) == 0; }

ScreenReport screen_signals(const trace::ToggleMatrix& toggles) {
    ScreenReport rep;
    const std::size_t n = toggles.n_cycles();
    const std::size_t m = toggles.n_signals();
    // Bit-pack each column so duplicates can be found by hashing.
    const std::size_t words = (n + 63) / 64;
    std::vector<std::uint64_t> cols(m * words, 0);
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = toggles.cycle_words(i);
        for (std::size_t j = 0; j < m; ++j) {
            if ((row[j >> 6] >> (j & 63)) & 1U) {
                cols[j * words + (i >> 6)] |= std::uint64_t{1} << (i & 63);
                ++counts[j];
            }
        }
    }
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> seen;
    for (std::size_t j = 0; j < m; ++j) {
        if (counts[j] == 0) {
            rep.dropped.push_back({j, "never toggles", std::nullopt});
            continue;
        }
        if (counts[j] == n) {
            rep.dropped.push_back({j, "toggles every cycle", std::nullopt});
            continue;
        }
        const auto* col = cols.data() + j * words;
        std::uint64_t h = 1469598103934665603ULL;
        for (std::size_t k = 0; k < words; ++k) h = (h ^ col[k]) * 1099511628211ULL;
        auto& bucket = seen[h];
        std::optional<std::size_t> dup;
        for (const auto other : bucket) {
            if (std::equal(col, col + words, cols.data() + other * words)) {
                dup = other;
                break;
            }
        }
        if (dup) {
            rep.dropped.push_back({j, "duplicate", dup});
        } else {
            bucket.push_back(j);
            rep.kept.push_back(j);
        }
    }
    return rep;
}

TrainingData training_data(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels, std::size_t tau,
                           std::span<const std::size_t> columns) {
    if (labels.size() != toggles.n_cycles()) {
        throw DataError("labels have " + std::to_string(labels.size()) + " cycles, toggles have " +
                        std::to_string(toggles.n_cycles()));
    }
    if (tau == 0) throw ParameterError("tau must be >= 1");
    if (tau > toggles.n_cycles()) {
        throw ParameterError("tau=" + std::to_string(tau) + " exceeds the trace length " +
                             std::to_string(toggles.n_cycles()));
    }
    TrainingData d;
    if (tau == 1) {
        d.x = solver::DesignMatrix::from_toggles(toggles, columns);
        d.y = labels;
        return d;
    }
    d.x = solver::DesignMatrix::interval_means(toggles, tau, columns);
    const std::size_t rows = toggles.n_cycles() / tau;
    d.dropped_cycles = toggles.n_cycles() - rows * tau;
    d.y.resize(rows);
    for (std::size_t k = 0; k < rows; ++k) {
        double s = 0.0;
        for (std::size_t i = k * tau; i < (k + 1) * tau; ++i) s += labels[i];
        d.y[k] = s / static_cast<double>(tau);
    }
    return d;
}

ProxySet select_proxies(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels,
                        std::span<const std::size_t> kept, const SelectConfig& cfg) {
    if (kept.empty()) throw DataError("no usable signals left after screening");
    if (cfg.target_q == 0 || cfg.target_q > kept.size()) {
        throw ParameterError("target Q=" + std::to_string(cfg.target_q) + " outside [1, " +
                             std::to_string(kept.size()) + "] usable signals");
    }
    const auto data = training_data(toggles, labels, cfg.tau, kept);
    solver::FitConfig fc;
    fc.gamma = cfg.gamma;
    fc.max_iter = cfg.max_iter;
    fc.tol = cfg.tol;
    fc.nonneg = true;
    const auto search = solver::lambda_search(data.x, data.y, cfg.penalty, cfg.target_q, cfg.slack, fc, cfg.max_probes);

    ProxySet ps;
    ps.lambda = search.lambda;
    ps.target_reached = search.reached;
    ps.trimmed = search.trimmed;
    ps.probes = search.probes;
    ps.n_iter = search.fit.n_iter;
    ps.converged = search.fit.converged;
    ps.objective_trace = search.fit.objective_trace;
    for (const auto k : search.fit.support) {
        ps.indices.push_back(kept[k]);
        ps.weights.push_back(search.fit.weights[k]);
    }
    return ps;
}

PowerModel relax(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels, const ProxySet& proxies,
                 std::size_t tau, double lambda_ridge) {
    if (proxies.indices.empty()) throw ParameterError("relax: empty proxy set");
    const auto data = training_data(toggles, labels, tau, proxies.indices);
    const double lr = lambda_ridge < 0.0 ? proxies.lambda / 100.0 : lambda_ridge;
    PowerModel m;
    m.proxy_indices = proxies.indices;
    m.weights = solver::fit_ridge(data.x, data.y, lr, true);
    m.tau = tau;
    m.meta.lambda = proxies.lambda;
    m.meta.lambda_ridge = lr;
    m.meta.dropped_cycles = data.dropped_cycles;
    m.meta.target_reached = proxies.target_reached;
    m.meta.trimmed = proxies.trimmed;
    return m;
}

TrainOutput train(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels,
                  const trace::SignalCatalog& catalog, const TrainConfig& cfg) {
    if (!catalog.empty() && catalog.size() != toggles.n_signals()) {
        throw DataError("catalog size differs from toggle matrix width");
    }
    TrainOutput out;
    out.screen = screen_signals(toggles);
    out.selection = select_proxies(toggles, labels, out.screen.kept, cfg.select);
    if (out.selection.indices.empty()) throw DataError("proxy selection returned an empty set");
    out.model = relax(toggles, labels, out.selection, cfg.select.tau, out.selection.lambda * cfg.ridge_ratio);

    auto& meta = out.model.meta;
    meta.penalty = solver::to_string(cfg.select.penalty);
    meta.gamma = cfg.select.gamma;
    meta.tol = cfg.select.tol;
    meta.max_iter = cfg.select.max_iter;
    meta.target_q = cfg.select.target_q;
    meta.dropped_columns = out.screen.dropped.size();
    for (const auto j : out.model.proxy_indices) {
        out.model.proxy_names.push_back(catalog.empty() ? "s" + std::to_string(j) : catalog[j].name);
    }
    return out;
}

TrainOutput train_multicycle(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels, std::size_t tau,
                             const trace::SignalCatalog& catalog, TrainConfig cfg) {
    if (tau == 0) throw ParameterError("tau must be >= 1");
    if (tau > toggles.n_cycles()) throw ParameterError("tau exceeds the trace length");
    cfg.select.tau = tau;
    return train(toggles, labels, catalog, cfg);
}

trace::PowerTrace predict_per_cycle(const PowerModel& model, const trace::ToggleMatrix& toggles) {
    if (model.weights.size() != model.proxy_indices.size()) throw DataError("model weight/index count mismatch");
    for (const auto j : model.proxy_indices) {
        if (j >= toggles.n_signals()) {
            throw DataError("proxy column " + std::to_string(j) + " missing from a " +
                            std::to_string(toggles.n_signals()) + "-signal trace");
        }
    }
    trace::PowerTrace p(toggles.n_cycles(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto row = toggles.cycle_words(i);
        double acc = 0.0;
        for (std::size_t k = 0; k < model.proxy_indices.size(); ++k) {
            const auto j = model.proxy_indices[k];
            if ((row[j >> 6] >> (j & 63)) & 1U) acc += model.weights[k];
        }
        p[i] = acc;
    }
    return p;
}

std::vector<double> window_means(std::span<const double> series, std::size_t window) {
    if (window == 0) throw ParameterError("window must be >= 1");
    std::vector<double> out(series.size() / window);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = k * window; i < (k + 1) * window; ++i) s += series[i];
        out[k] = s / static_cast<double>(window);
    }
    return out;
}

namespace {

void check_window(std::size_t window) {
    if (!is_power_of_two(window)) {
        throw ParameterError("window T=" + std::to_string(window) + " is not a power of two");
    }
}

}  // namespace

WindowPrediction predict_window(const PowerModel& model, const trace::ToggleMatrix& toggles, std::size_t window) {
    check_window(window);
    const auto p = predict_per_cycle(model, toggles);
    WindowPrediction out;
    out.window = window;
    out.values = window_means(p, window);
    out.dropped_cycles = p.size() - out.values.size() * window;
    return out;
}

WindowPrediction predict_window_from_means(const PowerModel& model, const trace::ToggleMatrix& toggles,
                                           std::size_t window) {
    check_window(window);
    // Interval predictions over tau-cycle means, averaged over the window; a
    // window shorter than tau (or not a multiple of it) is one interval.
    const std::size_t sub = (model.tau <= window && window % model.tau == 0) ? model.tau : window;
    const std::size_t n_windows = toggles.n_cycles() / window;
    const std::size_t per_window = window / sub;
    const auto x = solver::DesignMatrix::interval_means(toggles.slice_cycles(0, n_windows * window), sub,
                                                        model.proxy_indices);
    const auto interval_pred = x.multiply(model.weights);
    WindowPrediction out;
    out.window = window;
    out.values.resize(n_windows);
    for (std::size_t k = 0; k < n_windows; ++k) {
        double s = 0.0;
        for (std::size_t u = k * per_window; u < (k + 1) * per_window; ++u) s += interval_pred[u];
        out.values[k] = s / static_cast<double>(per_window);
    }
    out.dropped_cycles = toggles.n_cycles() - n_windows * window;
    return out;
}

EvalReport evaluate(const PowerModel& model, const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels,
                    const std::vector<std::size_t>& windows) {
    if (labels.size() != toggles.n_cycles()) throw DataError("labels and toggles differ in cycle count");
    for (const auto t : windows) check_window(t);
    EvalReport rep;
    const auto p = predict_per_cycle(model, toggles);
    rep.per_cycle = metrics::report(labels, p);
    for (const auto t : windows) {
        WindowMetrics wm;
        wm.window = t;
        const auto yt = window_means(labels, t);
        const auto pt = window_means(p, t);
        wm.metrics = metrics::report(yt, pt);
        wm.dropped_cycles = labels.size() - yt.size() * t;
        rep.windows.push_back(wm);
    }
    return rep;
}

ValidationChoice choose_q_by_validation(const trace::ToggleMatrix& toggles, const trace::PowerTrace& labels,
                                        const std::vector<std::size_t>& candidates, const TrainConfig& cfg,
                                        double fraction, unsigned jobs) {
    if (candidates.empty()) throw ParameterError("no Q candidates given");
    if (!(fraction > 0.0 && fraction < 1.0)) throw ParameterError("validation fraction must lie in (0,1)");
    if (labels.size() != toggles.n_cycles()) throw DataError("labels and toggles differ in cycle count");
    const std::size_t n = toggles.n_cycles();
    const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    const std::size_t n_train = n - n_val;
    if (n_val < 2 || n_train < 2) throw ParameterError("trace too short for a validation split");

    const auto train_x = toggles.slice_cycles(0, n_train);
    const trace::PowerTrace train_y(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_train));
    const auto val_x = toggles.slice_cycles(n_train, n_val);
    const trace::PowerTrace val_y(labels.begin() + static_cast<std::ptrdiff_t>(n_train), labels.end());

    ValidationChoice choice;
    choice.candidates.resize(candidates.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(candidates.size());
    auto work = [&] {
        for (std::size_t k = next++; k < candidates.size(); k = next++) {
            try {
                TrainConfig c = cfg;
                c.select.target_q = candidates[k];
                const auto out = train(train_x, train_y, trace::SignalCatalog{}, c);
                choice.candidates[k] = {candidates[k], out.model.q(),
                                        metrics::nrmse(val_y, predict_per_cycle(out.model, val_x))};
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const unsigned n_threads = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(candidates.size())));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(work);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < choice.candidates.size(); ++k) {
        const auto& a = choice.candidates[k];
        const auto& b = choice.candidates[best];
        if (a.validation_nrmse < b.validation_nrmse ||
            (a.validation_nrmse == b.validation_nrmse && a.target_q < b.target_q)) {
            best = k;
        }
    }
    choice.best_q = choice.candidates[best].target_q;
    return choice;
}

std::string model_to_json(const PowerModel& m) {
    ordered_json j;
    j["toolkit"] = "apollo";
    j["version"] = kToolkitVersion;
    j["flavor"] = m.per_cycle() ? "per_cycle" : "interval";
    j["tau"] = m.tau;
    j["q"] = m.q();
    auto proxies = ordered_json::array();
    for (std::size_t k = 0; k < m.q(); ++k) {
        ordered_json p;
        p["index"] = m.proxy_indices[k];
        p["name"] = k < m.proxy_names.size() ? m.proxy_names[k] : "";
        p["weight"] = m.weights[k];
        proxies.push_back(p);
    }
    j["proxies"] = proxies;
    ordered_json t;
    t["penalty"] = m.meta.penalty;
    t["lambda"] = m.meta.lambda;
    t["lambda_ridge"] = m.meta.lambda_ridge;
    t["gamma"] = m.meta.gamma;
    t["tol"] = m.meta.tol;
    t["max_iter"] = m.meta.max_iter;
    t["target_q"] = m.meta.target_q;
    t["target_reached"] = m.meta.target_reached;
    t["trimmed"] = m.meta.trimmed;
    t["dropped_columns"] = m.meta.dropped_columns;
    t["dropped_cycles"] = m.meta.dropped_cycles;
    j["training"] = t;
    return j.dump(2) + "\n";
}

PowerModel model_from_json(const std::string& text) {
    try {
        const auto j = ordered_json::parse(text);
        PowerModel m;
        m.tau = j.at("tau").get<std::size_t>();
        if (m.tau == 0) throw DataError("model JSON: tau must be >= 1");
        const std::string flavor = j.at("flavor").get<std::string>();
        if ((flavor == "per_cycle") != (m.tau == 1)) throw DataError("model JSON: flavor and tau disagree");
        for (const auto& p : j.at("proxies")) {
            m.proxy_indices.push_back(p.at("index").get<std::size_t>());
            m.proxy_names.push_back(p.at("name").get<std::string>());
            const double w = p.at("weight").get<double>();
            if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("model JSON: weights must be finite and >= 0");
            m.weights.push_back(w);
        }
        for (std::size_t k = 1; k < m.proxy_indices.size(); ++k) {
            if (m.proxy_indices[k] <= m.proxy_indices[k - 1]) {
                throw DataError("model JSON: proxy indices must be strictly increasing");
            }
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            m.meta.penalty = t.value("penalty", "mcp");
            m.meta.lambda = t.value("lambda", 0.0);
            m.meta.lambda_ridge = t.value("lambda_ridge", 0.0);
            m.meta.gamma = t.value("gamma", 10.0);
            m.meta.tol = t.value("tol", 1e-6);
            m.meta.max_iter = t.value("max_iter", 200);
            m.meta.target_q = t.value("target_q", std::size_t{0});
            m.meta.target_reached = t.value("target_reached", false);
            m.meta.trimmed = t.value("trimmed", false);
            m.meta.dropped_columns = t.value("dropped_columns", std::size_t{0});
            m.meta.dropped_cycles = t.value("dropped_cycles", std::size_t{0});
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model JSON: ") + e.what());
    }
}

std::string eval_to_json(const EvalReport& r) {
    auto metrics_json = [](const metrics::MetricsReport& m) {
        ordered_json j;
        j["nrmse"] = m.nrmse;
        j["nmae"] = m.nmae;
        j["r2"] = m.r2;
        j["pearson_r"] = m.pearson_r;
        j["n_points"] = m.n_points;
        return j;
    };
    ordered_json j;
    j["per_cycle"] = metrics_json(r.per_cycle);
    auto ws = ordered_json::array();
    for (const auto& w : r.windows) {
        ordered_json e;
        e["window"] = w.window;
        e["dropped_cycles"] = w.dropped_cycles;
        e["metrics"] = metrics_json(w.metrics);
        ws.push_back(e);
    }
    j["windows"] = ws;
    return j.dump(2) + "\n";
}

}  // namespace apollo::model

// apollo: command-line driver for the power-proxy toolkit.
//
//   apollo synth     synthetic design + workload trace
//   apollo extract   VCD -> PTRC toggle trace
//   apollo train     select proxies and fit a model
//   apollo eval      per-cycle and windowed metrics of a model on a trace
//   apollo quantize  fixed-point OPM weights
//   apollo opm-sim   bit-exact OPM outputs for a trace
//   apollo report    accuracy and delta-current summary of a prediction
//
// Every subcommand writes <out>/<command>.manifest.json holding the full
// configuration and CRC32 digests of inputs and outputs. Passing a manifest
// back through --config reproduces the run.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "apollo/errors.hpp"
#include "apollo/io.hpp"
#include "apollo/metrics.hpp"
#include "apollo/model.hpp"
#include "apollo/opm.hpp"
#include "apollo/ptrc.hpp"
#include "apollo/syngen.hpp"
#include "apollo/trace.hpp"
#include "apollo/vcd.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace apollo;

namespace {

struct RunConfig {
    std::string command;
    std::uint64_t seed = 1;
    std::string out = ".";
    unsigned jobs = 1;

    // synth
    std::size_t signals = 2000;
    std::size_t true_proxies = 50;
    std::size_t clusters = 100;
    double rho = 0.6;
    std::size_t cycles = 10000;
    std::uint64_t workload = 1;
    bool no_noise = false;

    // extract
    std::string vcd;
    std::string clock;
    std::uint64_t period = 0;
    std::string catalog;
    std::string power;
    std::string latch = "same";

    // train / eval / quantize / opm-sim / report
    std::string trace;
    std::string labels;
    std::string model;
    std::string opm;
    std::string pred;
    std::string truth;
    std::string penalty = "mcp";
    std::size_t target_q = 50;
    double gamma = 10.0;
    std::size_t tau = 8;
    bool per_cycle = false;
    double tol = 1e-6;
    int max_iter = 200;
    std::vector<std::size_t> q_candidates;
    double validation_fraction = 0.2;
    std::vector<std::size_t> windows{16};
    unsigned bits = 10;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, command, seed, out, jobs, signals, true_proxies, clusters,
                                                rho, cycles, workload, no_noise, vcd, clock, period, catalog, power,
                                                latch, trace, labels, model, opm, pred, truth, penalty, target_q, gamma,
                                                tau, per_cycle, tol, max_iter, q_candidates, validation_fraction,
                                                windows, bits)

// Flags are parsed into a scratch config; only the ones actually given are
// copied over the config-file values.
struct Bindings {
    RunConfig flags;
    std::string config_path;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&, const RunConfig&)>>> setters;

    template <typename T>
    CLI::Option* option(CLI::App* app, const std::string& name, T RunConfig::*field, const std::string& help) {
        CLI::Option* opt = nullptr;
        if constexpr (std::is_same_v<T, bool>) {
            opt = app->add_flag(name, flags.*field, help);
        } else {
            opt = app->add_option(name, flags.*field, help);
            if constexpr (!std::is_same_v<T, std::string> && !std::is_same_v<T, std::vector<std::size_t>>) {
                opt->default_val(flags.*field);
            }
        }
        setters.emplace_back(opt, [field](RunConfig& dst, const RunConfig& src) { dst.*field = src.*field; });
        return opt;
    }

    RunConfig resolve(const std::string& command) const {
        RunConfig cfg;
        if (!config_path.empty()) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(io::read_text(config_path));
            } catch (const nlohmann::json::exception& e) {
                throw ParameterError("config " + config_path + ": " + e.what());
            }
            // A manifest carries the configuration under "config".
            if (j.contains("config")) j = j.at("config");
            try {
                cfg = j.get<RunConfig>();
            } catch (const nlohmann::json::exception& e) {
                throw ParameterError("config " + config_path + ": " + e.what());
            }
            if (!cfg.command.empty() && cfg.command != command) {
                throw ParameterError("config " + config_path + " was written by '" + cfg.command + "', not '" +
                                     command + "'");
            }
        }
        for (const auto& [opt, set] : setters) {
            if (opt->count() > 0) set(cfg, flags);
        }
        cfg.command = command;
        return cfg;
    }
};

void add_common(CLI::App* app, Bindings& b) {
    app->add_option("--config", b.config_path, "JSON config or manifest; flags override it");
    b.option(app, "--seed", &RunConfig::seed, "Seed for all randomness");
    b.option(app, "--out", &RunConfig::out, "Output directory");
    b.option(app, "--jobs", &RunConfig::jobs, "Worker threads for independent fits");
}

// ---------------------------------------------------------------------------
// Run bookkeeping

class Run {
public:
    explicit Run(RunConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.jobs == 0) throw ParameterError("--jobs must be >= 1");
        fs::create_directories(cfg_.out);
    }

    const RunConfig& cfg() const { return cfg_; }

    void input(const std::string& path) {
        if (path.empty()) return;
        if (!fs::exists(path)) throw DataError("input not found: " + path);
        inputs_[path] = io::file_digest(path);
    }

    void write(const std::string& name, std::string_view text) {
        const fs::path p = fs::path(cfg_.out) / name;
        io::write_atomic(p, text);
        outputs_[name] = io::file_digest(p);
    }

    void write(const std::string& name, std::span<const std::uint8_t> bytes) {
        const fs::path p = fs::path(cfg_.out) / name;
        io::write_atomic(p, bytes);
        outputs_[name] = io::file_digest(p);
    }

    void finish() {
        ordered_json m;
        m["toolkit"] = "apollo";
        m["version"] = model::kToolkitVersion;
        m["command"] = cfg_.command;
        m["config"] = ordered_json::parse(nlohmann::json(cfg_).dump());
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        io::write_atomic(fs::path(cfg_.out) / (cfg_.command + ".manifest.json"), m.dump(2) + "\n");
    }

private:
    RunConfig cfg_;
    ordered_json inputs_ = ordered_json::object();
    ordered_json outputs_ = ordered_json::object();
};

std::string require(const std::string& value, const char* flag) {
    if (value.empty()) throw ParameterError(std::string(flag) + " is required");
    return value;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// A series file is either a PTRC trace (its power section) or text: an
// optional header line, then one row per cycle whose last comma-separated
// field is the value.
std::vector<double> read_series(const std::string& path) {
    if (fs::path(path).extension() == ".ptrc") {
        auto t = trace::read_trace(path);
        if (!t.power) throw DataError(path + ": trace has no power section");
        return *t.power;
    }
    std::istringstream in(io::read_text(path));
    std::vector<double> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        const std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || ptr != field.data() + field.size()) {
            if (out.empty() && line_no == 1) continue;  // header
            throw ParseError(path + ": bad number '" + field + "'", line_no);
        }
        if (!std::isfinite(v)) throw ParseError(path + ": non-finite value", line_no);
        out.push_back(v);
    }
    return out;
}

std::string series_csv(const char* column, std::span<const double> values) {
    std::string s = std::string("cycle,") + column + "\n";
    for (std::size_t i = 0; i < values.size(); ++i) s += std::to_string(i) + "," + fmt(values[i]) + "\n";
    return s;
}

void check_names(const trace::SignalCatalog& catalog, const std::vector<std::size_t>& indices,
                 const std::vector<std::string>& names) {
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= catalog.size()) {
            throw DataError("proxy index " + std::to_string(indices[k]) + " outside the trace's " +
                            std::to_string(catalog.size()) + " signals");
        }
        if (k < names.size() && catalog[indices[k]].name != names[k]) {
            throw DataError("proxy " + std::to_string(k) + " is '" + names[k] + "' in the model but '" +
                            catalog[indices[k]].name + "' in the trace");
        }
    }
}

trace::SignalCatalog read_catalog(const std::string& path) {
    try {
        const auto j = ordered_json::parse(io::read_text(path));
        std::vector<trace::SignalInfo> signals;
        for (const auto& e : j.at("signals")) {
            trace::SignalInfo s;
            s.name = e.at("name").get<std::string>();
            const std::string kind = e.value("kind", "bit");
            if (kind == "bit") {
                s.kind = trace::SingleBit{};
            } else if (kind == "bus") {
                s.kind = trace::Bus{e.at("width").get<std::uint32_t>()};
            } else if (kind == "gated_clock") {
                s.kind = trace::GatedClock{e.at("enable").get<std::string>()};
            } else {
                throw DataError("catalog " + path + ": unknown kind '" + kind + "'");
            }
            signals.push_back(std::move(s));
        }
        return trace::SignalCatalog(std::move(signals));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("catalog " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_synth(Run& run) {
    const auto& c = run.cfg();
    syngen::DesignParams p;
    p.n_signals = c.signals;
    p.n_true = c.true_proxies;
    p.n_clusters = c.clusters;
    p.rho = c.rho;
    p.seed = c.seed;
    if (c.cycles == 0) throw ParameterError("--cycles must be >= 1");
    const auto design = syngen::gen_design(p);
    const auto toggles = syngen::gen_workload(design, syngen::default_profile(c.cycles, c.workload));
    trace::TraceFile t{trace::SignalCatalog::numbered(c.signals), toggles,
                       syngen::gen_power_labels(design, toggles, !c.no_noise, c.workload)};
    run.write("trace.ptrc", trace::encode_trace(t));
    run.write("design.json", syngen::design_to_json(design));
}

void cmd_extract(Run& run) {
    const auto& c = run.cfg();
    const auto vcd_path = require(c.vcd, "--vcd");
    run.input(vcd_path);
    trace::VcdOptions opt;
    opt.clock = c.clock;
    opt.period = c.period;
    if (c.clock.empty() && c.period == 0) throw ParameterError("extract needs --clock or --period");
    if (c.latch == "same") {
        opt.gated_clock = trace::LatchConvention::SameCycle;
    } else if (c.latch == "delayed") {
        opt.gated_clock = trace::LatchConvention::Delayed;
    } else {
        throw ParameterError("--latch must be 'same' or 'delayed'");
    }
    if (!c.catalog.empty()) {
        run.input(c.catalog);
        opt.catalog = read_catalog(c.catalog);
    }
    auto parsed = trace::parse_vcd(io::read_text(vcd_path), opt);
    trace::TraceFile t{std::move(parsed.catalog), std::move(parsed.toggles), std::nullopt};
    if (!c.power.empty()) {
        run.input(c.power);
        auto power = read_series(c.power);
        if (power.size() != t.toggles.n_cycles()) {
            throw DataError("power series has " + std::to_string(power.size()) + " values for " +
                            std::to_string(t.toggles.n_cycles()) + " cycles");
        }
        t.power = std::move(power);
    }
    run.write("trace.ptrc", trace::encode_trace(t));
}

struct LoadedTrace {
    trace::TraceFile file;
    trace::PowerTrace labels;
};

LoadedTrace load_labeled(Run& run) {
    const auto& c = run.cfg();
    const auto path = require(c.trace, "--trace");
    run.input(path);
    LoadedTrace lt{trace::read_trace(path), {}};
    if (!c.labels.empty()) {
        run.input(c.labels);
        lt.labels = read_series(c.labels);
    } else if (lt.file.power) {
        lt.labels = *lt.file.power;
    } else {
        throw ParameterError("trace has no power section; pass --labels");
    }
    if (lt.labels.size() != lt.file.toggles.n_cycles()) {
        throw DataError("labels have " + std::to_string(lt.labels.size()) + " values for " +
                        std::to_string(lt.file.toggles.n_cycles()) + " cycles");
    }
    return lt;
}

void cmd_train(Run& run) {
    const auto& c = run.cfg();
    const auto data = load_labeled(run);
    model::TrainConfig tc;
    tc.select.target_q = c.target_q;
    tc.select.gamma = c.gamma;
    tc.select.tol = c.tol;
    tc.select.max_iter = c.max_iter;
    tc.select.penalty = solver::penalty_from_string(c.penalty);
    const std::size_t tau = c.per_cycle ? 1 : c.tau;
    if (tau == 0) throw ParameterError("--tau must be >= 1");

    ordered_json rep;
    if (!c.q_candidates.empty()) {
        model::TrainConfig vc = tc;
        vc.select.tau = tau;
        const auto choice = model::choose_q_by_validation(data.file.toggles, data.labels, c.q_candidates, vc,
                                                          c.validation_fraction, c.jobs);
        tc.select.target_q = choice.best_q;
        ordered_json cands = ordered_json::array();
        for (const auto& q : choice.candidates) {
            cands.push_back({{"target_q", q.target_q}, {"achieved_q", q.achieved_q},
                             {"validation_nrmse", q.validation_nrmse}});
        }
        rep["validation"] = {{"fraction", c.validation_fraction}, {"best_q", choice.best_q}, {"candidates", cands}};
    }

    const auto out = tau == 1 ? model::train(data.file.toggles, data.labels, data.file.catalog, tc)
                              : model::train_multicycle(data.file.toggles, data.labels, tau, data.file.catalog, tc);

    ordered_json dropped = ordered_json::array();
    for (const auto& d : out.screen.dropped) {
        ordered_json e = {{"index", d.index}, {"name", data.file.catalog[d.index].name}, {"reason", d.reason}};
        if (d.duplicate_of) e["duplicate_of"] = *d.duplicate_of;
        dropped.push_back(e);
    }
    rep["screen"] = {{"kept", out.screen.kept.size()}, {"dropped", dropped}};
    rep["selection"] = {{"lambda", out.selection.lambda},       {"target_reached", out.selection.target_reached},
                        {"trimmed", out.selection.trimmed},     {"probes", out.selection.probes},
                        {"n_iter", out.selection.n_iter},       {"converged", out.selection.converged},
                        {"objective_trace", out.selection.objective_trace}};
    const auto fit = model::predict_per_cycle(out.model, data.file.toggles);
    rep["training_fit"] = ordered_json::parse(metrics::report_to_json(metrics::report(data.labels, fit)));

    run.write("model.json", model::model_to_json(out.model));
    run.write("train_report.json", rep.dump(2) + "\n");
}

void cmd_eval(Run& run) {
    const auto& c = run.cfg();
    const auto model_path = require(c.model, "--model");
    run.input(model_path);
    const auto m = model::model_from_json(io::read_text(model_path));
    for (const auto t : c.windows) {
        if (!model::is_power_of_two(t)) throw ParameterError("window T=" + std::to_string(t) + " is not a power of two");
    }
    const auto data = load_labeled(run);
    check_names(data.file.catalog, m.proxy_indices, m.proxy_names);
    const auto report = model::evaluate(m, data.file.toggles, data.labels, c.windows);
    run.write("eval.json", model::eval_to_json(report));
    run.write("pred.csv", series_csv("prediction", model::predict_per_cycle(m, data.file.toggles)));
}

void cmd_quantize(Run& run) {
    const auto& c = run.cfg();
    const auto model_path = require(c.model, "--model");
    run.input(model_path);
    if (c.windows.size() != 1) throw ParameterError("quantize takes exactly one --window");
    const auto window = c.windows.front();
    if (!model::is_power_of_two(window)) throw ParameterError("window T=" + std::to_string(window) + " is not a power of two");
    const auto qm = opm::quantize(model::model_from_json(io::read_text(model_path)), c.bits);
    run.write("opm.json", opm::opm_to_json(qm, window));
}

void cmd_opm_sim(Run& run) {
    const auto& c = run.cfg();
    const auto opm_path = require(c.opm, "--opm");
    run.input(opm_path);
    if (c.windows.size() != 1) throw ParameterError("opm-sim takes exactly one --window");
    const auto window = c.windows.front();
    if (!model::is_power_of_two(window)) throw ParameterError("window T=" + std::to_string(window) + " is not a power of two");
    const auto qm = opm::opm_from_json(io::read_text(opm_path));
    const auto trace_path = require(c.trace, "--trace");
    run.input(trace_path);
    const auto t = trace::read_trace(trace_path);
    check_names(t.catalog, qm.proxy_indices, qm.proxy_names);
    const auto out = opm::simulate_opm(qm, t.toggles.select_columns(qm.proxy_indices), window);
    run.write("opm_out.csv", opm::output_to_csv(out, qm.scale));
}

void cmd_report(Run& run) {
    const auto& c = run.cfg();
    const auto pred_path = require(c.pred, "--pred");
    const auto truth_path = require(c.truth, "--truth");
    run.input(pred_path);
    run.input(truth_path);
    const auto pred = read_series(pred_path);
    const auto truth = read_series(truth_path);
    if (pred.size() != truth.size()) {
        throw DataError("prediction has " + std::to_string(pred.size()) + " values, truth has " +
                        std::to_string(truth.size()));
    }
    ordered_json rep;
    rep["power"] = ordered_json::parse(metrics::report_to_json(metrics::report(truth, pred)));
    const auto dp = metrics::delta_current(pred);
    const auto dt = metrics::delta_current(truth);
    double max_dp = 0.0;
    double max_dt = 0.0;
    for (std::size_t i = 0; i < dp.size(); ++i) {
        max_dp = std::max(max_dp, std::abs(dp[i]));
        max_dt = std::max(max_dt, std::abs(dt[i]));
    }
    rep["delta_current"] = {{"pearson_r", metrics::pearson(dt, dp)},
                            {"max_abs_predicted", max_dp},
                            {"max_abs_truth", max_dt},
                            {"n_points", dp.size()}};
    run.write("report.json", rep.dump(2) + "\n");
}

int fail(int code, const std::string& msg) {
    std::cerr << "apollo: " << msg << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-proxy selection, modelling and on-chip monitor simulation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", model::kToolkitVersion);

    struct Command {
        std::string name;
        std::function<void(Run&)> fn;
        CLI::App* app = nullptr;
        Bindings b;
    };
    std::vector<std::unique_ptr<Command>> commands;
    auto add = [&](const std::string& name, const std::string& help, std::function<void(Run&)> fn) {
        auto cmd = std::make_unique<Command>();
        cmd->name = name;
        cmd->fn = std::move(fn);
        cmd->app = app.add_subcommand(name, help);
        add_common(cmd->app, cmd->b);
        commands.push_back(std::move(cmd));
        return commands.back().get();
    };

    auto* synth = add("synth", "Generate a synthetic design and a labeled workload trace", cmd_synth);
    synth->b.option(synth->app, "--signals", &RunConfig::signals, "Candidate signals M");
    synth->b.option(synth->app, "--true-proxies", &RunConfig::true_proxies, "Signals with nonzero true weight K");
    synth->b.option(synth->app, "--clusters", &RunConfig::clusters, "Correlated signal clusters");
    synth->b.option(synth->app, "--rho", &RunConfig::rho, "Within-cluster toggle correlation");
    synth->b.option(synth->app, "--cycles", &RunConfig::cycles, "Trace length N");
    synth->b.option(synth->app, "--workload", &RunConfig::workload, "Workload index (phase schedule and label noise)");
    synth->b.option(synth->app, "--no-noise", &RunConfig::no_noise, "Noiseless labels");

    auto* extract = add("extract", "Sample a VCD into a PTRC toggle trace", cmd_extract);
    extract->b.option(extract->app, "--vcd", &RunConfig::vcd, "Input VCD");
    extract->b.option(extract->app, "--clock", &RunConfig::clock, "Clock signal sampled on rising edges");
    extract->b.option(extract->app, "--period", &RunConfig::period, "Fixed sampling period when there is no clock");
    extract->b.option(extract->app, "--catalog", &RunConfig::catalog, "Signal catalog JSON");
    extract->b.option(extract->app, "--power", &RunConfig::power, "Per-cycle power labels to attach");
    extract->b.option(extract->app, "--latch", &RunConfig::latch, "Gated-clock enable latch: same or delayed");

    auto* train = add("train", "Select Q proxies and fit the power model", cmd_train);
    train->b.option(train->app, "--trace", &RunConfig::trace, "Training trace (PTRC)");
    train->b.option(train->app, "--labels", &RunConfig::labels, "Power labels overriding the trace's own");
    train->b.option(train->app, "--target-q", &RunConfig::target_q, "Number of proxies Q");
    train->b.option(train->app, "--gamma", &RunConfig::gamma, "MCP gamma (> 1)");
    train->b.option(train->app, "--tau", &RunConfig::tau, "Training interval in cycles");
    train->b.option(train->app, "--per-cycle", &RunConfig::per_cycle, "Per-cycle model (same as --tau 1)");
    train->b.option(train->app, "--penalty", &RunConfig::penalty, "mcp or lasso");
    train->b.option(train->app, "--tol", &RunConfig::tol, "Relative convergence tolerance");
    train->b.option(train->app, "--max-iter", &RunConfig::max_iter, "Coordinate-descent sweeps per fit");
    train->b.option(train->app, "--q-candidates", &RunConfig::q_candidates, "Pick Q among these on a held-out tail");
    train->b.option(train->app, "--validation-fraction", &RunConfig::validation_fraction, "Held-out tail fraction");

    auto* eval = add("eval", "Evaluate a model on a labeled trace", cmd_eval);
    eval->b.option(eval->app, "--model", &RunConfig::model, "Model JSON");
    eval->b.option(eval->app, "--trace", &RunConfig::trace, "Trace (PTRC)");
    eval->b.option(eval->app, "--labels", &RunConfig::labels, "Power labels overriding the trace's own");
    eval->b.option(eval->app, "--window", &RunConfig::windows, "Averaging windows T (powers of two)");

    auto* quant = add("quantize", "Quantize model weights for the OPM", cmd_quantize);
    quant->b.option(quant->app, "--model", &RunConfig::model, "Model JSON");
    quant->b.option(quant->app, "--bits", &RunConfig::bits, "Weight bit width B");
    quant->b.option(quant->app, "--window", &RunConfig::windows, "Averaging window T");

    auto* sim = add("opm-sim", "Run the bit-exact OPM on a trace", cmd_opm_sim);
    sim->b.option(sim->app, "--opm", &RunConfig::opm, "OPM JSON from quantize");
    sim->b.option(sim->app, "--trace", &RunConfig::trace, "Trace (PTRC)");
    sim->b.option(sim->app, "--window", &RunConfig::windows, "Averaging window T");

    auto* rep = add("report", "Compare a prediction with the truth, including delta current", cmd_report);
    rep->b.option(rep->app, "--pred", &RunConfig::pred, "Predicted per-cycle power (CSV or PTRC)");
    rep->b.option(rep->app, "--truth", &RunConfig::truth, "True per-cycle power (CSV or PTRC)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        for (const auto& cmd : commands) {
            if (!cmd->app->parsed()) continue;
            Run run(cmd->b.resolve(cmd->name));
            cmd->fn(run);
            run.finish();
        }
    } catch (const ParameterError& e) {
        return fail(2, e.what());
    } catch (const InvariantError& e) {
        return fail(4, std::string("internal invariant violated: ") + e.what());
    } catch (const DataError& e) {
        return fail(3, e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(3, e.what());
    } catch (const std::exception& e) {
        return fail(4, e.what());
    }
    return 0;
}

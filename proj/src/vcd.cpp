#include "apollo/vcd.hpp"

#include <cctype>
#include <charconv>
#include <unordered_map>

#include "apollo/errors.hpp"

namespace apollo::trace {
namespace {

class Tokenizer {
public:
    explicit Tokenizer(std::string_view text) : text_(text) {}

    std::optional<std::string_view> next() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            if (text_[pos_] == '\n') ++line_;
            ++pos_;
        }
        if (pos_ >= text_.size()) return std::nullopt;
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        return text_.substr(start, pos_ - start);
    }

    std::string_view expect(const char* what) {
        auto tok = next();
        if (!tok) throw ParseError(std::string("unexpected end of input, expected ") + what, line_);
        return *tok;
    }

    void skip_to_end() {
        while (true) {
            if (expect("$end") == "$end") return;
        }
    }

    std::size_t line() const { return line_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
};

bool is_scalar_value(char c) {
    switch (c) {
        case '0': case '1': case 'x': case 'X': case 'z': case 'Z': return true;
        default: return false;
    }
}

char normalize(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

/// Left-extend a binary vector value to `width` per VCD rules.
std::string extend(std::string_view bits, std::uint32_t width, std::size_t line) {
    std::string v;
    v.reserve(width);
    for (const char c : bits) {
        if (!is_scalar_value(c)) throw ParseError("invalid vector value character '" + std::string(1, c) + "'", line);
        v.push_back(normalize(c));
    }
    if (v.size() > width) {
        // Leading zeros beyond the declared width are harmless; anything else is not.
        const std::size_t extra = v.size() - width;
        for (std::size_t k = 0; k < extra; ++k) {
            if (v[k] != '0') throw ParseError("vector value wider than declared width", line);
        }
        return v.substr(extra);
    }
    const char fill = (v.empty() || v.front() == '1') ? '0' : v.front();
    return std::string(width - v.size(), fill) + v;
}

std::uint64_t parse_time(std::string_view digits, std::size_t line) {
    std::uint64_t t = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), t);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
        throw ParseError("malformed timestamp '#" + std::string(digits) + "'", line);
    }
    return t;
}

}  // namespace

std::optional<std::size_t> VcdSamples::find(std::string_view name) const {
    for (std::size_t v = 0; v < vars.size(); ++v) {
        if (vars[v].name == name) return v;
    }
    std::optional<std::size_t> hit;
    for (std::size_t v = 0; v < vars.size(); ++v) {
        const auto& full = vars[v].name;
        const auto dot = full.rfind('.');
        if (dot != std::string::npos && std::string_view(full).substr(dot + 1) == name) {
            if (hit) return std::nullopt;
            hit = v;
        }
    }
    return hit;
}

VcdSamples sample_vcd(std::string_view text, const VcdOptions& options) {
    if (options.clock.empty() && options.period == 0) {
        throw ParameterError("VCD sampling needs a clock name or a nonzero period");
    }
    Tokenizer tok(text);
    VcdSamples out;
    std::vector<std::string> scopes;
    std::unordered_map<std::string, std::vector<std::size_t>> by_id;

    // Header.
    bool definitions_done = false;
    while (!definitions_done) {
        const auto kw = tok.next();
        if (!kw) throw ParseError("missing $enddefinitions", tok.line());
        if (*kw == "$timescale") {
            std::string ts;
            for (auto t = tok.expect("$end"); t != "$end"; t = tok.expect("$end")) {
                if (!ts.empty()) ts += ' ';
                ts += t;
            }
            out.timescale = ts;
        } else if (*kw == "$scope") {
            tok.expect("scope type");
            scopes.emplace_back(tok.expect("scope name"));
            tok.skip_to_end();
        } else if (*kw == "$upscope") {
            if (scopes.empty()) throw ParseError("$upscope without matching $scope", tok.line());
            scopes.pop_back();
            tok.skip_to_end();
        } else if (*kw == "$var") {
            const auto type = tok.expect("var type");
            if (type != "wire" && type != "reg") {
                throw ParseError("unsupported $var type '" + std::string(type) + "'", tok.line());
            }
            const auto size_tok = tok.expect("var size");
            std::uint32_t width = 0;
            const auto [ptr, ec] = std::from_chars(size_tok.data(), size_tok.data() + size_tok.size(), width);
            if (ec != std::errc() || ptr != size_tok.data() + size_tok.size() || width == 0) {
                throw ParseError("invalid $var size '" + std::string(size_tok) + "'", tok.line());
            }
            VcdVar var;
            var.width = width;
            var.id = std::string(tok.expect("identifier code"));
            const auto ref = tok.expect("reference");
            for (const auto& s : scopes) var.name += s + ".";
            var.name += ref;
            for (auto t = tok.expect("$end"); t != "$end"; t = tok.expect("$end")) {
                // bit-select such as [3:0]
            }
            for (const auto& existing : out.vars) {
                if (existing.name == var.name) throw ParseError("duplicate variable '" + var.name + "'", tok.line());
            }
            by_id[var.id].push_back(out.vars.size());
            out.vars.push_back(std::move(var));
        } else if (*kw == "$enddefinitions") {
            tok.skip_to_end();
            definitions_done = true;
        } else if (*kw == "$date" || *kw == "$version" || *kw == "$comment") {
            tok.skip_to_end();
        } else {
            throw ParseError("unexpected token '" + std::string(*kw) + "' in header", tok.line());
        }
    }

    std::optional<std::size_t> clock_var;
    if (!options.clock.empty()) {
        clock_var = out.find(options.clock);
        if (!clock_var) {
            throw ParameterError("clock '" + options.clock + "' is not declared (line " + std::to_string(tok.line()) + ")");
        }
        if (out.vars[*clock_var].width != 1) throw ParseError("clock '" + options.clock + "' is not 1 bit", tok.line());
    }

    // Current value per variable; undriven nets read as x.
    std::vector<std::string> current(out.vars.size());
    for (std::size_t v = 0; v < out.vars.size(); ++v) current[v] = std::string(out.vars[v].width, 'x');
    out.values.assign(out.vars.size(), {});
    bool clock_assigned = false;

    auto take_sample = [&] {
        for (std::size_t v = 0; v < out.vars.size(); ++v) out.values[v].push_back(current[v]);
        ++out.n_cycles;
    };

    struct Change {
        std::size_t var;
        std::string value;
    };
    std::vector<Change> group;
    std::uint64_t group_time = 0;
    std::uint64_t next_sample = options.period;

    // Apply the changes stamped at one timestamp, sampling first if the clock rises.
    auto flush = [&] {
        if (clock_var) {
            bool rises = false;
            char level = current[*clock_var][0];
            for (const auto& c : group) {
                if (c.var != *clock_var) continue;
                if (clock_assigned && level != '1' && c.value[0] == '1') rises = true;
                clock_assigned = true;
                level = c.value[0];
            }
            if (rises) take_sample();
        }
        for (auto& c : group) current[c.var] = std::move(c.value);
        group.clear();
    };

    bool any_time = false;
    while (auto t = tok.next()) {
        const std::string_view s = *t;
        if (s[0] == '#') {
            const auto time = parse_time(s.substr(1), tok.line());
            if (any_time && time < group_time) {
                throw ParseError("timestamp #" + std::to_string(time) + " goes backwards from #" +
                                     std::to_string(group_time),
                                 tok.line());
            }
            flush();
            if (!clock_var) {
                // Fixed-period samples due strictly before `time`, plus one at `time`
                // itself, see the values before this stamp's changes.
                while (next_sample <= time) {
                    take_sample();
                    next_sample += options.period;
                }
            }
            group_time = time;
            any_time = true;
        } else if (s == "$dumpvars" || s == "$dumpall" || s == "$dumpon" || s == "$end") {
            continue;
        } else if (s == "$dumpoff") {
            throw ParseError("$dumpoff sections are not supported", tok.line());
        } else if (s == "$comment") {
            tok.skip_to_end();
        } else if (s[0] == 'b' || s[0] == 'B') {
            const auto id = tok.expect("identifier code");
            const auto it = by_id.find(std::string(id));
            if (it == by_id.end()) throw ParseError("undeclared identifier code '" + std::string(id) + "'", tok.line());
            for (const auto v : it->second) {
                group.push_back({v, extend(s.substr(1), out.vars[v].width, tok.line())});
            }
        } else if (is_scalar_value(s[0])) {
            const std::string id(s.substr(1));
            const auto it = by_id.find(id);
            if (id.empty() || it == by_id.end()) {
                throw ParseError("undeclared identifier code '" + id + "'", tok.line());
            }
            for (const auto v : it->second) {
                group.push_back({v, extend(s.substr(0, 1), out.vars[v].width, tok.line())});
            }
        } else if (s[0] == 'r' || s[0] == 'R') {
            throw ParseError("real-valued changes are not supported", tok.line());
        } else {
            throw ParseError("unexpected token '" + std::string(s) + "'", tok.line());
        }
    }
    flush();
    return out;
}

std::vector<std::uint8_t> bit_toggles(const VcdSamples& samples, std::size_t var, std::uint32_t bit) {
    const auto& series = samples.values.at(var);
    const auto width = samples.vars.at(var).width;
    if (bit >= width) throw ParameterError("bit index beyond variable width");
    std::vector<char> bits(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) bits[i] = series[i][width - 1 - bit];
    return extract_toggles(std::span<const char>(bits));
}

VcdTrace parse_vcd(std::string_view text, const VcdOptions& options) {
    const auto samples = sample_vcd(text, options);

    SignalCatalog catalog;
    if (options.catalog) {
        catalog = *options.catalog;
    } else {
        std::vector<SignalInfo> signals;
        const auto clock_var = options.clock.empty() ? std::nullopt : samples.find(options.clock);
        for (std::size_t v = 0; v < samples.vars.size(); ++v) {
            if (clock_var && *clock_var == v) continue;
            const auto& var = samples.vars[v];
            if (var.width == 1) {
                signals.push_back({var.name, SingleBit{}});
            } else {
                signals.push_back({var.name, Bus{var.width}});
            }
        }
        catalog = SignalCatalog(std::move(signals));
    }

    auto lookup = [&](const std::string& name) {
        const auto v = samples.find(name);
        if (!v) throw DataError("signal '" + name + "' is not present in the waveform");
        return *v;
    };

    std::vector<std::vector<std::uint8_t>> columns;
    columns.reserve(catalog.size());
    for (const auto& sig : catalog.signals()) {
        if (std::holds_alternative<SingleBit>(sig.kind)) {
            const auto v = lookup(sig.name);
            if (samples.vars[v].width != 1) {
                throw DataError("signal '" + sig.name + "' is " + std::to_string(samples.vars[v].width) +
                                " bits wide but catalogued as single-bit");
            }
            columns.push_back(bit_toggles(samples, v, 0));
        } else if (const auto* bus = std::get_if<Bus>(&sig.kind)) {
            const auto v = lookup(sig.name);
            if (samples.vars[v].width != bus->width) {
                throw DataError("bus '" + sig.name + "' width differs from its declaration");
            }
            std::vector<std::vector<std::uint8_t>> bits;
            for (std::uint32_t b = 0; b < bus->width; ++b) bits.push_back(bit_toggles(samples, v, b));
            columns.push_back(samples.n_cycles ? collapse_bus(bits) : std::vector<std::uint8_t>{});
        } else {
            const auto& g = std::get<GatedClock>(sig.kind);
            const auto v = lookup(g.enable_name);
            if (samples.vars[v].width != 1) throw DataError("enable '" + g.enable_name + "' is not 1 bit");
            std::vector<std::uint8_t> asserted(samples.n_cycles);
            for (std::size_t i = 0; i < samples.n_cycles; ++i) asserted[i] = samples.values[v][i][0] == '1';
            columns.push_back(gated_clock_toggle(asserted, options.gated_clock));
        }
    }

    ToggleMatrix toggles(samples.n_cycles, catalog.size());
    for (std::size_t j = 0; j < columns.size(); ++j) toggles.set_column(j, columns[j]);
    return {std::move(catalog), std::move(toggles)};
}

}  // namespace apollo::trace

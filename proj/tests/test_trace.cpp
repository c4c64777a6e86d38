#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "apollo/errors.hpp"
#include "apollo/io.hpp"
#include "apollo/ptrc.hpp"
#include "apollo/trace.hpp"
#include "apollo/vcd.hpp"

using namespace apollo;
using namespace apollo::trace;

namespace {

using Bits = std::vector<std::uint8_t>;

Bits toggles_of(const std::vector<std::string>& v) { return extract_toggles(std::span<const std::string>(v)); }

ToggleMatrix random_matrix(std::size_t n, std::size_t m, std::uint32_t seed) {
    std::mt19937 gen(seed);
    ToggleMatrix t(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) t.set(i, j, gen() & 1U);
    }
    return t;
}

std::string fixture(const char* name) { return io::read_text(std::string(APOLLO_FIXTURES) + "/" + name); }

}  // namespace

TEST_SUITE("trace") {

TEST_CASE("extract_toggles marks value changes") {
    CHECK(toggles_of({"0", "1", "1", "0"}) == Bits{0, 1, 0, 1});
    CHECK(toggles_of({"1", "1", "1"}) == Bits{0, 0, 0});
    CHECK(toggles_of({}).empty());

    // Hand event table: 0, 1, x, 0, 0. Every change counts, x included.
    const auto t = toggles_of({"0", "1", "x", "0", "0"});
    CHECK(t == Bits{0, 1, 1, 1, 0});
    CHECK(t[3] == 1);
}

TEST_CASE("extract_toggles only sees adjacent inequality") {
    std::mt19937 gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> v(64);
        for (auto& x : v) x = static_cast<int>(gen() % 4);
        // Consistent relabelling of the alphabet.
        const int perm[4] = {2, 0, 3, 1};
        std::vector<int> w(v.size());
        std::transform(v.begin(), v.end(), w.begin(), [&](int x) { return perm[x]; });
        CHECK(extract_toggles(std::span<const int>(v)) == extract_toggles(std::span<const int>(w)));
    }
}

TEST_CASE("matrix extraction and ragged input") {
    const auto m = extract_toggles(std::vector<std::vector<std::string>>{{"0", "1", "1"}, {"z", "z", "0"}});
    CHECK(m.n_cycles() == 3);
    CHECK(m.n_signals() == 2);
    CHECK(m.column(0) == Bits{0, 1, 0});
    CHECK(m.column(1) == Bits{0, 0, 1});
    CHECK_THROWS_AS(extract_toggles(std::vector<std::vector<std::string>>{{"0", "1"}, {"0"}}), DataError);
}

TEST_CASE("column is all zero iff the signal never changes") {
    const auto m = extract_toggles(std::vector<std::vector<std::string>>{{"1", "1", "1", "1"}, {"0", "0", "1", "1"}});
    CHECK(m.column_count(0) == 0);
    CHECK(m.column_count(1) == 1);
}

TEST_CASE("collapse_bus is an OR") {
    CHECK(collapse_bus({{0}, {1}, {0}}) == Bits{1});
    CHECK(collapse_bus({{0}, {0}, {0}}) == Bits{0});
    CHECK_THROWS_AS(collapse_bus({}), DataError);

    // Every 3-bit toggle pattern as one cycle each (8 cycles).
    std::vector<Bits> bits(3, Bits(8));
    for (unsigned p = 0; p < 8; ++p) {
        for (unsigned b = 0; b < 3; ++b) bits[b][p] = (p >> b) & 1U;
    }
    const auto out = collapse_bus(bits);
    for (unsigned p = 0; p < 8; ++p) CHECK(out[p] == (p != 0 ? 1 : 0));

    // 4 mixed cycles, and column order does not matter.
    const std::vector<Bits> mixed = {{0, 1, 0, 0}, {0, 0, 1, 0}, {0, 1, 0, 1}};
    CHECK(collapse_bus(mixed) == Bits{0, 1, 1, 1});
    CHECK(collapse_bus({mixed[2], mixed[0], mixed[1]}) == collapse_bus(mixed));
}

TEST_CASE("gated clock conventions") {
    const Bits en{1, 0, 1};
    CHECK(gated_clock_toggle(en) == Bits{1, 0, 1});
    CHECK(gated_clock_toggle(Bits{0, 0, 0, 0}) == Bits{0, 0, 0, 0});
    CHECK(gated_clock_toggle(Bits{1, 1, 0}, LatchConvention::SameCycle) == Bits{1, 1, 0});
    CHECK(gated_clock_toggle(Bits{1, 1, 0}, LatchConvention::Delayed) == Bits{0, 1, 1});
}

TEST_CASE("catalog validation") {
    CHECK_THROWS_AS(SignalCatalog({{"a", SingleBit{}}, {"a", SingleBit{}}}), ParameterError);
    CHECK_THROWS_AS(SignalCatalog({{"", SingleBit{}}}), ParameterError);
    CHECK_THROWS_AS(SignalCatalog({{"bus", Bus{1}}}), ParameterError);
    const auto c = SignalCatalog::numbered(3);
    CHECK(c[2].name == "s0002");
    CHECK(c.find("s0001") == 1U);
    CHECK_FALSE(c.find("nope").has_value());
}

TEST_CASE("matrix helpers") {
    const auto m = random_matrix(100, 70, 3);
    const std::vector<std::size_t> cols{69, 0, 64};
    const auto s = m.select_columns(cols);
    for (std::size_t i = 0; i < 100; ++i) {
        for (std::size_t k = 0; k < cols.size(); ++k) CHECK(s.get(i, k) == m.get(i, cols[k]));
    }
    const auto sl = m.slice_cycles(10, 5);
    CHECK(sl.n_cycles() == 5);
    for (std::size_t j = 0; j < 70; ++j) CHECK(sl.get(4, j) == m.get(14, j));
    CHECK(ToggleMatrix::from_columns({m.column(0), m.column(1)}).column(1) == m.column(1));
    CHECK(to_csv(SignalCatalog::numbered(2), ToggleMatrix::from_columns({{0, 1}, {1, 1}})) ==
          "s0000,s0001\n0,1\n1,1\n");
}

TEST_CASE("VCD: two signals, three cycles") {
    VcdOptions opt;
    opt.clock = "clk";
    const auto t = parse_vcd(fixture("two_signals.vcd"), opt);
    REQUIRE(t.toggles.n_cycles() == 3);
    REQUIRE(t.toggles.n_signals() == 2);
    CHECK(t.catalog[0].name == "top.a");
    CHECK(t.catalog[1].name == "top.b");
    // Hand trace of registered values: a = 0, 1, x; b = 1, 0, 0.
    CHECK(t.toggles.column(0) == Bits{0, 1, 1});
    CHECK(t.toggles.column(1) == Bits{0, 1, 0});

    const auto s = sample_vcd(fixture("two_signals.vcd"), opt);
    CHECK(s.timescale == "1ns");
    CHECK(s.values[*s.find("a")] == std::vector<std::string>{"0", "1", "x"});
}

TEST_CASE("VCD: 4-bit bus collapses to one column") {
    VcdOptions opt;
    opt.clock = "clk";
    opt.catalog = SignalCatalog({{"data", Bus{4}}, {"en", SingleBit{}}});
    const auto text = fixture("bus4.vcd");
    const auto t = parse_vcd(text, opt);
    REQUIRE(t.toggles.n_cycles() == 6);
    REQUIRE(t.toggles.n_signals() == 2);

    // Per-bit parse, then OR.
    const auto s = sample_vcd(text, opt);
    const auto v = *s.find("data");
    std::vector<Bits> bits;
    for (std::uint32_t b = 0; b < 4; ++b) bits.push_back(bit_toggles(s, v, b));
    CHECK(t.toggles.column(0) == collapse_bus(bits));
    // Hand: 0000 0101 0111 0111 1000 1000
    CHECK(t.toggles.column(0) == Bits{0, 1, 1, 0, 1, 0});
    CHECK(bits[3] == Bits{0, 0, 0, 0, 1, 0});

    // Without a catalog the vector is a bus by default.
    VcdOptions plain;
    plain.clock = "clk";
    const auto d = parse_vcd(text, plain);
    CHECK(std::holds_alternative<Bus>(d.catalog[0].kind));
    CHECK(d.toggles.column(0) == t.toggles.column(0));
}

TEST_CASE("VCD: gated clock from its enable") {
    VcdOptions opt;
    opt.clock = "clk";
    opt.catalog = SignalCatalog({{"gclk", GatedClock{"en"}}});
    CHECK(parse_vcd(fixture("bus4.vcd"), opt).toggles.column(0) == Bits{0, 1, 1, 1, 0, 0});
    opt.gated_clock = LatchConvention::Delayed;
    CHECK(parse_vcd(fixture("bus4.vcd"), opt).toggles.column(0) == Bits{0, 0, 1, 1, 1, 0});
}

TEST_CASE("VCD: period sampling") {
    const std::string text =
        "$timescale 1ns $end\n$var wire 1 ! a $end\n$enddefinitions $end\n"
        "#0\n0!\n#10\n1!\n#20\n0!\n#25\n1!\n#40\n";
    VcdOptions opt;
    opt.period = 10;
    const auto s = sample_vcd(text, opt);
    // Samples at 10, 20, 30, 40 see the value before changes stamped there.
    CHECK(s.values[0] == std::vector<std::string>{"0", "1", "1", "1"});
}

TEST_CASE("VCD: zero value changes") {
    const std::string header =
        "$timescale 1ns $end\n$var wire 1 ! clk $end\n$var wire 1 \" a $end\n$enddefinitions $end\n";
    VcdOptions opt;
    opt.clock = "clk";
    const auto empty = parse_vcd(header, opt);
    CHECK(empty.toggles.n_cycles() == 0);
    CHECK(empty.toggles.n_signals() == 1);

    // Clock runs, the data never moves.
    const auto quiet = parse_vcd(header + "#0\n0!\n0\"\n#1\n1!\n#2\n0!\n#3\n1!\n#4\n0!\n#5\n1!\n", opt);
    CHECK(quiet.toggles.n_cycles() == 3);
    CHECK(quiet.toggles.column_count(0) == 0);
}

TEST_CASE("VCD: errors carry line numbers") {
    const std::string header = "$timescale 1ns $end\n$var wire 1 ! clk $end\n$enddefinitions $end\n";
    VcdOptions opt;
    opt.clock = "clk";

    try {
        (void)parse_vcd(header + "#10\n1!\n#5\n0!\n", opt);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 6);
        CHECK(std::string(e.what()).find("line 6") != std::string::npos);
    }
    try {
        (void)parse_vcd(header + "#0\n1?\n", opt);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 5);
    }
    CHECK_THROWS_AS(parse_vcd(header + "$dumpoff\n", opt), ParseError);

    VcdOptions wrong;
    wrong.clock = "clock";
    CHECK_THROWS_AS(parse_vcd(header, wrong), ParameterError);
    CHECK_THROWS_AS(parse_vcd(header, VcdOptions{}), ParameterError);
}

TEST_CASE("PTRC round trips") {
    TraceFile tf;
    tf.catalog = SignalCatalog::numbered(131);
    tf.toggles = random_matrix(10007, 131, 5);
    const auto bytes = encode_trace(tf);
    const auto back = decode_trace(bytes);
    CHECK(back == tf);
    CHECK(encode_trace(back) == bytes);

    TraceFile mixed;
    mixed.catalog = SignalCatalog({{"a", SingleBit{}}, {"bus", Bus{7}}, {"g", GatedClock{"en"}}});
    mixed.toggles = random_matrix(9, 3, 6);
    mixed.power = PowerTrace{1, 2.5, -3, 0, 1e300, 4, 5, 6, 7};
    CHECK(decode_trace(encode_trace(mixed)) == mixed);

    TraceFile empty;
    empty.catalog = SignalCatalog::numbered(4);
    empty.toggles = ToggleMatrix(0, 4);
    empty.power = PowerTrace{};
    const auto e = decode_trace(encode_trace(empty));
    CHECK(e.toggles.n_cycles() == 0);
    CHECK(e == empty);
}

TEST_CASE("PTRC VCD ingestion round trips through a file") {
    VcdOptions opt;
    opt.clock = "clk";
    const auto parsed = parse_vcd(fixture("bus4.vcd"), opt);
    TraceFile tf{parsed.catalog, parsed.toggles, std::nullopt};
    const auto path = std::filesystem::temp_directory_path() / "apollo_unit_bus4.ptrc";
    write_trace(path, tf);
    const auto back = read_trace(path);
    CHECK(back == tf);
    CHECK(encode_trace(back) == io::read_bytes(path));
    std::filesystem::remove(path);
}

TEST_CASE("PTRC rejects corrupt input") {
    TraceFile tf;
    tf.catalog = SignalCatalog::numbered(3);
    tf.toggles = random_matrix(20, 3, 7);
    tf.power = PowerTrace(20, 1.0);
    const auto good = encode_trace(tf);

    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_trace(bad_magic), FormatError);

    auto truncated = good;
    truncated.resize(good.size() - 9);
    CHECK_THROWS_AS(decode_trace(truncated), FormatError);

    auto flipped = good;
    flipped[good.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_trace(flipped), FormatError);

    auto version = good;
    version[4] = 2;
    CHECK_THROWS_AS(decode_trace(version), FormatError);

    CHECK_THROWS_AS(decode_trace(std::vector<std::uint8_t>{}), FormatError);
}

}  // TEST_SUITE

#include "apollo/ptrc.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "apollo/errors.hpp"
#include "apollo/io.hpp"

namespace apollo::trace {
namespace {

constexpr std::uint8_t kTagSingle = 0;
constexpr std::uint8_t kTagBus = 1;
constexpr std::uint8_t kTagGated = 2;

class Writer {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        out_.insert(out_.end(), p, p + n);
    }
    template <typename T>
    void le(T value) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(value);
        for (std::size_t k = 0; k < sizeof(T); ++k) {
            out_.push_back(static_cast<std::uint8_t>(u & 0xFF));
            u = static_cast<U>(u >> 8);
        }
    }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        le(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }
    const std::vector<std::uint8_t>& data() const { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw FormatError("PTRC: truncated payload");
    }
    template <typename T>
    T le() {
        need(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t k = 0; k < sizeof(T); ++k) {
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(data_[pos_ + k])
                                                     << (8 * k));
        }
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::string str() {
        const auto len = le<std::uint32_t>();
        need(len);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), len);
        pos_ += len;
        return s;
    }
    bool match(const char (&tag)[5]) {
        if (data_.size() - pos_ < 4 || std::memcmp(data_.data() + pos_, tag, 4) != 0) return false;
        pos_ += 4;
        return true;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_trace(const TraceFile& trace) {
    const auto& tm = trace.toggles;
    if (trace.catalog.size() != tm.n_signals()) {
        throw DataError("PTRC: catalog has " + std::to_string(trace.catalog.size()) + " entries but matrix has " +
                        std::to_string(tm.n_signals()) + " columns");
    }
    if (trace.power && trace.power->size() != tm.n_cycles()) {
        throw DataError("PTRC: power trace length differs from cycle count");
    }

    Writer w;
    w.bytes("PTRC", 4);
    w.le(kPtrcVersion);
    w.le(static_cast<std::uint64_t>(tm.n_cycles()));
    w.le(static_cast<std::uint64_t>(tm.n_signals()));
    for (const auto& s : trace.catalog.signals()) {
        w.str(s.name);
        if (std::holds_alternative<SingleBit>(s.kind)) {
            w.le(kTagSingle);
        } else if (const auto* bus = std::get_if<Bus>(&s.kind)) {
            w.le(kTagBus);
            w.le(bus->width);
        } else {
            w.le(kTagGated);
            w.str(std::get<GatedClock>(s.kind).enable_name);
        }
    }
    for (const std::uint64_t word : tm.words()) w.le(word);
    if (trace.power) {
        w.bytes("PWRF", 4);
        for (const double v : *trace.power) w.f64(v);
    }
    const std::uint32_t crc = io::crc32(w.data());
    w.le(crc);
    return w.take();
}

TraceFile decode_trace(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "PTRC", 4) != 0) {
        throw FormatError("PTRC: magic-number mismatch");
    }
    if (bytes.size() < 8) throw FormatError("PTRC: truncated payload");
    const auto body = bytes.first(bytes.size() - 4);
    Reader crc_reader(bytes.last(4));
    const auto stored_crc = crc_reader.le<std::uint32_t>();

    Reader r(body);
    r.match("PTRC");
    const auto version = r.le<std::uint32_t>();
    if (version != kPtrcVersion) throw FormatError("PTRC: unsupported version " + std::to_string(version));
    const auto n = r.le<std::uint64_t>();
    const auto m = r.le<std::uint64_t>();
    // Each catalog entry takes at least 5 bytes; reject absurd headers before allocating.
    r.need(m * 5);

    std::vector<SignalInfo> signals;
    signals.reserve(m);
    for (std::uint64_t j = 0; j < m; ++j) {
        SignalInfo s;
        s.name = r.str();
        const auto tag = r.le<std::uint8_t>();
        switch (tag) {
            case kTagSingle: s.kind = SingleBit{}; break;
            case kTagBus: s.kind = Bus{r.le<std::uint32_t>()}; break;
            case kTagGated: s.kind = GatedClock{r.str()}; break;
            default: throw FormatError("PTRC: unknown signal kind tag " + std::to_string(tag));
        }
        signals.push_back(std::move(s));
    }

    const std::uint64_t wpc = (m + 63) / 64;
    if (wpc != 0 && n > r.remaining() / (8 * wpc)) throw FormatError("PTRC: truncated payload");
    ToggleMatrix tm(n, m);
    const std::uint64_t pad_mask = (m % 64) ? ~((std::uint64_t{1} << (m % 64)) - 1) : 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        auto row = tm.cycle_words(i);
        for (std::uint64_t k = 0; k < wpc; ++k) row[k] = r.le<std::uint64_t>();
        if (wpc && (row[wpc - 1] & pad_mask)) throw FormatError("PTRC: nonzero padding bits");
    }

    std::optional<PowerTrace> power;
    if (r.remaining() > 0) {
        if (!r.match("PWRF")) throw FormatError("PTRC: unexpected section after toggle payload");
        if (n > r.remaining() / 8) throw FormatError("PTRC: truncated payload");
        PowerTrace values(n);
        for (auto& v : values) v = r.f64();
        power = std::move(values);
    }
    if (r.remaining() != 0) throw FormatError("PTRC: trailing bytes after power section");
    if (io::crc32(body) != stored_crc) throw FormatError("PTRC: checksum failure");

    TraceFile out{SignalCatalog(std::move(signals)), std::move(tm), std::move(power)};
    if (out.power) {
        for (const double v : *out.power) {
            if (!std::isfinite(v)) throw FormatError("PTRC: non-finite power value");
        }
    }
    return out;
}

void write_trace(const std::filesystem::path& path, const TraceFile& trace) {
    io::write_atomic(path, encode_trace(trace));
}

TraceFile read_trace(const std::filesystem::path& path) {
    return decode_trace(io::read_bytes(path));
}

}  // namespace apollo::trace

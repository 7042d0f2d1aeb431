#pragma once
// Shared plumbing for the openact engine: error types, the warning sink,
// deterministic random substreams, number formatting and small text helpers.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace openact {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Bad input data (malformed files, unknown concepts, inconsistent ids).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file could not be parsed; carries the 1-based row (line) number.
class LoadError : public DataError {
public:
    LoadError(std::string source, std::size_t row, const std::string& what)
        : DataError(source + ":" + std::to_string(row) + ": " + what),
          source_(std::move(source)),
          row_(row) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t row() const noexcept { return row_; }

private:
    std::string source_;
    std::size_t row_;
};

/// Invalid command-line or configuration values.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Warnings
// ---------------------------------------------------------------------------

namespace log {

using Sink = std::function<void(std::string_view)>;

namespace detail {
struct State {
    std::mutex mutex;
    Sink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    std::atomic<std::size_t> count{0};
};
inline State& state() {
    static State s;
    return s;
}
} // namespace detail

inline void warn(std::string_view msg) {
    auto& s = detail::state();
    s.count.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard lock(s.mutex);
    if (s.sink) s.sink(msg);
}

inline std::size_t warning_count() { return detail::state().count.load(); }

/// Replaces the sink; returns the previous one.
inline Sink set_sink(Sink sink) {
    auto& s = detail::state();
    std::lock_guard lock(s.mutex);
    std::swap(s.sink, sink);
    return sink;
}

/// Collects warnings for the lifetime of the object (used by tests and the CLI).
class ScopedCapture {
public:
    ScopedCapture()
        : previous_(set_sink([this](std::string_view m) { messages_.emplace_back(m); })) {}
    ~ScopedCapture() { set_sink(std::move(previous_)); }
    ScopedCapture(const ScopedCapture&) = delete;
    ScopedCapture& operator=(const ScopedCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }

private:
    std::vector<std::string> messages_;
    Sink previous_;
};

} // namespace log

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed of the named substream `name`/`index` under `root`.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ fnv1a(name)) + index);
}

/// mt19937_64 with distribution code of our own: the engine's output sequence
/// is fixed by the standard, the library distributions are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n > 0. Rejection sampling, no modulo bias.
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = n;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

/// Splits on `sep` without quoting rules; fields are not trimmed.
inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

/// Splits on runs of whitespace.
inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

/// Shortest text that parses back to exactly `v`.
inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// ConceptId
// ---------------------------------------------------------------------------

/// Canonical concept label: lowercase, runs of whitespace and underscores folded
/// to a single underscore, no leading or trailing separators.
class ConceptId {
public:
    ConceptId() = default;

    explicit ConceptId(std::string_view raw) : text_(canonicalize(raw)) {
        if (text_.empty()) throw DataError("empty concept identifier");
    }

    static std::string canonicalize(std::string_view raw) {
        std::string out;
        out.reserve(raw.size());
        bool pending_sep = false;
        for (unsigned char c : trim(raw)) {
            if (std::isspace(c) || c == '_') {
                pending_sep = true;
                continue;
            }
            if (pending_sep && !out.empty()) out.push_back('_');
            pending_sep = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        }
        return out;
    }

    const std::string& str() const noexcept { return text_; }
    bool empty() const noexcept { return text_.empty(); }

    friend bool operator==(const ConceptId&, const ConceptId&) = default;
    friend auto operator<=>(const ConceptId&, const ConceptId&) = default;
    friend std::ostream& operator<<(std::ostream& os, const ConceptId& c) { return os << c.text_; }

private:
    std::string text_;
};

inline namespace literals {
inline ConceptId operator""_c(const char* s, std::size_t n) { return ConceptId(std::string_view(s, n)); }
} // namespace literals

using FrameId = std::string;
using ClipId = std::string;

} // namespace openact

template <>
struct std::hash<openact::ConceptId> {
    std::size_t operator()(const openact::ConceptId& c) const noexcept {
        return std::hash<std::string>{}(c.str());
    }
};

#pragma once

#include <array>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace superdec {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension/shape contract violations (names the offending dimension in the message).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid argument values (non-finite input, zero energy, bad enum, ...).
class ValueError : public Error {
public:
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Autodiff graph misuse (non-scalar loss, double backward, mutating an op result).
class GraphError : public Error {
public:
    explicit GraphError(const std::string& msg) : Error(msg) {}
};

// Malformed configuration; carries the JSON field path for machine-readable reporting.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& msg)
        : Error(field + ": " + msg), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

// Dense rank-4 extent [batch, channel, height, width].
struct Shape4 {
    std::int64_t b = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const { return b * c * h * w; }
    bool operator==(const Shape4&) const = default;

    std::int64_t operator[](int i) const {
        switch (i) {
            case 0: return b;
            case 1: return c;
            case 2: return h;
            default: return w;
        }
    }

    std::string str() const {
        return "[" + std::to_string(b) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + "]";
    }
};

inline void check_same_shape(const Shape4& a, const Shape4& b, const char* what) {
    if (!(a == b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------
//
// Self-contained splitmix64/xoshiro-free generator so streams are identical
// across standard-library implementations. Normal deviates use Box-Muller.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed != 0 ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = next_double(), u2 = next_double();
        while (u1 <= 1e-300) u1 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mean + stddev * r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::uint64_t hash_name(std::uint64_t seed, const std::string& name) {
    // FNV-1a over the name mixed with the seed; gives each parameter an
    // order-independent stream so models sharing names share initial values.
    std::uint64_t h = 1469598103934665603ull ^ seed;
    for (unsigned char ch : name) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace superdec

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace glyphlm {

/// Deterministic 64-bit RNG (splitmix64). All randomness in the project goes
/// through this class so that runs reproduce bit-identically across compilers
/// and standard libraries; std:: distributions are implementation-defined and
/// are deliberately not used.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1) with 53 bits of precision.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller (no cached spare: one draw per call,
    /// so interleaved consumers stay reproducible).
    double gaussian() {
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    /// Normal(0, stddev) truncated to +/- 2 stddev by rejection.
    double truncated_normal(double stddev) {
        double g = gaussian();
        while (g < -2.0 || g > 2.0) g = gaussian();
        return g * stddev;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = std::size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Derive an independent stream, e.g. one per purpose or worker.
    Rng fork(std::uint64_t stream_tag) {
        return Rng(next_u64() ^ (stream_tag * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull));
    }

  private:
    std::uint64_t state_;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xCBF29CE484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace glyphlm

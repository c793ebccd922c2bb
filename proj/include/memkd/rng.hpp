#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace memkd {

/// Deterministic PRNG stream. mt19937_64 underneath, but all derived draws
/// (doubles, bounded ints, shuffles) are produced here so results do not
/// depend on libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of entropy.
    double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) { return engine_() % n; }

    /// Standard normal via Box-Muller.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    /// Sub-stream derivation: mixes the given words into a fresh seed so
    /// per-(run, epoch, step) streams are independent of evaluation order.
    static Rng derive(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the four words
        for (std::uint64_t w : {base, a, b, c}) {
            for (int i = 0; i < 8; ++i) {
                h ^= (w >> (8 * i)) & 0xff;
                h *= 1099511628211ull;
            }
        }
        return Rng(h);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace memkd

#pragma once
#include <cmath>
#include <cstdint>

namespace stoptree {

// SplitMix64: counter-based 64-bit generator. Every stochastic routine in the
// library takes an explicit seed or a child stream derived by a fixed offset,
// so whole experiments replay bit-identically regardless of scheduling.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // uniform in [0,1), 53-bit resolution
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Box-Muller; consumes two uniforms per pair, second value cached.
    // Avoids std::normal_distribution, whose output is implementation-defined.
    double next_normal(double mean = 0.0, double sd = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sd * spare_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + sd * r * std::cos(theta);
    }

    // integer in [0, bound) by rejection; bound >= 1
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t v = next_u64();
            if (v >= threshold) return v % bound;
        }
    }

    // independent substream at a fixed offset from this generator's seed
    Rng child(std::uint64_t offset) const {
        return Rng(mix(state_ + (offset + 1) * 0xD1B54A32D192ED03ULL));
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace stoptree

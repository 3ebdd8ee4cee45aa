#pragma once

#include <cstdint>
#include <random>

namespace oppshuffle {

// SplitMix64 finalizer, used to derive independent engine seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seedable, splittable random stream.
///
/// All sampling is implemented here on top of the raw 64-bit engine output
/// rather than through std::*_distribution, whose algorithms are left to the
/// standard library vendor. A stream is therefore bit-reproducible on any
/// platform from its seed.
class random_stream {
public:
    using result_type = std::uint64_t;

    explicit random_stream(std::uint64_t seed) : engine_(mix64(seed)), seed_(seed) {}

    /// Stream for one trial of an experiment; independent of scheduling.
    static random_stream for_trial(std::uint64_t seed, std::uint64_t trial_index) {
        return random_stream(mix64(seed ^ mix64(trial_index + 0x632be59bd9b4e019ULL)));
    }

    /// Child stream keyed by `salt`. Does not advance this stream.
    random_stream split(std::uint64_t salt) const {
        return random_stream(mix64(seed_ + mix64(salt ^ 0xd1b54a32d192ed03ULL)));
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return engine_(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        // Rejection on the top of the range removes modulo bias.
        const std::uint64_t limit = max() - max() % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

} // namespace oppshuffle

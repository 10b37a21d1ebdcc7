#pragma once

// Seeded random streams.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The distributions below are written out instead of using
// <random>'s distribution classes, which are implementation-defined, so a
// given seed produces the same fault map and the same CSVs on every
// toolchain.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace rowhammer {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Derive an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x5851F42D4C957F2DULL));
}

// Stream tags, so fault sampling and mitigation randomness never share draws.
enum class Stream : std::uint64_t {
    FaultMap = 1,
    RepeatNoise = 2,
    Mitigation = 3,
    MonteCarlo = 4,
};

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, Stream stream) : engine_(derive_seed(seed, static_cast<std::uint64_t>(stream))) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 bits of resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi], unbiased (rejection sampling).
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi)
    {
        const std::uint64_t span = hi - lo;
        if (span == std::numeric_limits<std::uint64_t>::max())
            return engine_();
        const std::uint64_t range = span + 1;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % range);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return lo + x % range;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Number of failures before the first success of a Bernoulli(p) sequence.
    /// Saturates at UINT64_MAX when p == 0.
    std::uint64_t geometric(double p)
    {
        if (p >= 1.0)
            return 0;
        if (p <= 0.0)
            return std::numeric_limits<std::uint64_t>::max();
        // 1 - U lies in (0, 1], so the log is finite.
        const double u = 1.0 - uniform01();
        const double g = std::floor(std::log(u) / std::log1p(-p));
        if (g >= 1.8e19)
            return std::numeric_limits<std::uint64_t>::max();
        return static_cast<std::uint64_t>(g);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace rowhammer

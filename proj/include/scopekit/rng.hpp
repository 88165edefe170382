#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace scopekit {

/// Derives an independent sub-seed from a root seed, a purpose tag and an index.
/// Pure function; the same inputs always give the same seed.
std::uint64_t subSeed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

/// Thin wrapper over mt19937_64 with portable real-number draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) built from the top 53 bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }
    std::uint64_t next() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// FNV-1a, used for config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace scopekit

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace perfgraph {

/// Seeded, splittable pseudo-random generator (SplitMix64).
///
/// Every stochastic operation in the library takes an explicit Rng so that
/// runs are reproducible bit-for-bit from a single root seed. Streams for
/// sub-tasks (repetitions, folds, epochs, parameter inits) are derived with
/// child(), which mixes a tag into the base seed. Derivation depends only on
/// (seed, tag), never on draw order, so independent jobs can derive their
/// streams in any order.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 bits of randomness.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Derive an independent stream keyed by a tag. Stateless with respect to
    /// draws already made on this generator.
    Rng child(std::string_view tag) const { return Rng(mix(seed_ ^ fnv1a(tag))); }

    Rng child(std::string_view tag, std::uint64_t index) const {
        return Rng(mix(mix(seed_ ^ fnv1a(tag)) ^ index));
    }

    std::uint64_t seed() const { return seed_; }

  private:
    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace perfgraph

#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace tiae {

/// xoshiro256** with SplitMix64 seeding.
///
/// The generator is fully specified by its recurrence so that streams are
/// identical across platforms and languages:
///
///   result = rotl(s1 * 5, 7) * 9
///   t = s1 << 17
///   s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
///
/// The four state words are filled from successive SplitMix64 outputs of the
/// seed (state += 0x9E3779B97F4A7C15; z = state; z = (z ^ (z >> 30)) *
/// 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)).
///
/// Derived draws avoid std:: distributions, whose algorithms are
/// implementation-defined:
///   uniform01()       = (next() >> 11) * 2^-53
///   uniform_index(n)  = rejection sampling on next() with bound
///                       2^64 - (2^64 mod n), then value mod n
class Rng {
public:
    using State = std::array<std::uint64_t, 4>;

    explicit Rng(std::uint64_t seed = 0);

    static Rng from_state(const State& state);

    std::uint64_t next();
    double uniform01();
    /// Uniform real in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    const State& state() const noexcept { return state_; }

private:
    State state_{};
};

/// In-place Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace tiae

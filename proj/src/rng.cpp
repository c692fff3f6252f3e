#include "tiae/rng.hpp"

#include <stdexcept>

namespace tiae {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) {
        word = splitmix64(sm);
    }
}

Rng Rng::from_state(const State& state) {
    if (state == State{}) {
        throw std::invalid_argument("xoshiro256** state must not be all zero");
    }
    Rng rng;
    rng.state_ = state;
    return rng;
}

std::uint64_t Rng::next() {
    auto& s = state_;
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
}

double Rng::uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: empty range");
    }
    // 2^64 mod n, computed without overflow.
    const std::uint64_t remainder = (0 - n) % n;
    const std::uint64_t limit = 0 - remainder; // 2^64 - remainder, wraps to 0 when remainder == 0
    for (;;) {
        const std::uint64_t x = next();
        if (remainder == 0 || x < limit) {
            return x % n;
        }
    }
}

} // namespace tiae

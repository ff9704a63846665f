#pragma once

#include <cstdint>
#include <cmath>

namespace blochsim {

// splitmix64 step; also used to expand (master_seed, stream_index) pairs
// into generator states.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// xoshiro256** with a fully specified seeding contract:
// the four state words are the first four splitmix64 outputs of
// (master_seed XOR splitmix64(stream_index + 1)).  Streams with distinct
// indices are statistically independent, and the same (master_seed, index)
// pair always reproduces the same sequence, independent of execution order.
class Xoshiro256 {
  public:
    Xoshiro256(std::uint64_t master_seed, std::uint64_t stream_index) {
        std::uint64_t mix = stream_index + 1;
        std::uint64_t seed = master_seed ^ splitmix64(mix);
        for (auto& word : state_) word = splitmix64(seed);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t state_[4];
};

// Standard normal draws via Box-Muller on top of Xoshiro256.  Hand-rolled
// rather than std::normal_distribution so the byte stream does not depend
// on the standard library implementation.
class GaussianStream {
  public:
    GaussianStream(std::uint64_t master_seed, std::uint64_t stream_index)
        : rng_(master_seed, stream_index) {}

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so log() is finite
        const double u1 = (static_cast<double>(rng_.next() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = rng_.uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    std::uint64_t next_u64() { return rng_.next(); }

  private:
    Xoshiro256 rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace blochsim

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace partdisent {

/// Thin wrapper around a 64-bit Mersenne twister with explicit seeding.
///
/// Every stochastic operation in the library takes a SeededRng by reference.
/// Child streams are derived by hashing (seed, key...) so that, for example,
/// the pair built for sample b at step t does not depend on how many random
/// numbers earlier steps consumed.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    static std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

    SeededRng derive(std::initializer_list<std::uint64_t> keys) const {
        return SeededRng(mix(seed_, keys));
    }

    std::uint64_t seed() const { return seed_; }

    /// Uniform in [lo, hi). Returns lo exactly when lo == hi.
    double uniform(double lo, double hi);
    double normal(double mean, double stddev);
    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    bool bernoulli(double p);
    std::uint64_t next_u64() { return engine_(); }

    std::string serialize() const;
    void deserialize(const std::string& state);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace partdisent

#include "partdisent/rng.hpp"

#include <sstream>

namespace partdisent {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t SeededRng::mix(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(seed);
    for (auto k : keys) {
        h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    }
    return h;
}

double SeededRng::uniform(double lo, double hi) {
    const double u = std::generate_canonical<double, 53>(engine_);
    return lo + (hi - lo) * u;
}

double SeededRng::normal(double mean, double stddev) {
    if (stddev <= 0.0) return mean;
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
}

std::int64_t SeededRng::uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> dist(lo, hi);
    return dist(engine_);
}

bool SeededRng::bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform(0.0, 1.0) < p;
}

std::string SeededRng::serialize() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
}

void SeededRng::deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> seed_ >> engine_;
}

}  // namespace partdisent

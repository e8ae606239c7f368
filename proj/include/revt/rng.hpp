#pragma once

#include <cmath>
#include <cstdint>

namespace revt {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Combine values into a derived seed (order-sensitive).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

// Counter-based PRNG: the n-th draw of a stream is a pure function of
// (seed, stream id, n), so draws are reproducible and streams with
// distinct ids are independent.
class RngStream {
public:
    RngStream() = default;
    RngStream(uint64_t seed, uint64_t stream_id) : seed_(seed), stream_(stream_id) {}

    uint64_t next_u64() {
        return splitmix64(seed_ ^ splitmix64(stream_ ^ splitmix64(counter_++)));
    }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float uniform_f() { return static_cast<float>(uniform()); }

    // [lo, hi]
    double uniform_range(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // integer in [lo, hi], inclusive
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal via Box-Muller, two draws per value
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Beta(a, b) for small integer shapes via sums of exponentials.
    double beta_int(int a, int b) {
        const double g1 = gamma_int(a);
        const double g2 = gamma_int(b);
        return g1 / (g1 + g2);
    }

    // Child stream with an independent id; parent state is not consumed.
    RngStream fork(uint64_t sub) const {
        return RngStream(seed_, mix_seed(stream_, sub));
    }

    uint64_t seed() const { return seed_; }
    uint64_t stream_id() const { return stream_; }

private:
    double gamma_int(int shape) {
        double acc = 0.0;
        for (int i = 0; i < shape; ++i) acc -= std::log(1.0 - uniform());
        return acc;
    }

    uint64_t seed_ = 0;
    uint64_t stream_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace revt

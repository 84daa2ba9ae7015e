#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace strgode {

// Deterministic random stream. All value mappings are pinned here instead of
// relying on std::uniform_*_distribution, whose output is implementation
// defined; the mt19937_64 sequence itself is fixed by the standard.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), unbiased
    std::uint64_t integer(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::integer: n must be positive");
        const std::uint64_t rem = std::numeric_limits<std::uint64_t>::max() % n;
        const std::uint64_t bound = std::numeric_limits<std::uint64_t>::max() - rem;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x > bound);
        return x % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Knuth product method; fine for the desk-scale rates used here.
    long poisson(double lambda) {
        if (lambda < 0.0) throw std::invalid_argument("Rng::poisson: negative rate");
        if (lambda == 0.0) return 0;
        if (lambda > 700.0) throw std::invalid_argument("Rng::poisson: rate too large");
        const double limit = std::exp(-lambda);
        long k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    double exponential(double mean) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -mean * std::log(u);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(integer(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent-looking stream from a base seed and a stream index.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

} // namespace strgode

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace gmeasure {

// splitmix64 step; also used to mix keys into stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a) {
    std::uint64_t s = seed ^ (a * 0xff51afd7ed558ccdULL + 0x2545f4914f6cdd1dULL);
    return splitmix64(s);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_key(mix_key(seed, a), b);
}

// Small deterministic generator (platform-independent output) built on
// splitmix64, with Box-Muller normals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static Rng keyed(std::uint64_t seed, std::uint64_t a) { return Rng(mix_key(seed, a)); }
    static Rng keyed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
        return Rng(mix_key(seed, a, b));
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::vector<float> normal_vector(std::size_t n) {
        std::vector<float> v(n);
        for (auto& x : v) x = static_cast<float>(normal());
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace gmeasure

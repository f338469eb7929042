#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace icdit {

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// All randomness in the project flows from one root seed through named
// substreams, so each subsystem (dataset, dropout, sampler, ...) is
// reproducible on its own.
inline uint64_t derive_seed(uint64_t root, std::string_view name) {
    return root ^ fnv1a64(name);
}

// mt19937 supplies the raw bits; uniform/normal are built by hand so the
// stream does not depend on the standard library's distribution
// implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        std::seed_seq seq{static_cast<uint32_t>(seed & 0xffffffffull),
                          static_cast<uint32_t>(seed >> 32)};
        gen_.seed(seq);
    }

    uint32_t next_u32() { return gen_(); }

    // uniform in [0,1) with 53 random bits
    double uniform01() {
        uint64_t a = next_u32() >> 5;  // 27 bits
        uint64_t b = next_u32() >> 6;  // 26 bits
        return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) / 9007199254740992.0;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller with a cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // uniform integer in [lo, hi] via rejection
    int uniform_int(int lo, int hi) {
        uint32_t span = static_cast<uint32_t>(hi - lo) + 1u;
        uint32_t limit = 0xffffffffu - (0xffffffffu % span + 1u) % span;
        uint32_t x = next_u32();
        while (x > limit) {
            x = next_u32();
        }
        return lo + static_cast<int>(x % span);
    }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace icdit

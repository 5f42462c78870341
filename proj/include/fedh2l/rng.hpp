// Deterministic random streams. All sampling code lives here so that runs
// do not depend on the standard library's distribution implementations,
// which are free to differ between toolchains.
#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <vector>
#include <cmath>

namespace fedh2l {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Named sub-streams of one run seed. Every consumer of randomness gets its
// own stream so that adding draws in one place never shifts another.
enum class Stream : std::uint64_t {
    Data = 0x64617461,          // domain construction and splits
    Init = 0x696e6974,          // per-node weight init
    LocalSampler = 0x6c6f63,    // per-node private batch order
    PublicSampler = 0x707562,   // per-node public batch order
    Pairing = 0x70616972,       // async gossip pair choice
    Participation = 0x70617274, // fedavg client subsampling
    Distill = 0x666d64,         // fedmd consensus batch order
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream stream, std::uint64_t lane = 0) {
    std::uint64_t s = splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(stream)));
    return splitmix64(s ^ splitmix64(lane + 0x9e3779b97f4a7c15ULL));
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; second value of each pair is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Unbiased index in [0, n). Rejection sampling; never truncates.
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("RngStream::index: n must be positive");
        const std::uint64_t un = n;
        const std::uint64_t threshold = (0 - un) % un;  // 2^64 mod n
        std::uint64_t r = gen_();
        while (r < threshold) r = gen_();
        return static_cast<std::size_t>(r % un);
    }

    // Fisher-Yates, back to front.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[index(i)]);
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace fedh2l

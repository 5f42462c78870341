// FNV-1a 64-bit, used for config fingerprints and parameter trajectory
// hashes. Incremental so long trajectories never materialize a buffer.
#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace fedh2l {

struct Fnv64 {
    std::uint64_t state = 1469598103934665603ULL;

    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state ^= p[i];
            state *= 1099511628211ULL;
        }
    }

    void update_u64(std::uint64_t v) { update(&v, 8); }

    void update_f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        update_u64(bits);
    }

    void update_f64(const std::vector<double>& v) {
        for (double x : v) update_f64(x);
    }
};

inline std::uint64_t fnv1a64(const std::string& s) {
    Fnv64 h;
    h.update(s.data(), s.size());
    return h.state;
}

inline std::string hex16(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace fedh2l

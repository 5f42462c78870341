// Teaching signal exchanged between nodes: soft labels over the sender's
// own public batch, the sender's batch confidence, and the sample ids the
// receiver uses to look the inputs up in its public store.
//
// Wire layout (little-endian):
//   header  u32 sender | i32 round | u32 batch | u32 classes      (16 bytes)
//   payload f32 acc | u64 ids[batch] | f32 soft[batch * classes]
//
// payload = 4 + 8 B + 4 B M bytes. Models never cross the wire; that gap is
// the whole bandwidth story, so payload and header are accounted separately.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace fedh2l {

struct TeachingSignal {
    std::uint32_t sender = 0;
    std::int32_t round = 0;
    std::uint32_t classes = 0;
    float acc = 0.0f;                    // sender's self-measured batch accuracy
    std::vector<std::uint64_t> ids;      // public-sample ids, length = batch
    std::vector<float> soft;             // row-major batch x classes probabilities

    std::size_t batch() const { return ids.size(); }
};

inline std::size_t signal_header_bytes() { return 16; }

inline std::size_t signal_payload_bytes(std::size_t batch, std::size_t classes) {
    return 4 + batch * 8 + batch * classes * 4;
}

inline std::size_t signal_payload_bytes(const TeachingSignal& s) {
    return signal_payload_bytes(s.batch(), s.classes);
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::uint8_t* p;
    std::size_t left;

    void need(std::size_t n) const {
        if (left < n) throw std::runtime_error("teaching signal: truncated message");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_signal(const TeachingSignal& s) {
    if (s.soft.size() != s.batch() * s.classes)
        throw std::invalid_argument("encode_signal: soft label shape mismatch");
    if (s.batch() == 0 || s.classes == 0)
        throw std::invalid_argument("encode_signal: empty signal");
    std::vector<std::uint8_t> out;
    out.reserve(signal_header_bytes() + signal_payload_bytes(s));
    detail::put_u32(out, s.sender);
    detail::put_u32(out, static_cast<std::uint32_t>(s.round));
    detail::put_u32(out, static_cast<std::uint32_t>(s.batch()));
    detail::put_u32(out, s.classes);
    detail::put_f32(out, s.acc);
    for (std::uint64_t id : s.ids) detail::put_u64(out, id);
    for (float v : s.soft) detail::put_f32(out, v);
    return out;
}

// Decode and validate: per-row probabilities must sum to 1 within 1e-3
// (f32 rounding budget), entries must be finite and non-negative, and the
// confidence must lie in [0, 1].
inline TeachingSignal decode_signal(const std::vector<std::uint8_t>& bytes) {
    detail::Reader r{bytes.data(), bytes.size()};
    TeachingSignal s;
    s.sender = r.u32();
    s.round = static_cast<std::int32_t>(r.u32());
    const std::uint32_t batch = r.u32();
    s.classes = r.u32();
    if (batch == 0 || s.classes == 0)
        throw std::runtime_error("teaching signal: empty batch or class count");
    s.acc = r.f32();
    if (!(s.acc >= 0.0f && s.acc <= 1.0f))
        throw std::runtime_error("teaching signal: confidence outside [0, 1]");
    s.ids.resize(batch);
    for (auto& id : s.ids) id = r.u64();
    s.soft.resize(static_cast<std::size_t>(batch) * s.classes);
    for (auto& v : s.soft) v = r.f32();
    if (r.left != 0) throw std::runtime_error("teaching signal: trailing bytes");
    for (std::size_t b = 0; b < batch; ++b) {
        double row = 0.0;
        for (std::size_t c = 0; c < s.classes; ++c) {
            const float v = s.soft[b * s.classes + c];
            if (!std::isfinite(v) || v < 0.0f)
                throw std::runtime_error("teaching signal: invalid probability");
            row += v;
        }
        if (std::fabs(row - 1.0) > 1e-3)
            throw std::runtime_error("teaching signal: row " + std::to_string(b) +
                                     " does not sum to 1");
    }
    return s;
}

// Teacher rows as doubles for loss math. Row b of the result is the
// sender's predictive distribution for sample ids[b].
inline Matrix signal_probs(const TeachingSignal& s) {
    Matrix p(s.batch(), s.classes);
    for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = static_cast<double>(s.soft[i]);
    return p;
}

}  // namespace fedh2l

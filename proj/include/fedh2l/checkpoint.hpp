// Model checkpoint files. Binary little-endian layout:
//   magic "F2LC" | u32 version (1) | u32 layer count L+1 | u64 dims[L+1]
//   | f64 params[param_count] in the canonical flat order.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nn.hpp"

namespace fedh2l {

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
    out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
    out.write(b, 8);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(path + ": truncated checkpoint");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error(path + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline void save_params(const ModelParams& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    out.write("F2LC", 4);
    detail::write_u32(out, 1);
    detail::write_u32(out, static_cast<std::uint32_t>(m.layer_dims.size()));
    for (std::size_t d : m.layer_dims) detail::write_u64(out, d);
    const FlatVector flat = flatten(m);
    for (double v : flat) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        detail::write_u64(out, bits);
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline ModelParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "F2LC", 4) != 0)
        throw std::runtime_error(path + ": not a checkpoint file");
    const std::uint32_t version = detail::read_u32(in, path);
    if (version != 1)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));
    const std::uint32_t ndims = detail::read_u32(in, path);
    if (ndims < 2) throw std::runtime_error(path + ": malformed layer dims");
    std::vector<std::size_t> dims(ndims);
    for (auto& d : dims) {
        d = static_cast<std::size_t>(detail::read_u64(in, path));
        if (d == 0) throw std::runtime_error(path + ": zero layer width");
    }
    ModelParams m;
    m.layer_dims = dims;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        m.weights.emplace_back(dims[k + 1], dims[k]);
        m.biases.emplace_back(dims[k + 1], 0.0);
    }
    FlatVector flat(param_count(dims));
    for (double& v : flat) {
        const std::uint64_t bits = detail::read_u64(in, path);
        std::memcpy(&v, &bits, 8);
    }
    char extra;
    if (in.read(&extra, 1)) throw std::runtime_error(path + ": trailing bytes");
    unflatten(flat, m);
    return m;
}

}  // namespace fedh2l

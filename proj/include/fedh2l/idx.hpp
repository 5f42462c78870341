// IDX image/label file reader (the MNIST container format). Big-endian
// headers: magic 0x00000803 + count + rows + cols for images, magic
// 0x00000801 + count for labels. Pixels are scaled to [0, 1].
#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "data.hpp"

namespace fedh2l {

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(path + ": truncated idx header");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace detail

inline LabeledSet load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw std::runtime_error(images_path + ": cannot open");
    if (detail::read_be_u32(fi, images_path) != 0x00000803u)
        throw std::runtime_error(images_path + ": not an idx image file");
    const std::uint32_t n = detail::read_be_u32(fi, images_path);
    const std::uint32_t rows = detail::read_be_u32(fi, images_path);
    const std::uint32_t cols = detail::read_be_u32(fi, images_path);
    if (rows == 0 || cols == 0) throw std::runtime_error(images_path + ": zero image shape");

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw std::runtime_error(labels_path + ": cannot open");
    if (detail::read_be_u32(fl, labels_path) != 0x00000801u)
        throw std::runtime_error(labels_path + ": not an idx label file");
    const std::uint32_t nl = detail::read_be_u32(fl, labels_path);
    if (nl != n)
        throw std::runtime_error(labels_path + ": label count " + std::to_string(nl) +
                                 " does not match image count " + std::to_string(n));

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(pixels);
    LabeledSet set;
    set.x = Matrix(n, pixels);
    set.y.resize(n);
    set.ids.resize(n);
    set.img_h = static_cast<int>(rows);
    set.img_w = static_cast<int>(cols);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels)))
            throw std::runtime_error(images_path + ": truncated image data at sample " +
                                     std::to_string(i));
        double* row = set.x.row(i);
        for (std::size_t p = 0; p < pixels; ++p) row[p] = static_cast<double>(buf[p]) / 255.0;
        unsigned char lab;
        if (!fl.read(reinterpret_cast<char*>(&lab), 1))
            throw std::runtime_error(labels_path + ": truncated label data at sample " +
                                     std::to_string(i));
        set.y[i] = static_cast<int>(lab);
        if (set.y[i] > max_label) max_label = set.y[i];
        set.ids[i] = i;
    }
    set.classes = max_label + 1;
    return set;
}

}  // namespace fedh2l

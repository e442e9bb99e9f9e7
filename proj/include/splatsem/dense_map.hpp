// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "splatsem/errors.hpp"

namespace splatsem {

/// Row-major H x W x C grid of doubles, channel-fastest. Used for images,
/// depth maps (C=1) and feature maps alike.
struct DenseMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    DenseMap() = default;
    DenseMap(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(checked_size(h, w, c), fill) {}

    static std::size_t checked_size(int h, int w, int c) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw ShapeMismatch("DenseMap dimensions must be positive");
        return static_cast<std::size_t>(h) * w * c;
    }

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double at(int y, int x, int c) const { return data[index(y, x, c)]; }
    double& at(int y, int x, int c) { return data[index(y, x, c)]; }

    bool same_shape(const DenseMap& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    std::size_t size() const { return data.size(); }
};

namespace detail {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32le(std::istream& is, std::size_t& offset) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ParseError("truncated file, expected u32", offset);
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32le(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32le(os, u);
}

inline float read_f32le(std::istream& is, std::size_t& offset) {
    std::uint32_t u = read_u32le(is, offset);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

// DMAP file: magic "DMAP", u32 H, W, C, then H*W*C f32 row-major
// channel-fastest. All little-endian.
inline void save_dmap(const DenseMap& map, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for write: " + path);
    os.write("DMAP", 4);
    detail::write_u32le(os, static_cast<std::uint32_t>(map.height));
    detail::write_u32le(os, static_cast<std::uint32_t>(map.width));
    detail::write_u32le(os, static_cast<std::uint32_t>(map.channels));
    for (double v : map.data) detail::write_f32le(os, static_cast<float>(v));
    if (!os) throw Error("write failed: " + path);
}

inline DenseMap load_dmap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open: " + path);
    std::size_t offset = 0;
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DMAP", 4) != 0)
        throw ParseError("bad DMAP magic in " + path, 0);
    offset = 4;
    std::uint32_t h = detail::read_u32le(is, offset);
    std::uint32_t w = detail::read_u32le(is, offset);
    std::uint32_t c = detail::read_u32le(is, offset);
    if (h == 0 || w == 0 || c == 0)
        throw ParseError("zero DMAP dimension in " + path, 4);
    DenseMap map(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (std::size_t i = 0; i < map.data.size(); ++i) {
        std::size_t at = offset;
        float v = detail::read_f32le(is, offset);
        if (!std::isfinite(v))
            throw ParseError("non-finite value in " + path, at);
        map.data[i] = static_cast<double>(v);
    }
    return map;
}

// Binary P6, 8-bit, values rounded half-up from [0,1] (clamped first).
inline void write_ppm(const DenseMap& image, const std::string& path) {
    if (image.channels != 3)
        throw ShapeMismatch("PPM output needs a 3-channel map");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for write: " + path);
    os << "P6\n" << image.width << " " << image.height << "\n255\n";
    for (double v : image.data) {
        double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        unsigned char byte = static_cast<unsigned char>(std::floor(clamped * 255.0 + 0.5));
        os.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!os) throw Error("write failed: " + path);
}

}  // namespace splatsem

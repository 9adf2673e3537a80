#pragma once

#include <cstdint>
#include <vector>

#include "habitus/common.hpp"

namespace habitus {

// Row-major raster, row 0 at the top.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    T& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
    const T& at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
    bool in_bounds(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }
    std::size_t size() const { return data.size(); }
};

using GrayImage = Image<double>;
using ByteImage = Image<std::uint8_t>;
using MaskImage = Image<std::uint8_t>;  // 0 = background, 1 = foreground

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};
using RgbImage = Image<Rgb>;

// Binary PGM (P5). 8-bit uses maxval 255; 16-bit uses maxval 65535, MSB first.
void write_pgm8(const fs::path& path, const ByteImage& img);
ByteImage read_pgm8(const fs::path& path);
void write_pgm16(const fs::path& path, const Image<std::uint16_t>& img);
Image<std::uint16_t> read_pgm16(const fs::path& path);

// Minimal RGB8 PNG writer (zlib-deflated, filter 0 scanlines).
void write_png_rgb(const fs::path& path, const RgbImage& img);

}  // namespace habitus

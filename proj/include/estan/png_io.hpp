#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "estan/error.hpp"

namespace estan::io {

struct GrayImage {
    int h = 0, w = 0;
    std::vector<uint8_t> v;  // row-major

    GrayImage() = default;
    GrayImage(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}
    uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
};

/// Decodes an 8-bit grayscale PNG; any other color type or depth is a
/// format error.
GrayImage read_gray_png(const std::string& path);

void write_gray_png(const std::string& path, const GrayImage& img);

/// (height, width) from the PNG header alone, without decoding pixels.
std::pair<int, int> read_png_dims(const std::string& path);

}  // namespace estan::io

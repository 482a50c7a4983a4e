#include <cstdio>
#include <cstring>
#include <memory>

#include <png.h>

#include "estan/png_io.hpp"

namespace estan::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_to_exception(png_structp, png_const_charp msg) {
    throw FormatError(std::string("png: ") + msg);
}

void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

GrayImage read_gray_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open image: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_error_to_exception, png_warning_ignore);
    if (!png) throw IoError("png reader allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png info allocation failed");
    }
    try {
        png_init_io(png, f.get());
        png_read_info(png, info);
        const int depth = png_get_bit_depth(png, info);
        const int color = png_get_color_type(png, info);
        if (color != PNG_COLOR_TYPE_GRAY || depth != 8)
            throw FormatError(path + ": expected 8-bit grayscale PNG (color type " +
                              std::to_string(color) + ", depth " +
                              std::to_string(depth) + ")");
        GrayImage img(static_cast<int>(png_get_image_height(png, info)),
                      static_cast<int>(png_get_image_width(png, info)));
        std::vector<png_bytep> rows(img.h);
        for (int y = 0; y < img.h; ++y)
            rows[y] = img.v.data() + static_cast<size_t>(y) * img.w;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        png_destroy_read_struct(&png, &info, nullptr);
        return img;
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

void write_gray_png(const std::string& path, const GrayImage& img) {
    if (img.h < 1 || img.w < 1) throw ValueError("cannot write empty image");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open image for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_to_exception, png_warning_ignore);
    if (!png) throw IoError("png writer allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png info allocation failed");
    }
    try {
        png_init_io(png, f.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
                     static_cast<png_uint_32>(img.h), 8, PNG_COLOR_TYPE_GRAY,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<png_bytep> rows(img.h);
        for (int y = 0; y < img.h; ++y)
            rows[y] = const_cast<png_bytep>(img.v.data() + static_cast<size_t>(y) * img.w);
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
}

std::pair<int, int> read_png_dims(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open image: " + path);
    // 8-byte signature, 4-byte length, "IHDR", then width and height as
    // big-endian u32 — fixed layout per the PNG spec.
    unsigned char head[24];
    if (std::fread(head, 1, sizeof head, f.get()) != sizeof head)
        throw FormatError(path + ": too short to be a PNG");
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (std::memcmp(head, sig, 8) != 0 || std::memcmp(head + 12, "IHDR", 4) != 0)
        throw FormatError(path + ": not a PNG file");
    auto be32 = [&](int off) {
        return (static_cast<uint32_t>(head[off]) << 24) |
               (static_cast<uint32_t>(head[off + 1]) << 16) |
               (static_cast<uint32_t>(head[off + 2]) << 8) |
               static_cast<uint32_t>(head[off + 3]);
    };
    const uint32_t w = be32(16), h = be32(20);
    if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20))
        throw FormatError(path + ": implausible image dims");
    return {static_cast<int>(h), static_cast<int>(w)};
}

}  // namespace estan::io

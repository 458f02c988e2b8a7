#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "ocstereo/core.hpp"

namespace ocstereo::io {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void write_png(const std::string& path, int width, int height, int bit_depth,
                      int color_type, const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    OCS_REQUIRE(fp != nullptr, "cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    OCS_REQUIRE(png != nullptr, "png writer allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png info allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // rows are native little-endian
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct PngPixels {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;              // 8 or 16 after transforms
    std::vector<std::uint8_t> bytes;  // row-major, 16-bit values little-endian
};

inline PngPixels read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    OCS_REQUIRE(fp != nullptr, "cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    OCS_REQUIRE(png != nullptr, "png reader allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("png info allocation failed");
    }
    PngPixels out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_png(png, info,
                 PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_SWAP_ENDIAN,
                 nullptr);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    png_bytepp rows = png_get_rows(png, info);
    out.bytes.resize(rowbytes * out.height);
    for (int v = 0; v < out.height; ++v)
        std::memcpy(out.bytes.data() + rowbytes * v, rows[v], rowbytes);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace detail

/// 8-bit grayscale or RGB PNG from a [0, 1] float image.
inline void write_image_png(const std::string& path, const Image& image) {
    OCS_REQUIRE(!image.empty(), "refusing to write an empty image");
    OCS_REQUIRE(image.channels() == 1 || image.channels() == 3,
                "image must have 1 or 3 channels");
    const int w = image.width(), h = image.height(), c = image.channels();
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * c);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
            for (int k = 0; k < c; ++k) {
                const float x = std::clamp(image.at(u, v, k), 0.f, 1.f);
                bytes[(static_cast<std::size_t>(v) * w + u) * c + k] =
                    static_cast<std::uint8_t>(std::lround(x * 255.f));
            }
    std::vector<png_bytep> rows(h);
    for (int v = 0; v < h; ++v) rows[v] = bytes.data() + static_cast<std::size_t>(v) * w * c;
    detail::write_png(path, w, h, 8, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, rows);
}

/// Reads an 8-bit PNG into a [0, 1] float image; an alpha channel, if
/// present, is dropped.
inline Image read_image_png(const std::string& path) {
    detail::PngPixels px = detail::read_png(path);
    OCS_REQUIRE(px.bit_depth == 8, "expected an 8-bit image: " + path);
    OCS_REQUIRE(px.channels >= 1 && px.channels <= 4, "unsupported channel count: " + path);
    const int keep = px.channels >= 3 ? 3 : 1;
    Image image(px.width, px.height, keep);
    for (int v = 0; v < px.height; ++v)
        for (int u = 0; u < px.width; ++u)
            for (int k = 0; k < keep; ++k)
                image.at(u, v, k) =
                    px.bytes[(static_cast<std::size_t>(v) * px.width + u) * px.channels + k] / 255.f;
    return image;
}

/// 16-bit disparity PNG: stored value = round(256 * disparity), 0 = invalid
/// (valid cells are floored to 1, capping quantization at 1/512 px near zero).
inline void write_disparity_png(const std::string& path, const GlobalDisparityMap& map) {
    OCS_REQUIRE(map.width() > 0 && map.height() > 0, "refusing to write an empty disparity map");
    const int w = map.width(), h = map.height();
    std::vector<std::uint16_t> px(static_cast<std::size_t>(w) * h, 0);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            if (!map.is_valid(u, v)) continue;
            const double d = map.values.at(u, v);
            OCS_REQUIRE(d >= 0.0, "disparity PNG cannot store negative disparities");
            const long q = std::lround(d * 256.0);
            px[static_cast<std::size_t>(v) * w + u] =
                static_cast<std::uint16_t>(std::clamp<long>(q, 1, 65535));
        }
    std::vector<png_bytep> rows(h);
    for (int v = 0; v < h; ++v)
        rows[v] = reinterpret_cast<png_bytep>(px.data() + static_cast<std::size_t>(v) * w);
    detail::write_png(path, w, h, 16, PNG_COLOR_TYPE_GRAY, rows);
}

inline GlobalDisparityMap read_disparity_png(const std::string& path) {
    detail::PngPixels px = detail::read_png(path);
    OCS_REQUIRE(px.bit_depth == 16 && px.channels == 1,
                "expected a 16-bit single-channel disparity PNG: " + path);
    GlobalDisparityMap map(px.width, px.height);
    const auto* vals = reinterpret_cast<const std::uint16_t*>(px.bytes.data());
    for (int v = 0; v < px.height; ++v)
        for (int u = 0; u < px.width; ++u) {
            const std::uint16_t q = vals[static_cast<std::size_t>(v) * px.width + u];
            if (q != 0) map.set(u, v, q / 256.0);
        }
    return map;
}

/// 8-bit instance mask, raw values (0 = background).
inline void write_mask_png(const std::string& path, const Grid<std::uint8_t>& mask) {
    OCS_REQUIRE(!mask.empty(), "refusing to write an empty mask");
    const int w = mask.width(), h = mask.height();
    std::vector<png_bytep> rows(h);
    for (int v = 0; v < h; ++v)
        rows[v] = const_cast<png_bytep>(mask.row(v));
    detail::write_png(path, w, h, 8, PNG_COLOR_TYPE_GRAY, rows);
}

inline Grid<std::uint8_t> read_mask_png(const std::string& path) {
    detail::PngPixels px = detail::read_png(path);
    OCS_REQUIRE(px.bit_depth == 8 && px.channels == 1,
                "expected an 8-bit single-channel mask PNG: " + path);
    Grid<std::uint8_t> mask(px.width, px.height, 0);
    for (int v = 0; v < px.height; ++v)
        std::memcpy(mask.row(v), px.bytes.data() + static_cast<std::size_t>(v) * px.width,
                    static_cast<std::size_t>(px.width));
    return mask;
}

}  // namespace ocstereo::io

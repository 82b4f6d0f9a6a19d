// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/image.h>

#include <mvg/error.h>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>

namespace mvg {

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f != nullptr) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_rgb8(const std::vector<std::uint8_t> &rgb, int width, int height, int channels,
                const std::filesystem::path &path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw Error(path.string() + ": cannot open for writing");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(path.string() + ": PNG encoding failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(rgb.data() +
                                                 static_cast<std::size_t>(y) * width * channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

RgbImage read_png(const std::filesystem::path &path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
        throw ParseError(path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) == 0) {
        png_image_free(&image);
        throw ParseError(path.string() + ": " + image.message);
    }
    RgbImage out(static_cast<int>(image.width), static_cast<int>(image.height), 1.0);
    const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
    for (std::size_t i = 0; i < n; ++i) {
        const double alpha = buf[i * 4 + 3] / 255.0;
        for (int c = 0; c < 3; ++c) {
            out.pixels[i * 3 + c] = alpha * (buf[i * 4 + c] / 255.0) + (1.0 - alpha);
        }
    }
    return out;
}

void write_png(const RgbImage &image, const std::filesystem::path &path) {
    std::vector<std::uint8_t> rgb(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), rgb.begin(), quantize);
    write_rgb8(rgb, image.width, image.height, 3, path);
}

void write_depth_png(const DepthImage &image, const std::filesystem::path &path) {
    const double max_depth = *std::max_element(image.depth.begin(), image.depth.end());
    std::vector<std::uint8_t> gray(image.depth.size());
    for (std::size_t i = 0; i < gray.size(); ++i) {
        gray[i] = max_depth > 0.0 ? quantize(image.depth[i] / max_depth) : 0;
    }
    write_rgb8(gray, image.width, image.height, 1, path);
}

} // namespace mvg

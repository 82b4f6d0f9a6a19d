// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_IMAGE_H
#define MVG_IMAGE_H

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mvg {

/// Row-major interleaved RGB, values in [0, 1].
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    RgbImage() = default;
    RgbImage(int w, int h, double fill = 1.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * 3 + c;
    }
    double &at(int x, int y, int c) { return pixels[index(x, y, c)]; }
    double at(int x, int y, int c) const { return pixels[index(x, y, c)]; }

    bool same_shape(const RgbImage &o) const { return width == o.width && height == o.height; }

    bool operator==(const RgbImage &) const = default;
};

/// Expected depth (0 = background) and accumulated opacity per pixel.
struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<double> depth;
    std::vector<double> alpha;

    DepthImage() = default;
    DepthImage(int w, int h)
        : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0),
          alpha(static_cast<std::size_t>(w) * h, 0.0) {}

    double &at(int x, int y) { return depth[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const DepthImage &) const = default;
};

/// 8-bit RGB PNG. Alpha channels are composited over white on read.
RgbImage read_png(const std::filesystem::path &path);
void write_png(const RgbImage &image, const std::filesystem::path &path);

/// Depth visualized as 8-bit gray, scaled by the maximum foreground depth.
void write_depth_png(const DepthImage &image, const std::filesystem::path &path);

} // namespace mvg

#endif // MVG_IMAGE_H

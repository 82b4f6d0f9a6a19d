// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_IMAGE_METRICS_H
#define MVG_IMAGE_METRICS_H

#include <mvg/image.h>

#include <vector>

namespace mvg {

/// PSNR reported when two images are identical.
inline constexpr double kPsnrCap = 100.0;

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

double mean_squared_error(const RgbImage &a, const RgbImage &b);

/// 10 log10(1 / MSE) on unit range, capped at kPsnrCap.
double psnr(const RgbImage &a, const RgbImage &b);

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5) and the
/// three channels. Images must be at least 11 pixels on each side.
double ssim(const RgbImage &a, const RgbImage &b);

struct SsimGradient {
    double value = 0.0;
    std::vector<double> d_a; ///< d ssim / d a, same layout as a.pixels
};

/// SSIM together with its exact gradient with respect to the first image.
SsimGradient ssim_with_gradient(const RgbImage &a, const RgbImage &b);

/// Normalized 1-D Gaussian window used by SSIM.
std::vector<double> ssim_window_1d();

/// Box-filter 2x downsample (odd trailing row/column dropped).
RgbImage downsample2(const RgbImage &image);

} // namespace mvg

#endif // MVG_IMAGE_METRICS_H

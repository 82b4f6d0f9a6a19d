// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/image_metrics.h>

#include <mvg/error.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace mvg {

namespace {

void check_pair(const RgbImage &a, const RgbImage &b, const char *what) {
    if (!a.same_shape(b)) {
        throw ConfigError(std::string(what) + ": image dimensions differ (" +
                          std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                          std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
    }
    if (a.width == 0 || a.height == 0) {
        throw ConfigError(std::string(what) + ": empty image");
    }
}

// One channel as a dense plane.
std::vector<double> plane(const RgbImage &img, int c) {
    std::vector<double> out(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = img.pixels[i * 3 + c];
    }
    return out;
}

// Correlation with the separable window, keeping only fully-contained windows.
std::vector<double> filter_valid(const std::vector<double> &src, int w, int h,
                                 const std::vector<double> &win) {
    const int k = static_cast<int>(win.size());
    const int ow = w - k + 1;
    const int oh = h - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        const double *row = src.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) {
                s += win[i] * row[x + i];
            }
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) {
                s += win[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            }
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

// Adjoint of filter_valid: spreads a valid-region map back onto the full image.
std::vector<double> filter_adjoint(const std::vector<double> &map, int w, int h,
                                   const std::vector<double> &win) {
    const int k = static_cast<int>(win.size());
    const int ow = w - k + 1;
    const int oh = h - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = map[static_cast<std::size_t>(y) * ow + x];
            for (int i = 0; i < k; ++i) {
                tmp[static_cast<std::size_t>(y + i) * ow + x] += win[i] * v;
            }
        }
    }
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = tmp[static_cast<std::size_t>(y) * ow + x];
            double *row = out.data() + static_cast<std::size_t>(y) * w;
            for (int i = 0; i < k; ++i) {
                row[x + i] += win[i] * v;
            }
        }
    }
    return out;
}

SsimGradient ssim_impl(const RgbImage &a, const RgbImage &b, bool want_grad) {
    check_pair(a, b, "ssim");
    if (a.width < kSsimWindow || a.height < kSsimWindow) {
        throw ConfigError("ssim: images must be at least 11x11 pixels");
    }
    const int w = a.width;
    const int h = a.height;
    const auto win = ssim_window_1d();
    const std::size_t valid =
        static_cast<std::size_t>(w - kSsimWindow + 1) * (h - kSsimWindow + 1);
    const double norm = 1.0 / (3.0 * static_cast<double>(valid));

    SsimGradient out;
    if (want_grad) {
        out.d_a.assign(a.pixels.size(), 0.0);
    }
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const auto x = plane(a, c);
        const auto y = plane(b, c);
        std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, w, h, win);
        const auto my = filter_valid(y, w, h, win);
        const auto exx = filter_valid(xx, w, h, win);
        const auto eyy = filter_valid(yy, w, h, win);
        const auto exy = filter_valid(xy, w, h, win);

        std::vector<double> d_mu, d_exx, d_exy;
        if (want_grad) {
            d_mu.resize(valid);
            d_exx.resize(valid);
            d_exy.resize(valid);
        }
        for (std::size_t p = 0; p < valid; ++p) {
            const double vx = exx[p] - mx[p] * mx[p];
            const double vy = eyy[p] - my[p] * my[p];
            const double cxy = exy[p] - mx[p] * my[p];
            const double n1 = 2.0 * mx[p] * my[p] + kSsimC1;
            const double n2 = 2.0 * cxy + kSsimC2;
            const double d1 = mx[p] * mx[p] + my[p] * my[p] + kSsimC1;
            const double d2 = vx + vy + kSsimC2;
            total += n1 * n2 / (d1 * d2);
            if (want_grad) {
                const double dd = d1 * d2;
                // Partials with E[x^2], E[xy] held fixed while mu_x moves.
                d_mu[p] = norm * (2.0 * my[p] * (n2 - n1) / dd -
                                  n1 * n2 * 2.0 * mx[p] / (d1 * dd) +
                                  n1 * n2 * 2.0 * mx[p] / (dd * d2));
                d_exx[p] = norm * (-n1 * n2 / (dd * d2));
                d_exy[p] = norm * (2.0 * n1 / dd);
            }
        }
        if (want_grad) {
            const auto g_mu = filter_adjoint(d_mu, w, h, win);
            const auto g_exx = filter_adjoint(d_exx, w, h, win);
            const auto g_exy = filter_adjoint(d_exy, w, h, win);
            for (std::size_t i = 0; i < x.size(); ++i) {
                out.d_a[i * 3 + c] = g_mu[i] + 2.0 * x[i] * g_exx[i] + y[i] * g_exy[i];
            }
        }
    }
    out.value = total * norm;
    return out;
}

} // namespace

std::vector<double> ssim_window_1d() {
    std::vector<double> w(kSsimWindow);
    double sum = 0.0;
    const int half = kSsimWindow / 2;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - half;
        w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[i];
    }
    for (auto &v : w) {
        v /= sum;
    }
    return w;
}

double mean_squared_error(const RgbImage &a, const RgbImage &b) {
    check_pair(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        s += d * d;
    }
    return s / static_cast<double>(a.pixels.size());
}

double psnr(const RgbImage &a, const RgbImage &b) {
    const double mse = mean_squared_error(a, b);
    if (mse <= 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const RgbImage &a, const RgbImage &b) { return ssim_impl(a, b, false).value; }

SsimGradient ssim_with_gradient(const RgbImage &a, const RgbImage &b) {
    return ssim_impl(a, b, true);
}

RgbImage downsample2(const RgbImage &image) {
    RgbImage out(image.width / 2, image.height / 2, 0.0);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = 0.25 * (image.at(2 * x, 2 * y, c) + image.at(2 * x + 1, 2 * y, c) +
                                          image.at(2 * x, 2 * y + 1, c) +
                                          image.at(2 * x + 1, 2 * y + 1, c));
            }
        }
    }
    return out;
}

} // namespace mvg

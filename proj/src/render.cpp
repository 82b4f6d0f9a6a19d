// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/render.h>

#include <mvg/error.h>
#include <mvg/parallel.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace mvg {

namespace {

constexpr int kTile = 16;
constexpr double kDilation = 0.3;
constexpr double kCutoffMahalanobis2 = 9.0;
const double kKernelFloor = std::exp(-0.5 * kCutoffMahalanobis2);
constexpr double kMaxAlpha = 0.99;
constexpr double kMinTransmittance = 1e-4;

// Gradient slots accumulated per projected Gaussian during backward.
enum Slot { kU, kV, kCa, kCb, kCc, kR, kG, kB, kOpacity, kSlots };

} // namespace

void SplatGradients::resize(std::size_t n) {
    centers.assign(n, Vec3::Zero());
    scales.assign(n, Vec3::Zero());
    rotations.assign(n, Vec4::Zero());
    opacities.assign(n, 0.0);
    colors.assign(n, Vec3::Zero());
}

Rasterizer::Rasterizer(const GaussianSplat &splat, const CameraView &view,
                       const RenderOptions &options)
    : splat_size_(splat.size()), view_(view), options_(options) {
    view_.validate();
    pose_ = camera_pose(view_);
    focal_ = view_.focal();
    width_ = view_.image_size;
    height_ = view_.image_size;
    tiles_x_ = (width_ + kTile - 1) / kTile;
    tiles_y_ = (height_ + kTile - 1) / kTile;
    project(splat);
    rasterize();
}

void Rasterizer::project(const GaussianSplat &splat) {
    const double cx = 0.5 * width_;
    const double cy = 0.5 * height_;
    struct Candidate {
        double depth;
        std::uint32_t index;
    };
    std::vector<Candidate> order;
    std::vector<Projected> proj(splat.size());
    std::vector<Geometry> geom(splat.size());
    std::vector<std::array<int, 4>> boxes(splat.size());

    for (std::size_t k = 0; k < splat.size(); ++k) {
        const Vec3 p = pose_.to_camera(splat.centers[k]);
        if (!(p.z() > kRenderNear)) {
            continue;
        }
        Geometry &g = geom[k];
        g.cam = p;
        g.quat = splat.rotations[k];
        g.rot = rotation_from_quaternion(g.quat);
        g.scale = splat.scales[k];
        const Mat3 m = g.rot * g.scale.asDiagonal();
        g.sigma = m * m.transpose();

        const double iz = 1.0 / p.z();
        Eigen::Matrix<double, 2, 3> jac;
        jac << focal_ * iz, 0.0, -focal_ * p.x() * iz * iz, 0.0, focal_ * iz,
            -focal_ * p.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> t = jac * pose_.rotation;
        const Eigen::Matrix2d cov = t * g.sigma * t.transpose();
        g.a = cov(0, 0) + kDilation;
        g.b = cov(0, 1);
        g.c = cov(1, 1) + kDilation;
        const double det = g.a * g.c - g.b * g.b;
        if (!(det > 0.0)) {
            continue;
        }

        Projected &q = proj[k];
        q.u = cx + focal_ * p.x() * iz;
        q.v = cy + focal_ * p.y() * iz;
        q.ca = g.c / det;
        q.cb = -g.b / det;
        q.cc = g.a / det;
        q.opacity = splat.opacities[k];
        q.r = splat.colors[k].x();
        q.g = splat.colors[k].y();
        q.b = splat.colors[k].z();
        q.depth = p.z();
        q.index = static_cast<std::uint32_t>(k);

        // Exact bounding box of the Mahalanobis-3 ellipse; pixel centers at +0.5.
        const double hx = 3.0 * std::sqrt(g.a);
        const double hy = 3.0 * std::sqrt(g.c);
        const int x0 = std::max(0, static_cast<int>(std::ceil(q.u - hx - 0.5)));
        const int x1 = std::min(width_ - 1, static_cast<int>(std::floor(q.u + hx - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(q.v - hy - 0.5)));
        const int y1 = std::min(height_ - 1, static_cast<int>(std::floor(q.v + hy - 0.5)));
        if (!std::isfinite(q.u) || !std::isfinite(q.v) || x0 > x1 || y0 > y1) {
            continue;
        }
        boxes[k] = {x0, x1, y0, y1};
        order.push_back({p.z(), static_cast<std::uint32_t>(k)});
    }

    std::sort(order.begin(), order.end(), [](const Candidate &l, const Candidate &r) {
        return l.depth < r.depth || (l.depth == r.depth && l.index < r.index);
    });

    projected_.clear();
    geometry_.clear();
    projected_.reserve(order.size());
    geometry_.reserve(order.size());
    tile_lists_.assign(static_cast<std::size_t>(tiles_x_) * tiles_y_, {});
    for (const auto &cand : order) {
        const auto id = static_cast<std::uint32_t>(projected_.size());
        projected_.push_back(proj[cand.index]);
        geometry_.push_back(geom[cand.index]);
        const auto &box = boxes[cand.index];
        for (int ty = box[2] / kTile; ty <= box[3] / kTile; ++ty) {
            for (int tx = box[0] / kTile; tx <= box[1] / kTile; ++tx) {
                tile_lists_[static_cast<std::size_t>(ty) * tiles_x_ + tx].push_back(id);
            }
        }
    }
}

void Rasterizer::rasterize() {
    rgb_ = RgbImage(width_, height_, 0.0);
    depth_ = DepthImage(width_, height_);
    const std::size_t npix = static_cast<std::size_t>(width_) * height_;
    final_t_.assign(npix, 1.0);
    last_.assign(npix, 0);
    const Vec3 bg = options_.background;

    parallel_for(tiles_y_, options_.threads, [&](int ty) {
        for (int tx = 0; tx < tiles_x_; ++tx) {
            const auto &list = tile_lists_[static_cast<std::size_t>(ty) * tiles_x_ + tx];
            const int ymax = std::min(height_, (ty + 1) * kTile);
            const int xmax = std::min(width_, (tx + 1) * kTile);
            for (int y = ty * kTile; y < ymax; ++y) {
                for (int x = tx * kTile; x < xmax; ++x) {
                    const double px = x + 0.5;
                    const double py = y + 0.5;
                    double t = 1.0;
                    double cr = 0.0, cg = 0.0, cb = 0.0;
                    double dsum = 0.0, wsum = 0.0;
                    std::uint32_t last = 0;
                    for (std::uint32_t n = 0; n < list.size(); ++n) {
                        const Projected &q = projected_[list[n]];
                        const double dx = px - q.u;
                        const double dy = py - q.v;
                        const double m2 = q.ca * dx * dx + 2.0 * q.cb * dx * dy + q.cc * dy * dy;
                        if (m2 >= kCutoffMahalanobis2) {
                            continue;
                        }
                        const double alpha =
                            std::min(kMaxAlpha, q.opacity * (std::exp(-0.5 * m2) - kKernelFloor));
                        if (alpha <= 0.0) {
                            continue;
                        }
                        const double w = alpha * t;
                        cr += w * q.r;
                        cg += w * q.g;
                        cb += w * q.b;
                        dsum += w * q.depth;
                        wsum += w;
                        t *= 1.0 - alpha;
                        last = n + 1;
                        if (t < kMinTransmittance) {
                            break;
                        }
                    }
                    const std::size_t pix = static_cast<std::size_t>(y) * width_ + x;
                    final_t_[pix] = t;
                    last_[pix] = last;
                    rgb_.pixels[pix * 3 + 0] = cr + t * bg.x();
                    rgb_.pixels[pix * 3 + 1] = cg + t * bg.y();
                    rgb_.pixels[pix * 3 + 2] = cb + t * bg.z();
                    const double acc = 1.0 - t;
                    depth_.alpha[pix] = acc;
                    depth_.depth[pix] = acc > kDepthAlphaThreshold && wsum > 0.0 ? dsum / wsum : 0.0;
                }
            }
        }
    });
}

std::vector<bool> Rasterizer::visibility() const {
    std::vector<bool> out(splat_size_, false);
    for (const auto &q : projected_) {
        out[q.index] = true;
    }
    return out;
}

std::vector<double> Rasterizer::weights() const {
    // d(sum of red) / d(red of k) is exactly the weight of k summed over pixels.
    const SplatGradients g = backward(std::vector<double>(rgb_.pixels.size(), 1.0));
    std::vector<double> out(g.colors.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = g.colors[k].x();
    }
    return out;
}

SplatGradients Rasterizer::backward(const std::vector<double> &d_rgb) const {
    if (d_rgb.size() != rgb_.pixels.size()) {
        throw ConfigError("Rasterizer::backward: gradient buffer has the wrong size");
    }
    const std::size_t np = projected_.size();
    const Vec3 bg = options_.background;

    // One partial-sum buffer per tile row, reduced in fixed order below.
    std::vector<std::vector<double>> partial(tiles_y_);
    parallel_for(tiles_y_, options_.threads, [&](int ty) {
        std::vector<double> &acc = partial[ty];
        acc.assign(np * kSlots, 0.0);
        for (int tx = 0; tx < tiles_x_; ++tx) {
            const auto &list = tile_lists_[static_cast<std::size_t>(ty) * tiles_x_ + tx];
            const int ymax = std::min(height_, (ty + 1) * kTile);
            const int xmax = std::min(width_, (tx + 1) * kTile);
            for (int y = ty * kTile; y < ymax; ++y) {
                for (int x = tx * kTile; x < xmax; ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * width_ + x;
                    const double gr = d_rgb[pix * 3 + 0];
                    const double gg = d_rgb[pix * 3 + 1];
                    const double gb = d_rgb[pix * 3 + 2];
                    if (gr == 0.0 && gg == 0.0 && gb == 0.0) {
                        continue;
                    }
                    const double px = x + 0.5;
                    const double py = y + 0.5;
                    double t = final_t_[pix];
                    // Color seen behind the current Gaussian, normalized by its transmittance.
                    double br = bg.x(), bgc = bg.y(), bb = bg.z();
                    for (std::uint32_t n = last_[pix]; n-- > 0;) {
                        const std::uint32_t id = list[n];
                        const Projected &q = projected_[id];
                        const double dx = px - q.u;
                        const double dy = py - q.v;
                        const double m2 = q.ca * dx * dx + 2.0 * q.cb * dx * dy + q.cc * dy * dy;
                        if (m2 >= kCutoffMahalanobis2) {
                            continue;
                        }
                        const double e = std::exp(-0.5 * m2);
                        const double raw = q.opacity * (e - kKernelFloor);
                        const double alpha = std::min(kMaxAlpha, raw);
                        if (alpha <= 0.0) {
                            continue;
                        }
                        t /= 1.0 - alpha;
                        const double w = alpha * t;
                        double *slot = acc.data() + static_cast<std::size_t>(id) * kSlots;
                        slot[kR] += w * gr;
                        slot[kG] += w * gg;
                        slot[kB] += w * gb;
                        const double d_alpha =
                            t * (gr * (q.r - br) + gg * (q.g - bgc) + gb * (q.b - bb));
                        br = alpha * q.r + (1.0 - alpha) * br;
                        bgc = alpha * q.g + (1.0 - alpha) * bgc;
                        bb = alpha * q.b + (1.0 - alpha) * bb;
                        if (raw >= kMaxAlpha) {
                            continue;
                        }
                        slot[kOpacity] += d_alpha * (e - kKernelFloor);
                        // d m2 contributions: alpha = o (exp(-m2/2) - floor)
                        const double d_m2 = -0.5 * d_alpha * q.opacity * e;
                        slot[kU] += d_m2 * (-2.0 * (q.ca * dx + q.cb * dy));
                        slot[kV] += d_m2 * (-2.0 * (q.cb * dx + q.cc * dy));
                        slot[kCa] += d_m2 * dx * dx;
                        slot[kCb] += d_m2 * 2.0 * dx * dy;
                        slot[kCc] += d_m2 * dy * dy;
                    }
                }
            }
        }
    });

    std::vector<double> total(np * kSlots, 0.0);
    for (const auto &acc : partial) {
        for (std::size_t i = 0; i < total.size(); ++i) {
            total[i] += acc[i];
        }
    }

    SplatGradients grads;
    grads.resize(splat_size_);
    const double f = focal_;
    for (std::size_t id = 0; id < np; ++id) {
        const double *s = total.data() + id * kSlots;
        const Projected &q = projected_[id];
        const Geometry &g = geometry_[id];
        const std::uint32_t k = q.index;

        grads.colors[k] = Vec3(s[kR], s[kG], s[kB]);
        grads.opacities[k] = s[kOpacity];

        // Conic -> 2D covariance.
        const double det = g.a * g.c - g.b * g.b;
        const double det2 = det * det;
        const double da = (-g.c * g.c * s[kCa] + g.b * g.c * s[kCb] - g.b * g.b * s[kCc]) / det2;
        const double db = (2.0 * g.b * g.c * s[kCa] - (g.a * g.c + g.b * g.b) * s[kCb] +
                           2.0 * g.a * g.b * s[kCc]) /
                          det2;
        const double dc = (-g.b * g.b * s[kCa] + g.a * g.b * s[kCb] - g.a * g.a * s[kCc]) / det2;
        Eigen::Matrix2d g2;
        g2 << da, 0.5 * db, 0.5 * db, dc;

        // 2D covariance -> T = J W and world covariance.
        const Vec3 &p = g.cam;
        const double iz = 1.0 / p.z();
        Eigen::Matrix<double, 2, 3> jac;
        jac << f * iz, 0.0, -f * p.x() * iz * iz, 0.0, f * iz, -f * p.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> t = jac * pose_.rotation;
        const Mat3 d_sigma = t.transpose() * g2 * t;
        const Eigen::Matrix<double, 2, 3> d_t = 2.0 * g2 * t * g.sigma;
        const Eigen::Matrix<double, 2, 3> d_j = d_t * pose_.rotation.transpose();

        // Camera-space center through both the mean projection and J.
        Vec3 d_p;
        d_p.x() = s[kU] * f * iz + d_j(0, 2) * (-f * iz * iz);
        d_p.y() = s[kV] * f * iz + d_j(1, 2) * (-f * iz * iz);
        d_p.z() = s[kU] * (-f * p.x() * iz * iz) + s[kV] * (-f * p.y() * iz * iz) +
                  d_j(0, 0) * (-f * iz * iz) + d_j(0, 2) * (2.0 * f * p.x() * iz * iz * iz) +
                  d_j(1, 1) * (-f * iz * iz) + d_j(1, 2) * (2.0 * f * p.y() * iz * iz * iz);
        grads.centers[k] = pose_.rotation.transpose() * d_p;

        // Sigma = M M^T with M = R diag(s).
        const Mat3 m = g.rot * g.scale.asDiagonal();
        const Mat3 d_m = 2.0 * d_sigma * m;
        Vec3 d_scale;
        for (int i = 0; i < 3; ++i) {
            d_scale[i] = d_m.col(i).dot(g.rot.col(i));
        }
        grads.scales[k] = d_scale;
        const Mat3 d_r = d_m * g.scale.asDiagonal();

        const double qn = g.quat.norm();
        const Vec4 u = g.quat / qn;
        const double w = u[0], x = u[1], y = u[2], z = u[3];
        const Mat3 &G = d_r;
        Vec4 d_u;
        d_u[0] = 2.0 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) - y * G(2, 0) +
                        x * G(2, 1));
        d_u[1] = 2.0 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2.0 * x * G(1, 1) -
                        w * G(1, 2) + z * G(2, 0) + w * G(2, 1) - 2.0 * x * G(2, 2));
        d_u[2] = 2.0 * (-2.0 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) +
                        z * G(1, 2) - w * G(2, 0) + z * G(2, 1) - 2.0 * y * G(2, 2));
        d_u[3] = 2.0 * (-2.0 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) -
                        2.0 * z * G(1, 1) + y * G(1, 2) + x * G(2, 0) + y * G(2, 1));
        grads.rotations[k] = (d_u - u * u.dot(d_u)) / qn;
    }
    return grads;
}

RgbImage render_rgb(const GaussianSplat &splat, const CameraView &view,
                    const RenderOptions &options) {
    return Rasterizer(splat, view, options).rgb();
}

DepthImage render_depth(const GaussianSplat &splat, const CameraView &view,
                        const RenderOptions &options) {
    return Rasterizer(splat, view, options).depth();
}

} // namespace mvg

// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/splat.h>

#include <mvg/error.h>
#include <mvg/random.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace mvg {

void GaussianSplat::resize(std::size_t n) {
    centers.resize(n, Vec3::Zero());
    scales.resize(n, Vec3::Constant(0.01));
    rotations.resize(n, Vec4(1.0, 0.0, 0.0, 0.0));
    opacities.resize(n, 0.5);
    colors.resize(n, Vec3::Constant(0.5));
}

void GaussianSplat::reserve(std::size_t n) {
    centers.reserve(n);
    scales.reserve(n);
    rotations.reserve(n);
    opacities.reserve(n);
    colors.reserve(n);
}

void GaussianSplat::push_back(const Vec3 &center, const Vec3 &scale, const Vec4 &rotation,
                              double opacity, const Vec3 &color) {
    centers.push_back(center);
    scales.push_back(scale);
    rotations.push_back(rotation);
    opacities.push_back(opacity);
    colors.push_back(color);
}

void GaussianSplat::validate() const {
    const std::size_t n = centers.size();
    if (scales.size() != n || rotations.size() != n || opacities.size() != n ||
        colors.size() != n) {
        throw ConfigError("gaussian splat: field arrays have different lengths");
    }
    for (std::size_t k = 0; k < n; ++k) {
        const std::string where = " (gaussian " + std::to_string(k) + ")";
        if (!centers[k].allFinite()) {
            throw ConfigError("non-finite center" + where);
        }
        if (!scales[k].allFinite() || (scales[k].array() <= 0.0).any()) {
            throw ConfigError("scales must be finite and positive" + where);
        }
        if (std::abs(rotations[k].norm() - 1.0) > 1e-6) {
            throw ConfigError("rotation quaternion is not unit-norm" + where);
        }
        if (!(opacities[k] > 0.0 && opacities[k] < 1.0)) {
            throw ConfigError("opacity must lie in (0, 1)" + where);
        }
        if (!colors[k].allFinite() || (colors[k].array() < 0.0).any() ||
            (colors[k].array() > 1.0).any()) {
            throw ConfigError("color must lie in [0, 1]" + where);
        }
    }
}

Mat3 GaussianSplat::covariance(std::size_t k) const {
    const Mat3 r = rotation_from_quaternion(rotations[k]);
    const Mat3 m = r * scales[k].asDiagonal();
    return m * m.transpose();
}

Mat3 rotation_from_quaternion(const Vec4 &q_in) {
    const Vec4 q = q_in.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Vec4 quaternion_from_rotation(const Mat3 &r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    if (out[0] < 0.0) {
        out = -out;
    }
    return out;
}

PointCloud resample_points(const GaussianSplat &splat, int per_gaussian, std::size_t target,
                           std::uint64_t seed) {
    if (splat.empty()) {
        throw ConfigError("resample_points: empty model");
    }
    if (per_gaussian < 1 || target < 1) {
        throw ConfigError("resample_points: per_gaussian and target must be >= 1");
    }
    const std::size_t m = splat.size();
    PointCloud all;
    all.points.resize(m * per_gaussian);
    for (std::size_t k = 0; k < m; ++k) {
        const Mat3 factor = rotation_from_quaternion(splat.rotations[k]) *
                            splat.scales[k].cwiseMax(kMinSampleSigma).asDiagonal();
        Rng rng(mix_seed(seed, k));
        for (int s = 0; s < per_gaussian; ++s) {
            const double z0 = rng.normal();
            const double z1 = rng.normal();
            const double z2 = rng.normal();
            all.points[k * per_gaussian + s] = splat.centers[k] + factor * Vec3(z0, z1, z2);
        }
    }
    if (all.size() <= target) {
        return all;
    }

    // Partial Fisher-Yates over indices, then restore ascending order.
    std::vector<std::size_t> index(all.size());
    std::iota(index.begin(), index.end(), std::size_t{0});
    Rng rng(mix_seed(seed, ~std::uint64_t{0}));
    for (std::size_t i = 0; i < target; ++i) {
        const std::size_t j = i + rng.below(index.size() - i);
        std::swap(index[i], index[j]);
    }
    index.resize(target);
    std::sort(index.begin(), index.end());
    PointCloud out;
    out.points.reserve(target);
    for (const std::size_t i : index) {
        out.points.push_back(all.points[i]);
    }
    return out;
}

std::pair<PointCloud, SimilarityTransform> normalize_to_unit_cube(const PointCloud &cloud) {
    if (cloud.size() < 2) {
        throw ConfigError("normalize_to_unit_cube: need at least two points");
    }
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto &p : cloud.points) {
        if (!p.allFinite()) {
            throw ConfigError("normalize_to_unit_cube: non-finite coordinate");
        }
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double extent = (hi - lo).maxCoeff();
    if (!(extent > 0.0)) {
        throw ConfigError("normalize_to_unit_cube: degenerate (zero-extent) cloud");
    }
    SimilarityTransform xf;
    xf.scale = 2.0 / extent;
    xf.translation = -xf.scale * 0.5 * (lo + hi);
    return {transformed(cloud, xf), xf};
}

GaussianSplat transformed(const GaussianSplat &splat, const SimilarityTransform &xf) {
    GaussianSplat out = splat;
    for (std::size_t k = 0; k < splat.size(); ++k) {
        out.centers[k] = xf.apply(splat.centers[k]);
        out.scales[k] = splat.scales[k] * xf.scale;
        out.rotations[k] =
            quaternion_from_rotation(xf.rotation * rotation_from_quaternion(splat.rotations[k]));
    }
    return out;
}

PointCloud transformed(const PointCloud &cloud, const SimilarityTransform &xf) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto &p : cloud.points) {
        out.points.push_back(xf.apply(p));
    }
    return out;
}

} // namespace mvg

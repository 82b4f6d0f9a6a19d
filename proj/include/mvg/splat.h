// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_SPLAT_H
#define MVG_SPLAT_H

#include <mvg/geometry.h>

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace mvg {

/// A set of 3D Gaussians with constant (view-independent) RGB color.
///
/// Fields are stored in activated form: linear scales, unit quaternions in
/// (w, x, y, z) order, opacities in (0, 1) and colors in [0, 1]. The PLY layer
/// converts to and from the log / logit / SH-DC encoding used on disk.
struct GaussianSplat {
    std::vector<Vec3> centers;
    std::vector<Vec3> scales;
    std::vector<Vec4> rotations;
    std::vector<double> opacities;
    std::vector<Vec3> colors;

    std::size_t size() const { return centers.size(); }
    bool empty() const { return centers.empty(); }

    void resize(std::size_t n);
    void reserve(std::size_t n);
    void push_back(const Vec3 &center, const Vec3 &scale, const Vec4 &rotation, double opacity,
                   const Vec3 &color);

    /// Throws ConfigError if the arrays disagree in length or any invariant fails.
    void validate() const;

    /// R diag(s^2) R^T of Gaussian k.
    Mat3 covariance(std::size_t k) const;
};

struct PointCloud {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Rotation matrix of a quaternion (w, x, y, z); the input is normalized first.
Mat3 rotation_from_quaternion(const Vec4 &q);

/// Unit quaternion (w, x, y, z) with w >= 0 for a rotation matrix.
Vec4 quaternion_from_rotation(const Mat3 &r);

inline constexpr double kMinSampleSigma = 1e-6;

/// Draws `per_gaussian` samples from N(mu_k, Sigma_k) for every Gaussian, then
/// keeps a seeded uniform subset of min(target, M * per_gaussian) points.
///
/// Samples are mu + R diag(s) z with z ~ N(0, I); each Gaussian k draws from its
/// own stream derived from (seed, k), so the output does not depend on any
/// parallel schedule and is equivariant under similarity transforms of the splat.
PointCloud resample_points(const GaussianSplat &splat, int per_gaussian = 5,
                           std::size_t target = 60000, std::uint64_t seed = 0);

/// Centers the axis-aligned bounding box at the origin and scales its largest
/// extent to 2. Returns the cloud and the applied transform.
std::pair<PointCloud, SimilarityTransform> normalize_to_unit_cube(const PointCloud &cloud);

/// Applies x -> s R x + t to centers, rotations and scales.
GaussianSplat transformed(const GaussianSplat &splat, const SimilarityTransform &xf);

PointCloud transformed(const PointCloud &cloud, const SimilarityTransform &xf);

} // namespace mvg

#endif // MVG_SPLAT_H

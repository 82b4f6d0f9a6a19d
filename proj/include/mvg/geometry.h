// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_GEOMETRY_H
#define MVG_GEOMETRY_H

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mvg {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// World frame: right-handed, +Y up. Azimuth 0 looks from +Z, increasing toward +X.

/// A square pinhole camera orbiting the origin and looking at it.
struct CameraView {
    double fov_deg = 42.0;       ///< vertical field of view
    double azimuth_deg = 0.0;    ///< [0, 360)
    double elevation_deg = 0.0;  ///< [-90, 90]
    double distance = 2.0;       ///< camera center to origin
    int image_size = 256;        ///< square image side in pixels

    /// Throws ConfigError on an out-of-range field.
    void validate() const;

    Vec3 center() const;

    /// Focal length in pixels.
    double focal() const;

    bool operator==(const CameraView &) const = default;
};

/// Rotation + world->camera translation in the OpenCV frame (x right, y down,
/// z forward). The renderer works in this frame because depth is then +z.
struct CameraPose {
    Mat3 rotation;
    Vec3 translation;

    Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
};

CameraPose camera_pose(const CameraView &view);

struct CameraMatrices {
    Mat4 world_to_camera; ///< OpenGL convention: camera looks down -Z, +Y up
    Mat4 projection;      ///< OpenGL clip space, near/far below
};

inline constexpr double kNearPlane = 0.01;
inline constexpr double kFarPlane = 100.0;

CameraMatrices view_to_matrices(const CameraView &view);

/// x -> scale * rotation * x + translation
struct SimilarityTransform {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static SimilarityTransform identity() { return {}; }

    Vec3 apply(const Vec3 &p) const { return scale * (rotation * p) + translation; }

    /// (*this) after `first`.
    SimilarityTransform compose(const SimilarityTransform &first) const;

    SimilarityTransform inverse() const;

    void validate() const;
};

/// Uniform random test cameras: elevation in [-15, 45], azimuth in [0, 360),
/// distance in [1.5, 1.9], fov fixed at 42 degrees.
std::vector<CameraView> random_test_views(std::uint64_t seed, int count, int image_size = 256);

/// 8 azimuths spaced evenly from 8.5 degrees toward 360, at the output elevation
/// +15 then -15 degrees; fov 42, distance 3.2.
std::vector<CameraView> fixed_offset_test_views(double output_elevation_deg, int image_size = 256);

/// Evenly spaced azimuth orbit at a fixed elevation.
std::vector<CameraView> orbit_views(double fov_deg, double elevation_deg, double distance,
                                    int count, double start_azimuth_deg, int image_size);

/// Stable 16-hex-digit digest of a camera list, used to prove that two
/// evaluations used the same test views.
std::string views_hash(const std::vector<CameraView> &views);

void to_json(nlohmann::json &j, const CameraView &view);
void from_json(const nlohmann::json &j, CameraView &view);

std::vector<CameraView> load_views_json(const std::string &path);
void save_views_json(const std::vector<CameraView> &views, const std::string &path);

} // namespace mvg

#endif // MVG_GEOMETRY_H

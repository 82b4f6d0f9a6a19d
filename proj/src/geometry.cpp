// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/geometry.h>

#include <mvg/error.h>
#include <mvg/random.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mvg {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

// Right, up and forward axes of a camera at `center` looking at the origin.
void look_at_axes(const Vec3 &center, Vec3 &right, Vec3 &up, Vec3 &forward) {
    forward = (-center).normalized();
    Vec3 world_up(0.0, 1.0, 0.0);
    Vec3 r = forward.cross(world_up);
    if (r.norm() < 1e-9) {
        // Looking straight up or down: fall back to -Z as the up hint, which is the
        // limit of the azimuth-0 orbit.
        world_up = Vec3(0.0, 0.0, -1.0);
        r = forward.cross(world_up);
    }
    right = r.normalized();
    up = right.cross(forward);
}

} // namespace

void CameraView::validate() const {
    auto fail = [](const std::string &msg) { throw ConfigError("invalid camera view: " + msg); };
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
        fail("fov_deg must be in (0, 180), got " + std::to_string(fov_deg));
    }
    if (!(elevation_deg >= -90.0 && elevation_deg <= 90.0)) {
        fail("elevation_deg must be in [-90, 90], got " + std::to_string(elevation_deg));
    }
    if (!(distance > 0.0) || !std::isfinite(distance)) {
        fail("distance must be positive, got " + std::to_string(distance));
    }
    if (!std::isfinite(azimuth_deg)) {
        fail("azimuth_deg must be finite");
    }
    if (image_size < 1) {
        fail("image_size must be positive");
    }
}

Vec3 CameraView::center() const {
    const double az = azimuth_deg * kDegToRad;
    const double el = elevation_deg * kDegToRad;
    return distance * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
}

double CameraView::focal() const {
    return 0.5 * image_size / std::tan(0.5 * fov_deg * kDegToRad);
}

CameraPose camera_pose(const CameraView &view) {
    const Vec3 c = view.center();
    Vec3 right, up, forward;
    look_at_axes(c, right, up, forward);
    CameraPose pose;
    pose.rotation.row(0) = right;
    pose.rotation.row(1) = -up;
    pose.rotation.row(2) = forward;
    pose.translation = -pose.rotation * c;
    return pose;
}

CameraMatrices view_to_matrices(const CameraView &view) {
    view.validate();
    const Vec3 c = view.center();
    Vec3 right, up, forward;
    look_at_axes(c, right, up, forward);

    CameraMatrices m;
    m.world_to_camera.setIdentity();
    Mat3 r;
    r.row(0) = right;
    r.row(1) = up;
    r.row(2) = -forward;
    m.world_to_camera.topLeftCorner<3, 3>() = r;
    m.world_to_camera.topRightCorner<3, 1>() = -r * c;

    const double f = 1.0 / std::tan(0.5 * view.fov_deg * kDegToRad);
    m.projection.setZero();
    m.projection(0, 0) = f; // square images: aspect 1
    m.projection(1, 1) = f;
    m.projection(2, 2) = (kFarPlane + kNearPlane) / (kNearPlane - kFarPlane);
    m.projection(2, 3) = 2.0 * kFarPlane * kNearPlane / (kNearPlane - kFarPlane);
    m.projection(3, 2) = -1.0;
    return m;
}

SimilarityTransform SimilarityTransform::compose(const SimilarityTransform &first) const {
    SimilarityTransform out;
    out.scale = scale * first.scale;
    out.rotation = rotation * first.rotation;
    out.translation = scale * (rotation * first.translation) + translation;
    return out;
}

SimilarityTransform SimilarityTransform::inverse() const {
    SimilarityTransform out;
    out.scale = 1.0 / scale;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation) / scale;
    return out;
}

void SimilarityTransform::validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw ConfigError("similarity transform scale must be positive");
    }
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= 1e-9)) {
        throw ConfigError("similarity transform rotation is not orthonormal");
    }
    if (!translation.allFinite()) {
        throw ConfigError("similarity transform translation is not finite");
    }
}

std::vector<CameraView> random_test_views(std::uint64_t seed, int count, int image_size) {
    if (count < 1) {
        throw ConfigError("random_test_views: count must be >= 1");
    }
    Rng rng(seed);
    std::vector<CameraView> views;
    views.reserve(count);
    for (int i = 0; i < count; ++i) {
        CameraView v;
        v.fov_deg = 42.0;
        v.elevation_deg = rng.uniform(-15.0, 45.0);
        v.azimuth_deg = rng.uniform(0.0, 360.0);
        v.distance = rng.uniform(1.5, 1.9);
        v.image_size = image_size;
        views.push_back(v);
    }
    return views;
}

std::vector<CameraView> fixed_offset_test_views(double output_elevation_deg, int image_size) {
    // The +15 ring must stay strictly below the pole.
    if (!(output_elevation_deg > -75.0 && output_elevation_deg < 75.0)) {
        throw ConfigError("fixed_offset_test_views: output elevation must lie in (-75, 75), got " +
                          std::to_string(output_elevation_deg));
    }
    constexpr double kStart = 8.5;
    constexpr double kStep = (360.0 - kStart) / 8.0;
    std::vector<CameraView> views;
    views.reserve(16);
    for (const double offset : {15.0, -15.0}) {
        for (int k = 0; k < 8; ++k) {
            CameraView v;
            v.fov_deg = 42.0;
            v.distance = 3.2;
            v.azimuth_deg = kStart + k * kStep;
            v.elevation_deg = output_elevation_deg + offset;
            v.image_size = image_size;
            views.push_back(v);
        }
    }
    return views;
}

std::vector<CameraView> orbit_views(double fov_deg, double elevation_deg, double distance,
                                    int count, double start_azimuth_deg, int image_size) {
    if (count < 1) {
        throw ConfigError("orbit_views: count must be >= 1");
    }
    std::vector<CameraView> views;
    views.reserve(count);
    for (int i = 0; i < count; ++i) {
        CameraView v;
        v.fov_deg = fov_deg;
        v.elevation_deg = elevation_deg;
        v.distance = distance;
        v.azimuth_deg = std::fmod(start_azimuth_deg + 360.0 * i / count, 360.0);
        v.image_size = image_size;
        v.validate();
        views.push_back(v);
    }
    return views;
}

std::string views_hash(const std::vector<CameraView> &views) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto &v : views) {
        for (const double x : {v.fov_deg, v.azimuth_deg, v.elevation_deg, v.distance}) {
            h = fnv1a(std::string_view(reinterpret_cast<const char *>(&x), sizeof(x)), h);
        }
        const std::int32_t size = v.image_size;
        h = fnv1a(std::string_view(reinterpret_cast<const char *>(&size), sizeof(size)), h);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void to_json(nlohmann::json &j, const CameraView &view) {
    j = nlohmann::json{{"fov_deg", view.fov_deg},
                       {"azimuth_deg", view.azimuth_deg},
                       {"elevation_deg", view.elevation_deg},
                       {"distance", view.distance},
                       {"image_size", view.image_size}};
}

void from_json(const nlohmann::json &j, CameraView &view) {
    try {
        view.fov_deg = j.at("fov_deg").get<double>();
        view.azimuth_deg = j.at("azimuth_deg").get<double>();
        view.elevation_deg = j.at("elevation_deg").get<double>();
        view.distance = j.at("distance").get<double>();
        view.image_size = j.at("image_size").get<int>();
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("camera view: ") + e.what());
    }
    view.validate();
}

std::vector<CameraView> load_views_json(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open camera list " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!j.is_array()) {
        throw ParseError(path + ": camera list must be a JSON array");
    }
    return j.get<std::vector<CameraView>>();
}

void save_views_json(const std::vector<CameraView> &views, const std::string &path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out << nlohmann::json(views).dump(2) << "\n";
}

} // namespace mvg

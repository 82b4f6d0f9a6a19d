// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and oracles for the unit and acceptance tests.

#ifndef MVG_TESTS_FIXTURES_H
#define MVG_TESTS_FIXTURES_H

#include <mvg/fit.h>
#include <mvg/random.h>
#include <mvg/render.h>
#include <mvg/splat.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

namespace mvg::fixtures {

/// Five random anisotropic Gaussians seen at 32x32, with a target rendered
/// from a recolored, shrunken copy.
struct GradientFixture {
    GaussianSplat splat;
    CameraView view;
    RgbImage target;
};

inline GradientFixture gradient_fixture() {
    GradientFixture f;
    Rng rng(3);
    for (int k = 0; k < 5; ++k) {
        const Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        const Vec3 p(rng.uniform(-.4, .4), rng.uniform(-.4, .4), rng.uniform(-.4, .4));
        const Vec3 s(rng.uniform(.08, .2), rng.uniform(.08, .2), rng.uniform(.08, .2));
        const double o = rng.uniform(.3, .9);
        const Vec3 c(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
        f.splat.push_back(p, s, q.normalized(), o, c);
    }
    GaussianSplat t = f.splat;
    for (auto &c : t.colors) c = Vec3(0.2, 0.7, 0.4);
    for (auto &p : t.centers) p *= 0.8;
    f.view.image_size = 32;
    f.view.distance = 2.0;
    f.view.azimuth_deg = 30;
    f.view.elevation_deg = 20;
    f.view.fov_deg = 45;
    f.target = render_rgb(t, f.view);
    return f;
}

/// Worst relative difference between the analytic gradient of the
/// photometric loss and central finite differences over every parameter.
/// Differences are relative to max(|analytic|, |numeric|, 1e-3 * largest
/// gradient entry) so that near-zero entries do not dominate.
inline double gradient_check_worst(const GradientFixture &f, double h = 1e-6) {
    auto loss = [&](const GaussianSplat &x) { return photometric_loss(render_rgb(x, f.view), f.target); };
    Rasterizer r(f.splat, f.view);
    const auto lg = photometric_loss_with_gradient(r.rgb(), f.target);
    const SplatGradients g = r.backward(lg.d_rendered);

    std::vector<std::pair<double, double>> pairs; // analytic, numeric
    auto probe = [&](auto &&field, double analytic) {
        GaussianSplat a = f.splat, b = f.splat;
        field(a) += h;
        field(b) -= h;
        pairs.emplace_back(analytic, (loss(a) - loss(b)) / (2.0 * h));
    };
    for (std::size_t k = 0; k < f.splat.size(); ++k) {
        for (int i = 0; i < 3; ++i) {
            probe([&](GaussianSplat &s) -> double & { return s.centers[k][i]; }, g.centers[k][i]);
            probe([&](GaussianSplat &s) -> double & { return s.scales[k][i]; }, g.scales[k][i]);
            probe([&](GaussianSplat &s) -> double & { return s.colors[k][i]; }, g.colors[k][i]);
        }
        for (int i = 0; i < 4; ++i) {
            probe([&](GaussianSplat &s) -> double & { return s.rotations[k][i]; }, g.rotations[k][i]);
        }
        probe([&](GaussianSplat &s) -> double & { return s.opacities[k]; }, g.opacities[k]);
    }
    double largest = 0.0;
    for (const auto &[a, n] : pairs) largest = std::max({largest, std::abs(a), std::abs(n)});
    double worst = 0.0;
    for (const auto &[a, n] : pairs) {
        const double denom = std::max({std::abs(a), std::abs(n), 1e-3 * largest});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

/// O(n^2) Chamfer distance.
inline double brute_force_chamfer(const PointCloud &p1, const PointCloud &p2, double scale = 100.0) {
    auto directed = [](const PointCloud &a, const PointCloud &b) {
        double sum = 0.0;
        for (const Vec3 &p : a.points) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3 &q : b.points) best = std::min(best, (p - q).squaredNorm());
            sum += std::sqrt(best);
        }
        return sum / static_cast<double>(a.size());
    };
    return scale * (directed(p1, p2) + directed(p2, p1));
}

inline PointCloud random_cloud(Rng &rng, std::size_t n) {
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        c.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    return c;
}

/// Anisotropic cloud with well separated principal axes, so that its
/// orientation is identifiable.
inline PointCloud anisotropic_cloud(Rng &rng, std::size_t n) {
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.normal() * 0.6, y = rng.normal() * 0.35, z = rng.normal() * 0.15;
        // Skew so that principal-axis sign flips are distinguishable.
        c.points.emplace_back(x + 0.3 * y * y, y + 0.2 * x * x, z + 0.25 * x * y);
    }
    return c;
}

inline Mat3 random_rotation(Rng &rng) {
    return rotation_from_quaternion(Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
}

/// Sqrt of a symmetric PSD matrix by the coupled Newton-Schulz iteration.
inline Eigen::MatrixXd newton_schulz_sqrt(const Eigen::MatrixXd &a, int iterations = 100) {
    const Eigen::Index n = a.rows();
    const double norm = a.norm();
    Eigen::MatrixXd y = a / norm;
    Eigen::MatrixXd z = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < iterations; ++i) {
        const Eigen::MatrixXd t = 0.5 * (3.0 * eye - z * y);
        y = y * t;
        z = t * z;
    }
    return y * std::sqrt(norm);
}

/// Fréchet distance using Newton-Schulz for sqrt(A) and trace((A B)^1/2) via
/// sqrt(sqrt(A) B sqrt(A)), with the same covariance conventions as the engine.
inline double frechet_newton_schulz(const Eigen::MatrixXd &xa, const Eigen::MatrixXd &xb, double eps = 1e-6) {
    auto stats = [&](const Eigen::MatrixXd &x, Eigen::VectorXd &mu, Eigen::MatrixXd &cov) {
        mu = Eigen::VectorXd::Zero(x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) mu += x.row(i).transpose();
        mu /= static_cast<double>(x.rows());
        cov = Eigen::MatrixXd::Zero(x.cols(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const Eigen::VectorXd d = x.row(i).transpose() - mu;
            cov += d * d.transpose();
        }
        cov /= static_cast<double>(x.rows() - 1);
        cov += eps * Eigen::MatrixXd::Identity(x.cols(), x.cols());
    };
    Eigen::VectorXd ma, mb;
    Eigen::MatrixXd ca, cb;
    stats(xa, ma, ca);
    stats(xb, mb, cb);
    const Eigen::MatrixXd ra = newton_schulz_sqrt(ca);
    const Eigen::MatrixXd inner = ra * cb * ra;
    const double cross = newton_schulz_sqrt(0.5 * (inner + inner.transpose())).trace();
    return (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
    const auto p = std::filesystem::temp_directory_path() / ("mvg-test-" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace mvg::fixtures

#endif // MVG_TESTS_FIXTURES_H

// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/error.h>
#include <mvg/fit.h>
#include <mvg/image_metrics.h>
#include <mvg/render.h>
#include <mvg/synthetic.h>

#include "fixtures.h"

#include <gtest/gtest.h>

using namespace mvg;

namespace {

struct Scene {
    GaussianSplat object;
    std::vector<CameraView> views;
    std::vector<RgbImage> images;
};

Scene scene(int gaussians, int views, int size) {
    Scene s;
    s.object = procedural_object(21, gaussians);
    s.views = orbit_views(40.0, 15.0, 1.8, views, 0.0, size);
    s.images = render_views(s.object, s.views);
    return s;
}

FitConfig small_config() {
    FitConfig c;
    c.steps = 300;
    c.init_points = 800;
    c.image_size = 48;
    c.seed = 4;
    return c;
}

} // namespace

TEST(FitConfig, JsonRoundTripAndValidation) {
    FitConfig c = FitConfig::full_scale();
    EXPECT_EQ(c.init_points, 100000);
    EXPECT_EQ(c.steps, 10000);
    c.lr.scales = 0.01;
    const nlohmann::json j = c;
    const auto back = j.get<FitConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
    c.steps = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = FitConfig{};
    c.init_points = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Fit, ZeroStepsReturnsInitialization) {
    const auto s = scene(100, 4, 32);
    FitConfig c = small_config();
    c.steps = 0;
    c.image_size = 32;
    const auto fitted = fit_splat(s.images, s.views, c);
    const auto init = initial_splat(c, s.views);
    EXPECT_EQ(fitted.centers, init.centers);
    EXPECT_EQ(fitted.scales, init.scales);
    EXPECT_EQ(fitted.opacities, init.opacities);
    for (const auto &p : init.centers) EXPECT_LE(p.cwiseAbs().maxCoeff(), 1.0);
    for (const auto &col : init.colors) EXPECT_TRUE(col.isApprox(Vec3::Constant(0.5)));
}

TEST(Fit, RejectsBadInputs) {
    const auto s = scene(100, 4, 32);
    const FitConfig c = small_config();
    EXPECT_THROW(fit_splat({s.images[0], s.images[1]}, {s.views[0], s.views[1]}, c), ConfigError);
    EXPECT_THROW(fit_splat(s.images, {s.views[0], s.views[1], s.views[2]}, c), ConfigError);
    auto images = s.images;
    images[1] = RgbImage(31, 32);
    EXPECT_THROW(fit_splat(images, s.views, c), ConfigError);
}

TEST(Fit, DeterministicAndThreadIndependent) {
    const auto s = scene(120, 5, 48);
    FitConfig c = small_config();
    c.steps = 60;
    const auto a = fit_splat(s.images, s.views, c);
    const auto b = fit_splat(s.images, s.views, c);
    c.threads = 3;
    const auto t = fit_splat(s.images, s.views, c);
    EXPECT_EQ(a.centers, b.centers);
    EXPECT_EQ(a.colors, b.colors);
    EXPECT_EQ(a.centers, t.centers);
    EXPECT_EQ(a.scales, t.scales);
    EXPECT_EQ(a.rotations, t.rotations);
    EXPECT_EQ(a.opacities, t.opacities);
}

TEST(Fit, FinalPruneKeepsOnlySupportedGaussians) {
    const auto s = scene(120, 5, 48);
    FitConfig c = small_config();
    c.steps = 200;
    c.min_support_pixels = 0.0;
    const auto all = fit_splat(s.images, s.views, c);
    c.min_support_pixels = 1.0;
    const auto kept = fit_splat(s.images, s.views, c);
    ASSERT_LE(kept.size(), all.size());
    std::vector<double> support(kept.size(), 0.0);
    std::vector<CameraView> cams = s.views;
    for (auto &v : cams) {
        v.image_size = c.image_size;
        const auto w = Rasterizer(kept, v).weights();
        for (std::size_t k = 0; k < w.size(); ++k) support[k] += w[k];
    }
    // Removing unsupported Gaussians can only expose the ones behind them.
    for (double x : support) EXPECT_GE(x, 1.0 * static_cast<double>(cams.size()) - 1e-9);
    EXPECT_NEAR(mean_photometric_loss(kept, s.images, s.views), mean_photometric_loss(all, s.images, s.views),
                1e-2);
}

TEST(Fit, SelfReconstructionDeskScale) {
    const auto s = scene(200, 10, 128);
    FitConfig c = FitConfig::desk();
    FitTrace trace;
    trace.snapshot_steps = {100};
    const auto fitted = fit_splat(s.images, s.views, c, &trace);
    double mean_psnr = 0.0;
    for (std::size_t i = 0; i < s.views.size(); ++i) {
        mean_psnr += psnr(render_rgb(fitted, s.views[i]), s.images[i]);
    }
    mean_psnr /= s.views.size();
    EXPECT_GE(mean_psnr, 25.0);
    ASSERT_EQ(trace.snapshots.size(), 1u);
    const double at100 = mean_photometric_loss(trace.snapshots[0], s.images, s.views);
    const double at_end = mean_photometric_loss(fitted, s.images, s.views);
    EXPECT_LE(at_end, at100);
}

TEST(Fit, UnrelatedImageRaisesTrainingLoss) {
    const auto s = scene(150, 6, 48);
    const FitConfig c = small_config();
    auto images = s.images;
    RgbImage unrelated(48, 48);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            unrelated.at(x, y, 0) = (x / 8 + y / 8) % 2 ? 0.1 : 0.9;
            unrelated.at(x, y, 1) = 0.3;
            unrelated.at(x, y, 2) = y / 48.0;
        }
    images[2] = unrelated;
    const auto clean = fit_splat(s.images, s.views, c);
    const auto dirty = fit_splat(images, s.views, c);
    EXPECT_GT(mean_photometric_loss(dirty, images, s.views), mean_photometric_loss(clean, s.images, s.views));
}

TEST(Fit, ResizeSquare) {
    RgbImage img(64, 64, 0.25);
    const auto r = resize_square(img, 32);
    EXPECT_EQ(r.width, 32);
    for (double v : r.pixels) EXPECT_NEAR(v, 0.25, 1e-12);
}

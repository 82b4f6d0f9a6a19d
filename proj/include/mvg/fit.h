// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_FIT_H
#define MVG_FIT_H

#include <mvg/geometry.h>
#include <mvg/image.h>
#include <mvg/splat.h>

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mvg {

/// Adam step sizes per parameter group. Groups are optimized in their raw
/// parameterization: centers as-is, colors and opacities as logits, scales as
/// logs, rotations as quaternions renormalized after every step.
struct LearningRates {
    double centers = 2e-3;
    double colors = 1e-2;
    double opacities = 5e-2;
    double scales = 5e-3;
    double rotations = 1e-3;
};

struct FitConfig {
    int init_points = 4000;
    int steps = 1500;
    LearningRates lr;
    /// Center step size decays exponentially to lr.centers * this ratio.
    double center_lr_final_ratio = 0.01;
    std::uint64_t seed = 0;
    int image_size = 128;
    double prune_opacity_below = 0.005;
    int prune_interval = 100;
    /// Initial isotropic scale; 0 picks half the mean spacing of the init points.
    double init_scale = 0.0;
    double init_opacity = 0.5;
    /// After the last step, Gaussians whose rendered weight summed over all
    /// training views is below this many pixels per view are dropped. They
    /// carry no evidence from the images; 0 disables.
    double min_support_pixels = 1.0;
    int threads = 1;
    /// Optional per-step loss CSV ("step,loss").
    std::string loss_curve_csv;

    /// Desk-scale defaults (4000 points, 1500 steps).
    static FitConfig desk() { return {}; }
    /// The original recipe: 100k points, 10k steps.
    static FitConfig full_scale();

    void validate() const;
};

void to_json(nlohmann::json &j, const FitConfig &cfg);
void from_json(const nlohmann::json &j, FitConfig &cfg);

/// 0.8 * mean|a - b| + 0.2 * (1 - SSIM(a, b)).
double photometric_loss(const RgbImage &rendered, const RgbImage &target);

struct LossGradient {
    double value = 0.0;
    std::vector<double> d_rendered;
};

LossGradient photometric_loss_with_gradient(const RgbImage &rendered, const RgbImage &target);

/// Area/bilinear resize to a square of side `size`.
RgbImage resize_square(const RgbImage &image, int size);

/// Seeded initialization: centers uniform in [-1, 1]^3, isotropic scales, mid
/// opacity, gray color. Points that project into none of `views` are dropped,
/// since no training image could ever constrain them.
GaussianSplat initial_splat(const FitConfig &cfg, const std::vector<CameraView> &views);

struct FitTrace {
    std::vector<double> step_loss;   ///< loss of the view used at each step
    std::vector<int> snapshot_steps; ///< set by the caller before fitting
    /// Optimizer state at each snapshot step, before the final support prune.
    std::vector<GaussianSplat> snapshots;
};

/// Fits a splat to posed images by Adam on the photometric loss, one training
/// view per step (views are visited in seeded shuffled epochs), compositing on
/// white. Low-opacity Gaussians are pruned every prune_interval steps and
/// unsupported ones (see min_support_pixels) once at the end. The
/// result depends only on (images, views, cfg) and not on cfg.threads.
GaussianSplat fit_splat(const std::vector<RgbImage> &images, const std::vector<CameraView> &views,
                        const FitConfig &cfg, FitTrace *trace = nullptr);

/// Mean photometric loss of a splat over posed images (white background).
double mean_photometric_loss(const GaussianSplat &splat, const std::vector<RgbImage> &images,
                             const std::vector<CameraView> &views, int threads = 1);

} // namespace mvg

#endif // MVG_FIT_H

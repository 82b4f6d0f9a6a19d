// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_SYNTHETIC_H
#define MVG_SYNTHETIC_H

#include <mvg/geometry.h>
#include <mvg/image.h>
#include <mvg/splat.h>

#include <cstdint>
#include <string>
#include <vector>

namespace mvg {

/// A deterministic, deliberately asymmetric test object: a striped ellipsoidal
/// body with a torus handle on one side and a small cap on top, all inside a
/// radius-0.5 ball so every method preset frames it fully.
GaussianSplat procedural_object(std::uint64_t seed, int count = 300);

/// Renders the splat from each view on white.
std::vector<RgbImage> render_views(const GaussianSplat &splat, const std::vector<CameraView> &views,
                                   int threads = 1);

/// An inconsistent stand-in for the same object: turned about +Y by
/// `yaw_deg`, stretched vertically and with its color channels rotated.
GaussianSplat altered_object(const GaussianSplat &base, double yaw_deg = 75.0);

/// round(rate * |candidates|) entries of `candidates` picked by a seeded
/// shuffle. For a fixed seed a lower rate picks a prefix of a higher rate's picks.
std::vector<int> replaced_views(const std::vector<int> &candidates, double rate, std::uint64_t seed);

struct SyntheticPlanOptions {
    std::string out_dir;
    int objects = 1;
    std::uint64_t seed = 0;
    int gaussians = 300;
    /// Resolution of the written views.
    int image_size = 128;
    /// Share of the corrupted method's views replaced by the altered object.
    double corrupt_rate = 0.3;
    int fit_steps = 1500;
    int fit_image_size = 128;
    int fit_init_points = 4000;
    int test_view_count = 16;
    /// Also write "real" condition runs with a reference method.
    bool with_real = false;
};

/// Writes a ground-truth method ("gt", sv3d cameras, rendered from the
/// procedural object) and a corrupted method ("corrupt", syncdreamer cameras)
/// per object in the ingestion layout, plus manifest.json. Returns the manifest path.
std::string write_synthetic_plan(const SyntheticPlanOptions &options);

} // namespace mvg

#endif // MVG_SYNTHETIC_H

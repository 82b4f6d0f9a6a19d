// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_CONSISTENCY_H
#define MVG_CONSISTENCY_H

#include <mvg/fit.h>
#include <mvg/geometry.h>
#include <mvg/image.h>
#include <mvg/perceptual.h>
#include <mvg/splat.h>

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mvg {

// ---------------------------------------------------------------------------
// View splits

/// Two (possibly overlapping) index sets over the generated views.
///
/// `set1` / `set2` are kept exactly as tabulated for each protocol; they index
/// the views that remain after the first `offset` views are excluded. Use
/// image_indices() to map them back to positions in the full view list.
struct ViewSplit {
    std::vector<int> set1;
    std::vector<int> set2;
    int total = 0;
    int offset = 0;

    std::vector<int> image_indices(const std::vector<int> &set) const;

    void validate() const;
};

/// The fixed protocols for 16, 18 and 21 generated views.
ViewSplit split_views(int total);

/// A caller-supplied split for view counts without a fixed protocol.
ViewSplit custom_split(std::vector<int> set1, std::vector<int> set2, int total, int offset = 0);

void to_json(nlohmann::json &j, const ViewSplit &split);

// ---------------------------------------------------------------------------
// Geometry metrics

struct ChamferOptions {
    double scale = 100.0;
    /// Use squared Euclidean distances (sensitivity checks only).
    bool squared = false;
};

/// scale * (mean_p min_q |p - q| + mean_q min_p |q - p|), exact nearest
/// neighbors through a kd-tree.
double chamfer(const PointCloud &p1, const PointCloud &p2, const ChamferOptions &options = {});

/// Masked depth discrepancy over precomputed depth maps (views paired by index):
/// per view the mean |d1 - d2| over pixels where either depth is positive (0
/// for an empty mask), then scale times the mean over views.
double depth_error_from_maps(const std::vector<DepthImage> &d1, const std::vector<DepthImage> &d2,
                             double scale = 1000.0);

double depth_error(const GaussianSplat &splat1, const GaussianSplat &splat2,
                   const std::vector<CameraView> &views, double scale = 1000.0, int threads = 1);

// ---------------------------------------------------------------------------
// Texture metrics

struct TextureScores {
    double cpsnr = 0.0;
    double cssim = 0.0;
    double clpips = 0.0;
};

/// Renders both splats on white at every view and averages PSNR, SSIM and the
/// provider's perceptual distance over the views. Whole images are compared.
TextureScores texture_consistency(const GaussianSplat &splat1, const GaussianSplat &splat2,
                                  const std::vector<CameraView> &views,
                                  PerceptualProvider &perceptual, int threads = 1);

// ---------------------------------------------------------------------------
// Alignment

struct IcpOptions {
    int max_iterations = 50;
    /// Stop when the RMS residual improves by less than this.
    double tolerance = 1e-6;
};

/// Least-squares similarity (rotation, uniform scale, translation) mapping
/// `source[i]` onto `target[i]`.
SimilarityTransform estimate_similarity(const std::vector<Vec3> &source,
                                        const std::vector<Vec3> &target);

struct IcpResult {
    SimilarityTransform transform;
    double rms = 0.0;
    double initial_rms = 0.0;
    int iterations = 0;
};

/// ICP with uniform scale between point clouds. Starts from centroid and
/// RMS-extent matching under the identity rotation and under each proper
/// principal-axis alignment, and keeps the run with the lowest residual.
/// Throws ConfigError for rank-deficient (planar, linear) clouds.
IcpResult icp_align_points(const PointCloud &source, const PointCloud &reference,
                           const IcpOptions &options = {});

/// Resamples `icp_points` points from each splat (same seed) and aligns
/// source onto reference; returns the transform into the reference frame.
SimilarityTransform icp_align_scale(const GaussianSplat &source, const GaussianSplat &reference,
                                    int iterations = 50, std::uint64_t seed = 0,
                                    std::size_t icp_points = 10000);

// ---------------------------------------------------------------------------
// Normalization

enum class MetricKind { Chamfer, Depth, CPsnr, CSsim, CLpips };

const char *metric_name(MetricKind kind);
bool is_error_kind(MetricKind kind);

/// Ratio kinds (cPSNR, cSSIM): raw / gt_upper. Error kinds (CD, depth,
/// cLPIPS): 1 - raw / max_over_methods. Both clamped to [0, 1]; higher is better.
double normalize_score(double raw, MetricKind kind, double gt_upper, double max_over_methods);

// ---------------------------------------------------------------------------
// Full pipeline

struct ConsistencyScores {
    double cd = 0.0;
    double depth = 0.0;
    double cpsnr = 0.0;
    double cssim = 0.0;
    double clpips = 0.0;

    double get(MetricKind kind) const;
};

void to_json(nlohmann::json &j, const ConsistencyScores &s);
void from_json(const nlohmann::json &j, ConsistencyScores &s);

/// Generated images with their cameras and provenance.
struct MultiViewSet {
    std::string object_id;
    std::string method_id;
    std::vector<RgbImage> images;
    std::vector<CameraView> views;
};

struct ConsistencyOptions {
    ChamferOptions chamfer;
    double depth_scale = 1000.0;
    int resample_per_gaussian = 5;
    std::size_t resample_target = 60000;
    std::uint64_t resample_seed = 0;
    std::size_t icp_points = 10000;
    int icp_iterations = 50;
    /// Used instead of split_views() when set.
    std::optional<ViewSplit> split;
    /// Defaults to StructuralPerceptualProvider when null.
    PerceptualProvider *perceptual = nullptr;
    /// Run the two fits on separate threads.
    bool concurrent_fits = true;
};

struct ConsistencyResult {
    ConsistencyScores scores;
    GaussianSplat splat1;
    GaussianSplat splat2;
};

/// Splits the views, fits one splat per subset, optionally aligns both onto
/// `align_to`, and measures Chamfer on resampled clouds plus depth and texture
/// consistency over `test_views`. Stage failures are rethrown with the stage
/// name prefixed.
ConsistencyResult evaluate_consistency(const MultiViewSet &mvset,
                                       const std::vector<CameraView> &test_views,
                                       const FitConfig &cfg,
                                       const GaussianSplat *align_to = nullptr,
                                       const ConsistencyOptions &options = {});

} // namespace mvg

#endif // MVG_CONSISTENCY_H

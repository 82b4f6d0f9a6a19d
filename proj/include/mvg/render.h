// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_RENDER_H
#define MVG_RENDER_H

#include <mvg/geometry.h>
#include <mvg/image.h>
#include <mvg/splat.h>

#include <cstdint>
#include <vector>

namespace mvg {

/// Foreground test shared by depth rendering and the depth metric.
inline constexpr double kDepthAlphaThreshold = 0.5;

/// Gaussians whose camera-space depth is below this are culled.
inline constexpr double kRenderNear = 0.2;

struct RenderOptions {
    Vec3 background = Vec3::Ones();
    int threads = 1;
};

/// d loss / d field, in the same activated parameterization as GaussianSplat.
struct SplatGradients {
    std::vector<Vec3> centers;
    std::vector<Vec3> scales;
    std::vector<Vec4> rotations;
    std::vector<double> opacities;
    std::vector<Vec3> colors;

    void resize(std::size_t n);
};

/// EWA splatting of a GaussianSplat into one camera.
///
/// Each Gaussian is projected to a 2D Gaussian through the local affine
/// approximation of the perspective map (plus a 0.3 px^2 low-pass dilation),
/// truncated at Mahalanobis radius 3, and all Gaussians are composited front to
/// back in one global depth order. The kernel is offset by exp(-4.5) so that it
/// reaches exactly zero at the truncation boundary; this keeps pixel values
/// continuous in every parameter and makes finite differences meaningful.
///
/// Compositing stops once transmittance drops below 1e-4. Images are split into
/// 16x16 tiles and work is chunked by tile row; gradient partial sums are kept
/// per tile row and reduced in row order, so outputs are bit-identical for any
/// thread count.
class Rasterizer {
  public:
    Rasterizer(const GaussianSplat &splat, const CameraView &view,
               const RenderOptions &options = {});

    const RgbImage &rgb() const { return rgb_; }
    const DepthImage &depth() const { return depth_; }

    /// Number of Gaussians that survived culling.
    std::size_t visible_count() const { return projected_.size(); }

    /// Per-Gaussian flag: did the Gaussian project into the image at all.
    std::vector<bool> visibility() const;

    /// Per-Gaussian rendered weight (alpha times transmittance) summed over
    /// all pixels, indexed like the splat.
    std::vector<double> weights() const;

    /// Back-propagates d loss / d rgb (interleaved, same layout as RgbImage)
    /// to the splat parameters.
    SplatGradients backward(const std::vector<double> &d_rgb) const;

  private:
    struct Projected {
        double u, v;          // pixel-space mean
        double ca, cb, cc;    // conic (inverse 2D covariance)
        double opacity;
        double r, g, b;
        double depth;
        std::uint32_t index;  // into the splat
    };
    struct Geometry {
        Vec3 cam;   // camera-space center
        Mat3 sigma; // world covariance
        Mat3 rot;   // R from the normalized quaternion
        Vec3 scale;
        Vec4 quat;  // as stored
        double a, b, c; // 2D covariance entries
    };

    void project(const GaussianSplat &splat);
    void rasterize();

    std::size_t splat_size_ = 0;
    CameraView view_;
    RenderOptions options_;
    CameraPose pose_;
    double focal_ = 0.0;
    int width_ = 0;
    int height_ = 0;
    int tiles_x_ = 0;
    int tiles_y_ = 0;

    std::vector<Projected> projected_;
    std::vector<Geometry> geometry_;
    std::vector<std::vector<std::uint32_t>> tile_lists_;

    std::vector<double> final_t_;
    std::vector<std::uint32_t> last_;

    RgbImage rgb_;
    DepthImage depth_;
};

RgbImage render_rgb(const GaussianSplat &splat, const CameraView &view,
                    const RenderOptions &options = {});

DepthImage render_depth(const GaussianSplat &splat, const CameraView &view,
                        const RenderOptions &options = {});

} // namespace mvg

#endif // MVG_RENDER_H

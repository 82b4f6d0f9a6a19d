// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/consistency.h>

#include <mvg/error.h>
#include <mvg/image_metrics.h>
#include <mvg/kdtree.h>
#include <mvg/parallel.h>
#include <mvg/render.h>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace mvg {

// ---------------------------------------------------------------------------
// View splits

std::vector<int> ViewSplit::image_indices(const std::vector<int> &set) const {
    std::vector<int> out;
    out.reserve(set.size());
    for (int i : set) out.push_back(i + offset);
    return out;
}

void ViewSplit::validate() const {
    if (set1.empty() || set2.empty()) throw ConfigError("view split: both sets must be non-empty");
    if (offset < 0 || offset >= total) throw ConfigError("view split: offset out of range");
    for (const auto *set : {&set1, &set2}) {
        for (int i : *set) {
            if (i < 0 || i + offset >= total) {
                throw ConfigError("view split: index " + std::to_string(i) + " out of range for " +
                                  std::to_string(total) + " views");
            }
        }
        if (std::set<int>(set->begin(), set->end()).size() != set->size()) {
            throw ConfigError("view split: duplicate index");
        }
    }
}

ViewSplit split_views(int total) {
    ViewSplit s;
    s.total = total;
    switch (total) {
    case 16:
        s.set1 = {0, 2, 4, 5, 6, 8, 9, 10, 11, 12, 14};
        s.set2 = {1, 3, 5, 6, 7, 9, 11, 12, 13, 14, 15};
        break;
    case 18:
        s.set1 = {0, 1, 2, 4, 6, 8, 10, 12, 14, 16};
        s.set2 = {0, 1, 2, 3, 5, 7, 9, 11, 13, 15, 17};
        break;
    case 21:
        // View 0 is the conditioning input; the lists index the remaining 20.
        s.offset = 1;
        s.set1 = {0, 2, 4, 6, 8, 10, 12, 14, 16, 18};
        s.set2 = {1, 3, 5, 7, 9, 11, 13, 15, 17, 19};
        break;
    default:
        throw ConfigError("unsupported view count " + std::to_string(total) +
                          " (supported: 16, 18, 21; supply a custom split otherwise)");
    }
    return s;
}

ViewSplit custom_split(std::vector<int> set1, std::vector<int> set2, int total, int offset) {
    ViewSplit s{std::move(set1), std::move(set2), total, offset};
    s.validate();
    return s;
}

void to_json(nlohmann::json &j, const ViewSplit &split) {
    j = {{"total", split.total},
         {"offset", split.offset},
         {"set1", split.set1},
         {"set2", split.set2},
         {"set1_images", split.image_indices(split.set1)},
         {"set2_images", split.image_indices(split.set2)}};
}

// ---------------------------------------------------------------------------
// Geometry metrics

namespace {

double mean_nearest(const std::vector<Vec3> &queries, const KdTree &tree, bool squared) {
    double sum = 0.0;
    for (const Vec3 &q : queries) {
        const double d2 = tree.nearest(q).squared_distance;
        sum += squared ? d2 : std::sqrt(d2);
    }
    return sum / static_cast<double>(queries.size());
}

} // namespace

double chamfer(const PointCloud &p1, const PointCloud &p2, const ChamferOptions &options) {
    if (p1.empty() || p2.empty()) throw ConfigError("chamfer: empty point cloud");
    const KdTree t1(p1.points);
    const KdTree t2(p2.points);
    const double a = mean_nearest(p1.points, t2, options.squared);
    const double b = mean_nearest(p2.points, t1, options.squared);
    return options.scale * (a + b);
}

double depth_error_from_maps(const std::vector<DepthImage> &d1, const std::vector<DepthImage> &d2,
                             double scale) {
    if (d1.empty()) throw ConfigError("depth error: no views");
    if (d1.size() != d2.size()) throw ConfigError("depth error: view counts differ");
    double total = 0.0;
    for (std::size_t v = 0; v < d1.size(); ++v) {
        const DepthImage &a = d1[v];
        const DepthImage &b = d2[v];
        if (a.width != b.width || a.height != b.height) {
            throw ConfigError("depth error: depth map sizes differ");
        }
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < a.depth.size(); ++i) {
            if (a.depth[i] > 0.0 || b.depth[i] > 0.0) {
                sum += std::abs(a.depth[i] - b.depth[i]);
                ++count;
            }
        }
        if (count > 0) total += sum / static_cast<double>(count);
    }
    return scale * total / static_cast<double>(d1.size());
}

double depth_error(const GaussianSplat &splat1, const GaussianSplat &splat2,
                   const std::vector<CameraView> &views, double scale, int threads) {
    if (views.empty()) throw ConfigError("depth error: no views");
    if (splat1.size() == 0 || splat2.size() == 0) throw ConfigError("depth error: empty model");
    std::vector<DepthImage> d1(views.size()), d2(views.size());
    parallel_for(static_cast<int>(views.size()), threads, [&](int v) {
        d1[v] = render_depth(splat1, views[v]);
        d2[v] = render_depth(splat2, views[v]);
    });
    return depth_error_from_maps(d1, d2, scale);
}

// ---------------------------------------------------------------------------
// Texture metrics

TextureScores texture_consistency(const GaussianSplat &splat1, const GaussianSplat &splat2,
                                  const std::vector<CameraView> &views,
                                  PerceptualProvider &perceptual, int threads) {
    if (views.empty()) throw ConfigError("texture consistency: no views");
    const std::size_t n = views.size();
    std::vector<RgbImage> a(n), b(n);
    std::vector<double> p(n), s(n);
    parallel_for(static_cast<int>(n), threads, [&](int v) {
        a[v] = render_rgb(splat1, views[v]);
        b[v] = render_rgb(splat2, views[v]);
        p[v] = psnr(a[v], b[v]);
        s[v] = ssim(a[v], b[v]);
    });
    TextureScores out;
    for (std::size_t v = 0; v < n; ++v) {
        // Providers may keep scratch state, so they are driven from one thread.
        const double d = perceptual.distance(a[v], b[v]);
        if (!std::isfinite(d) || d < 0.0) {
            throw ProviderError("perceptual provider '" + perceptual.name() +
                                "' returned an invalid distance");
        }
        out.cpsnr += p[v];
        out.cssim += s[v];
        out.clpips += d;
    }
    out.cpsnr /= static_cast<double>(n);
    out.cssim /= static_cast<double>(n);
    out.clpips /= static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// Alignment

namespace {

using Points = Eigen::Matrix<double, 3, Eigen::Dynamic>;

Points to_matrix(const std::vector<Vec3> &pts) {
    Points m(3, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
    return m;
}

struct Frame {
    Vec3 centroid;
    Mat3 axes;      // eigenvectors as columns, ascending eigenvalues
    Vec3 variances; // eigenvalues
    double rms_extent = 0.0;
};

Frame principal_frame(const std::vector<Vec3> &pts, const char *which) {
    Frame f;
    f.centroid = Vec3::Zero();
    for (const Vec3 &p : pts) f.centroid += p;
    f.centroid /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const Vec3 &p : pts) {
        const Vec3 d = p - f.centroid;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(pts.size());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    f.axes = eig.eigenvectors();
    f.variances = eig.eigenvalues();
    if (f.axes.determinant() < 0.0) f.axes.col(0) *= -1.0;
    const double largest = f.variances(2);
    if (!(largest > 0.0) || f.variances(0) <= 1e-10 * largest) {
        throw ConfigError(std::string("ICP: degenerate ") + which +
                          " cloud (rank-deficient covariance)");
    }
    f.rms_extent = std::sqrt(f.variances.sum());
    return f;
}

double rms_residual(const std::vector<Vec3> &source, const SimilarityTransform &xf,
                    const KdTree &tree, std::vector<Vec3> *matches) {
    double sum = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const KdTree::Hit hit = tree.nearest(xf.apply(source[i]));
        sum += hit.squared_distance;
        if (matches) (*matches)[i] = tree.point(hit.index);
    }
    return std::sqrt(sum / static_cast<double>(source.size()));
}

IcpResult run_icp(const std::vector<Vec3> &source, const KdTree &tree,
                  SimilarityTransform xf, const IcpOptions &options) {
    IcpResult r;
    std::vector<Vec3> matches(source.size());
    double rms = rms_residual(source, xf, tree, &matches);
    r.initial_rms = rms;
    for (int it = 0; it < options.max_iterations; ++it) {
        const SimilarityTransform next = estimate_similarity(source, matches);
        std::vector<Vec3> next_matches(source.size());
        const double next_rms = rms_residual(source, next, tree, &next_matches);
        ++r.iterations;
        if (next_rms > rms) break; // keep the better of the two
        const double gain = rms - next_rms;
        xf = next;
        rms = next_rms;
        matches.swap(next_matches);
        if (gain < options.tolerance) break;
    }
    r.transform = xf;
    r.rms = rms;
    return r;
}

} // namespace

SimilarityTransform estimate_similarity(const std::vector<Vec3> &source,
                                        const std::vector<Vec3> &target) {
    if (source.size() != target.size() || source.size() < 3) {
        throw ConfigError("similarity estimate needs at least 3 paired points");
    }
    const Mat4 m = Eigen::umeyama(to_matrix(source), to_matrix(target), true);
    SimilarityTransform xf;
    const Mat3 sr = m.topLeftCorner<3, 3>();
    xf.scale = std::cbrt(sr.determinant());
    if (!(xf.scale > 0.0) || !std::isfinite(xf.scale)) {
        throw ConfigError("similarity estimate is degenerate");
    }
    xf.rotation = sr / xf.scale;
    xf.translation = m.topRightCorner<3, 1>();
    return xf;
}

IcpResult icp_align_points(const PointCloud &source, const PointCloud &reference,
                           const IcpOptions &options) {
    if (source.empty() || reference.empty()) throw ConfigError("ICP: empty point cloud");
    if (options.max_iterations < 1) throw ConfigError("ICP: iterations must be >= 1");
    const Frame fs = principal_frame(source.points, "source");
    const Frame fr = principal_frame(reference.points, "reference");
    const KdTree tree(reference.points);

    const double scale = fr.rms_extent / fs.rms_extent;
    std::vector<Mat3> rotations{Mat3::Identity()};
    for (const Vec3 &flip : {Vec3(1, 1, 1), Vec3(-1, -1, 1), Vec3(-1, 1, -1), Vec3(1, -1, -1)}) {
        rotations.push_back(fr.axes * flip.asDiagonal() * fs.axes.transpose());
    }

    IcpResult best;
    best.rms = std::numeric_limits<double>::infinity();
    for (const Mat3 &rot : rotations) {
        SimilarityTransform init;
        init.scale = scale;
        init.rotation = rot;
        init.translation = fr.centroid - scale * (rot * fs.centroid);
        IcpResult r = run_icp(source.points, tree, init, options);
        if (r.rms < best.rms) best = r;
    }
    best.initial_rms = rms_residual(source.points, SimilarityTransform{scale, Mat3::Identity(),
                                                                       fr.centroid - scale * fs.centroid},
                                    tree, nullptr);
    return best;
}

SimilarityTransform icp_align_scale(const GaussianSplat &source, const GaussianSplat &reference,
                                    int iterations, std::uint64_t seed, std::size_t icp_points) {
    if (source.size() == 0 || reference.size() == 0) throw ConfigError("ICP: empty model");
    const PointCloud s = resample_points(source, 5, icp_points, seed);
    const PointCloud r = resample_points(reference, 5, icp_points, seed);
    IcpOptions options;
    options.max_iterations = iterations;
    return icp_align_points(s, r, options).transform;
}

// ---------------------------------------------------------------------------
// Normalization

const char *metric_name(MetricKind kind) {
    switch (kind) {
    case MetricKind::Chamfer: return "cd";
    case MetricKind::Depth: return "depth";
    case MetricKind::CPsnr: return "cpsnr";
    case MetricKind::CSsim: return "cssim";
    case MetricKind::CLpips: return "clpips";
    }
    return "?";
}

bool is_error_kind(MetricKind kind) {
    return kind == MetricKind::Chamfer || kind == MetricKind::Depth || kind == MetricKind::CLpips;
}

double normalize_score(double raw, MetricKind kind, double gt_upper, double max_over_methods) {
    if (!std::isfinite(raw)) throw ConfigError(std::string("normalize: non-finite ") + metric_name(kind));
    double v;
    if (is_error_kind(kind)) {
        if (!(max_over_methods > 0.0)) {
            throw ConfigError(std::string("normalize: max over methods must be positive for ") +
                              metric_name(kind));
        }
        v = 1.0 - raw / max_over_methods;
    } else {
        if (!(gt_upper > 0.0)) {
            throw ConfigError(std::string("normalize: ground-truth upper bound must be positive for ") +
                              metric_name(kind));
        }
        v = raw / gt_upper;
    }
    return std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Full pipeline

double ConsistencyScores::get(MetricKind kind) const {
    switch (kind) {
    case MetricKind::Chamfer: return cd;
    case MetricKind::Depth: return depth;
    case MetricKind::CPsnr: return cpsnr;
    case MetricKind::CSsim: return cssim;
    case MetricKind::CLpips: return clpips;
    }
    return 0.0;
}

void to_json(nlohmann::json &j, const ConsistencyScores &s) {
    j = {{"cd", s.cd}, {"depth", s.depth}, {"cpsnr", s.cpsnr}, {"cssim", s.cssim}, {"clpips", s.clpips}};
}

void from_json(const nlohmann::json &j, ConsistencyScores &s) {
    s.cd = j.at("cd").get<double>();
    s.depth = j.at("depth").get<double>();
    s.cpsnr = j.at("cpsnr").get<double>();
    s.cssim = j.at("cssim").get<double>();
    s.clpips = j.at("clpips").get<double>();
}

namespace {

template <typename Fn> auto stage(const char *name, Fn &&fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError &e) {
        throw ConfigError(std::string(name) + ": " + e.what());
    } catch (const ProviderError &e) {
        throw ProviderError(std::string(name) + ": " + e.what());
    } catch (const TransportError &e) {
        throw TransportError(std::string(name) + ": " + e.what());
    } catch (const ParseError &e) {
        throw ParseError(std::string(name) + ": " + e.what());
    } catch (const Error &e) {
        throw Error(std::string(name) + ": " + e.what());
    }
}

} // namespace

ConsistencyResult evaluate_consistency(const MultiViewSet &mvset,
                                       const std::vector<CameraView> &test_views,
                                       const FitConfig &cfg, const GaussianSplat *align_to,
                                       const ConsistencyOptions &options) {
    if (mvset.images.size() != mvset.views.size()) {
        throw ConfigError("split: " + std::to_string(mvset.images.size()) + " images but " +
                          std::to_string(mvset.views.size()) + " camera views");
    }
    if (test_views.empty()) throw ConfigError("evaluate: no test views");
    const int total = static_cast<int>(mvset.images.size());
    const ViewSplit split = stage("split", [&] {
        ViewSplit s = options.split ? *options.split : split_views(total);
        if (s.total != total) {
            throw ConfigError("split is for " + std::to_string(s.total) + " views, got " +
                              std::to_string(total));
        }
        s.validate();
        return s;
    });

    auto subset = [&](const std::vector<int> &set) {
        std::pair<std::vector<RgbImage>, std::vector<CameraView>> out;
        for (int i : split.image_indices(set)) {
            out.first.push_back(mvset.images[i]);
            out.second.push_back(mvset.views[i]);
        }
        return out;
    };
    const auto [images1, views1] = subset(split.set1);
    const auto [images2, views2] = subset(split.set2);

    ConsistencyResult result;
    std::exception_ptr fit_error;
    {
        std::jthread second;
        if (options.concurrent_fits) {
            second = std::jthread([&] {
                try {
                    result.splat2 = fit_splat(images2, views2, cfg);
                } catch (...) {
                    fit_error = std::current_exception();
                }
            });
        }
        stage("fit", [&] { result.splat1 = fit_splat(images1, views1, cfg); });
        if (!options.concurrent_fits) {
            stage("fit", [&] { result.splat2 = fit_splat(images2, views2, cfg); });
        }
    }
    if (fit_error) {
        stage("fit", [&] { std::rethrow_exception(fit_error); });
    }

    if (align_to) {
        stage("align", [&] {
            for (GaussianSplat *s : {&result.splat1, &result.splat2}) {
                const SimilarityTransform xf = icp_align_scale(*s, *align_to, options.icp_iterations,
                                                               options.resample_seed, options.icp_points);
                *s = transformed(*s, xf);
            }
        });
    }

    const int threads = std::max(1, cfg.threads);
    ConsistencyScores &sc = result.scores;
    stage("chamfer", [&] {
        const PointCloud c1 = resample_points(result.splat1, options.resample_per_gaussian,
                                              options.resample_target, options.resample_seed);
        const PointCloud c2 = resample_points(result.splat2, options.resample_per_gaussian,
                                              options.resample_target, options.resample_seed);
        sc.cd = chamfer(c1, c2, options.chamfer);
    });
    stage("depth", [&] {
        sc.depth = depth_error(result.splat1, result.splat2, test_views, options.depth_scale, threads);
    });
    stage("texture", [&] {
        StructuralPerceptualProvider fallback;
        PerceptualProvider &p = options.perceptual ? *options.perceptual : fallback;
        const TextureScores t = texture_consistency(result.splat1, result.splat2, test_views, p, threads);
        sc.cpsnr = t.cpsnr;
        sc.cssim = t.cssim;
        sc.clpips = t.clpips;
    });
    return result;
}

} // namespace mvg

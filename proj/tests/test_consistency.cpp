// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/consistency.h>
#include <mvg/error.h>
#include <mvg/render.h>
#include <mvg/synthetic.h>

#include "fixtures.h"

#include <gtest/gtest.h>

#include <set>

using namespace mvg;

TEST(SplitViews, SixteenVerbatim) {
    const auto s = split_views(16);
    EXPECT_EQ(s.set1, (std::vector<int>{0, 2, 4, 5, 6, 8, 9, 10, 11, 12, 14}));
    EXPECT_EQ(s.set2, (std::vector<int>{1, 3, 5, 6, 7, 9, 11, 12, 13, 14, 15}));
    EXPECT_EQ(s.offset, 0);
    EXPECT_EQ(s.total, 16);
}

TEST(SplitViews, EighteenVerbatim) {
    const auto s = split_views(18);
    EXPECT_EQ(s.set1, (std::vector<int>{0, 1, 2, 4, 6, 8, 10, 12, 14, 16}));
    EXPECT_EQ(s.set2, (std::vector<int>{0, 1, 2, 3, 5, 7, 9, 11, 13, 15, 17}));
}

TEST(SplitViews, TwentyOneExcludesInputView) {
    const auto s = split_views(21);
    EXPECT_EQ(s.set1, (std::vector<int>{0, 2, 4, 6, 8, 10, 12, 14, 16, 18}));
    EXPECT_EQ(s.set2, (std::vector<int>{1, 3, 5, 7, 9, 11, 13, 15, 17, 19}));
    const auto a = s.image_indices(s.set1);
    const auto b = s.image_indices(s.set2);
    std::set<int> all(a.begin(), a.end());
    for (int i : b) EXPECT_TRUE(all.insert(i).second); // disjoint
    EXPECT_EQ(all.size(), 20u);
    EXPECT_EQ(*all.begin(), 1);
    EXPECT_EQ(*all.rbegin(), 20);
}

TEST(SplitViews, UnsupportedCountListsSupported) {
    try {
        split_views(17);
        FAIL();
    } catch (const ConfigError &e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("16, 18, 21"), std::string::npos);
    }
    EXPECT_NO_THROW(custom_split({0, 1, 2}, {3, 4, 5}, 6));
    EXPECT_THROW(custom_split({0, 1, 6}, {3, 4, 5}, 6), ConfigError);
    EXPECT_THROW(custom_split({}, {3, 4, 5}, 6), ConfigError);
}

TEST(Chamfer, HandExamples) {
    PointCloud a, b;
    a.points = {Vec3(0, 0, 0)};
    b.points = {Vec3(1, 0, 0)};
    EXPECT_DOUBLE_EQ(chamfer(a, b), 200.0);
    EXPECT_DOUBLE_EQ(chamfer(a, a), 0.0);
    ChamferOptions sq;
    sq.squared = true;
    b.points = {Vec3(2, 0, 0)};
    EXPECT_DOUBLE_EQ(chamfer(a, b, sq), 800.0);
    EXPECT_THROW(chamfer(a, PointCloud{}), ConfigError);
}

TEST(Chamfer, MatchesBruteForceAndIsSymmetric) {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = fixtures::random_cloud(rng, 1 + rng.below(2000));
        const auto b = fixtures::random_cloud(rng, 1 + rng.below(2000));
        const double fast = chamfer(a, b);
        EXPECT_NEAR(fast, fixtures::brute_force_chamfer(a, b), 1e-9);
        EXPECT_EQ(fast, chamfer(b, a));
    }
}

TEST(Chamfer, DuplicatePointsAndClusters) {
    Rng rng(32);
    PointCloud a, b;
    for (int i = 0; i < 500; ++i) a.points.push_back(Vec3(0.5, 0.5, 0.5));
    b = fixtures::random_cloud(rng, 300);
    EXPECT_NEAR(chamfer(a, b), fixtures::brute_force_chamfer(a, b), 1e-9);
}

TEST(DepthError, HandOracle) {
    DepthImage d1(2, 2), d2(2, 2);
    d1.depth = {2.0, 0.0, 0.0, 0.0};
    d2.depth = {2.1, 0.0, 1.0, 0.0};
    EXPECT_NEAR(depth_error_from_maps({d1}, {d2}), 550.0, 1e-9);
    EXPECT_EQ(depth_error_from_maps({d1}, {d2}), depth_error_from_maps({d2}, {d1}));
    DepthImage empty(2, 2);
    EXPECT_EQ(depth_error_from_maps({empty, d1}, {empty, d2}), 275.0);
}

TEST(DepthError, SelfIsZeroAndSymmetric) {
    const auto a = procedural_object(1, 120);
    const auto b = procedural_object(2, 120);
    const auto views = random_test_views(3, 3, 48);
    EXPECT_EQ(depth_error(a, a, views), 0.0);
    EXPECT_NEAR(depth_error(a, b, views), depth_error(b, a, views), 1e-9);
}

TEST(DepthError, TranslationAlongViewAxis) {
    // A wall that fills the whole frame, so the union mask is every pixel.
    GaussianSplat wall;
    for (int i = -12; i <= 12; ++i)
        for (int j = -12; j <= 12; ++j)
            wall.push_back(Vec3(0.1 * i, 0.1 * j, 0.0), Vec3(0.08, 0.08, 0.01), Vec4(1, 0, 0, 0), 0.95,
                           Vec3(0.4, 0.5, 0.6));
    CameraView v;
    v.image_size = 48;
    v.distance = 2.0;
    v.fov_deg = 30.0;
    const GaussianSplat moved = transformed(wall, {1.0, Mat3::Identity(), Vec3(0, 0, -0.1)});
    const double e = depth_error(wall, moved, {v});
    EXPECT_NEAR(e, 100.0, 10.0);
}

TEST(Texture, SelfIsCapAndSymmetric) {
    const auto a = procedural_object(4, 120);
    const auto b = procedural_object(5, 120);
    const auto views = random_test_views(6, 2, 48);
    StructuralPerceptualProvider p;
    const auto self = texture_consistency(a, a, views, p);
    EXPECT_EQ(self.cpsnr, 100.0);
    EXPECT_NEAR(self.cssim, 1.0, 1e-12);
    EXPECT_NEAR(self.clpips, 0.0, 1e-12);
    const auto ab = texture_consistency(a, b, views, p);
    const auto ba = texture_consistency(b, a, views, p);
    EXPECT_NEAR(ab.cpsnr, ba.cpsnr, 1e-9);
    EXPECT_NEAR(ab.cssim, ba.cssim, 1e-9);
    EXPECT_NEAR(ab.clpips, ba.clpips, 1e-9);
    EXPECT_LT(ab.cpsnr, 100.0);
}

TEST(Texture, ProviderFailurePropagates) {
    const auto a = procedural_object(4, 60);
    CommandPerceptualProvider broken("/nonexistent/tool");
    EXPECT_THROW(texture_consistency(a, a, random_test_views(1, 1, 32), broken), ProviderError);
}

TEST(Similarity, ClosedFormRecovery) {
    Rng rng(41);
    const auto src = fixtures::random_cloud(rng, 50);
    const SimilarityTransform xf{1.3, fixtures::random_rotation(rng), Vec3(0.2, -0.7, 0.4)};
    const auto dst = transformed(src, xf);
    const auto est = estimate_similarity(src.points, dst.points);
    EXPECT_NEAR(est.scale, 1.3, 1e-12);
    EXPECT_NEAR((est.rotation - xf.rotation).norm(), 0.0, 1e-12);
    EXPECT_NEAR((est.translation - xf.translation).norm(), 0.0, 1e-12);
}

TEST(Icp, IdentityOnSameCloud) {
    Rng rng(42);
    const auto c = fixtures::anisotropic_cloud(rng, 800);
    const auto r = icp_align_points(c, c);
    EXPECT_NEAR(r.transform.scale, 1.0, 1e-6);
    EXPECT_NEAR((r.transform.rotation - Mat3::Identity()).norm(), 0.0, 1e-6);
    EXPECT_NEAR(r.transform.translation.norm(), 0.0, 1e-6);
}

TEST(Icp, RecoversScaledRotatedTranslated) {
    Rng rng(43);
    const auto c = fixtures::anisotropic_cloud(rng, 1500);
    SimilarityTransform xf;
    xf.scale = 2.0;
    xf.rotation = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitY()).toRotationMatrix();
    xf.translation = Vec3(1, 0, 0);
    const auto r = icp_align_points(c, transformed(c, xf));
    EXPECT_NEAR(r.transform.scale, 2.0, 1e-3);
    EXPECT_LT((r.transform.rotation - xf.rotation).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LT((r.transform.translation - xf.translation).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Icp, SmallRotationReducesResidual) {
    Rng rng(44);
    const auto c = fixtures::anisotropic_cloud(rng, 1000);
    const SimilarityTransform xf{1.0, Eigen::AngleAxisd(5.0 * M_PI / 180.0, Vec3(1, 1, 0).normalized()).toRotationMatrix(),
                                 Vec3::Zero()};
    const auto r = icp_align_points(c, transformed(c, xf));
    EXPECT_LT(r.rms, r.initial_rms);
}

TEST(Icp, DegenerateCloudsRejected) {
    PointCloud line;
    for (int i = 0; i < 50; ++i) line.points.emplace_back(0.1 * i, 0.0, 0.0);
    Rng rng(45);
    const auto c = fixtures::anisotropic_cloud(rng, 100);
    EXPECT_THROW(icp_align_points(line, c), ConfigError);
    EXPECT_THROW(icp_align_points(c, line), ConfigError);
    PointCloud plane;
    for (int i = 0; i < 100; ++i) plane.points.emplace_back(rng.normal(), rng.normal(), 0.0);
    EXPECT_THROW(icp_align_points(plane, c), ConfigError);
}

TEST(Icp, SplatAlignment) {
    const auto a = procedural_object(7, 300);
    const SimilarityTransform xf{1.4, Eigen::AngleAxisd(0.6, Vec3::UnitY()).toRotationMatrix(), Vec3(0.1, 0.2, -0.1)};
    const auto b = transformed(a, xf);
    const auto est = icp_align_scale(a, b, 50, 0, 5000);
    // Both clouds are resampled with the same seed, so they correspond exactly.
    EXPECT_NEAR(est.scale, 1.4, 1e-3);
    EXPECT_LT((est.rotation - xf.rotation).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LT((est.translation - xf.translation).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(NormalizeScore, ReferenceArithmetic) {
    EXPECT_NEAR(normalize_score(3.15, MetricKind::Chamfer, 0.0, 15.40), 1.0 - 3.15 / 15.40, 1e-15);
    EXPECT_NEAR(normalize_score(3.15, MetricKind::Chamfer, 0.0, 15.40), 0.795, 5e-4);
    EXPECT_NEAR(normalize_score(28.93, MetricKind::CPsnr, 30.80, 0.0), 0.939, 5e-4);
    EXPECT_EQ(normalize_score(30.0, MetricKind::CPsnr, 30.0, 0.0), 1.0);
}

TEST(NormalizeScore, ClampAndErrors) {
    EXPECT_EQ(normalize_score(40.0, MetricKind::CPsnr, 30.0, 0.0), 1.0);
    EXPECT_EQ(normalize_score(-1.0, MetricKind::CSsim, 0.9, 0.0), 0.0);
    EXPECT_EQ(normalize_score(20.0, MetricKind::Depth, 0.0, 10.0), 0.0);
    EXPECT_THROW(normalize_score(1.0, MetricKind::CPsnr, 0.0, 5.0), ConfigError);
    EXPECT_THROW(normalize_score(1.0, MetricKind::CLpips, 5.0, 0.0), ConfigError);
    EXPECT_THROW(normalize_score(1.0, MetricKind::Chamfer, 5.0, -1.0), ConfigError);
}

TEST(NormalizeScore, MonotoneOnRandomInputs) {
    Rng rng(46);
    for (int i = 0; i < 1000; ++i) {
        const double a = rng.uniform(0, 50), b = rng.uniform(0, 50);
        const double lo = std::min(a, b), hi = std::max(a, b);
        const double bound = rng.uniform(1, 40);
        for (MetricKind k : {MetricKind::Chamfer, MetricKind::Depth, MetricKind::CLpips}) {
            const double nlo = normalize_score(lo, k, 0.0, bound), nhi = normalize_score(hi, k, 0.0, bound);
            EXPECT_GE(nlo, nhi);
            EXPECT_GE(nhi, 0.0);
            EXPECT_LE(nlo, 1.0);
        }
        for (MetricKind k : {MetricKind::CPsnr, MetricKind::CSsim}) {
            const double nlo = normalize_score(lo, k, bound, 0.0), nhi = normalize_score(hi, k, bound, 0.0);
            EXPECT_LE(nlo, nhi);
            EXPECT_GE(nlo, 0.0);
            EXPECT_LE(nhi, 1.0);
        }
    }
}

TEST(ConsistencyScores, JsonRoundTrip) {
    ConsistencyScores s{1.5, 2.5, 30.0, 0.9, 0.05};
    const nlohmann::json j = s;
    const auto b = j.get<ConsistencyScores>();
    EXPECT_EQ(b.cd, 1.5);
    EXPECT_EQ(b.clpips, 0.05);
    EXPECT_EQ(s.get(MetricKind::CPsnr), 30.0);
}

TEST(EvaluateConsistency, UnsupportedCountIsSplitError) {
    MultiViewSet mv;
    mv.views = orbit_views(40, 10, 2, 17, 0, 32);
    mv.images.assign(17, RgbImage(32, 32));
    try {
        evaluate_consistency(mv, random_test_views(1, 2, 32), FitConfig{});
        FAIL();
    } catch (const ConfigError &e) {
        EXPECT_EQ(std::string(e.what()).rfind("split:", 0), 0u);
    }
    mv.images.pop_back();
    EXPECT_THROW(evaluate_consistency(mv, random_test_views(1, 2, 32), FitConfig{}), ConfigError);
}

namespace {

MultiViewSet gt_set(const GaussianSplat &object, int size) {
    MultiViewSet mv;
    mv.object_id = "obj";
    mv.method_id = "gt";
    mv.views = orbit_views(33.8, 12.5, 2.35, 21, 0.0, size);
    mv.images = render_views(object, mv.views);
    return mv;
}

} // namespace

TEST(EvaluateConsistency, GroundTruthRendersAreSelfConsistentAtDeskScale) {
    const auto object = procedural_object(11, 300);
    const auto mv = gt_set(object, 128);
    const auto r = evaluate_consistency(mv, random_test_views(12, 16, 128), FitConfig::desk());
    EXPECT_GE(r.scores.cssim, 0.90);
    EXPECT_LE(r.scores.clpips, 0.08);
    EXPECT_GT(r.splat1.size(), 0u);
    EXPECT_GT(r.splat2.size(), 0u);
}

TEST(EvaluateConsistency, RecoloredViewsLowerCPsnr) {
    const auto object = procedural_object(13, 300);
    auto recolored = object;
    for (auto &c : recolored.colors) c = Vec3(c.z(), c.x(), c.y());
    FitConfig cfg;
    cfg.image_size = 64;
    cfg.steps = 600;
    cfg.init_points = 2000;
    const auto clean = gt_set(object, 64);
    auto dirty = clean;
    for (int i : {2, 5, 9, 14, 17}) dirty.images[i] = render_rgb(recolored, dirty.views[i]);
    const auto tv = random_test_views(14, 8, 64);
    ConsistencyOptions opt;
    opt.concurrent_fits = false;
    const auto a = evaluate_consistency(clean, tv, cfg, nullptr, opt);
    const auto b = evaluate_consistency(dirty, tv, cfg, nullptr, opt);
    EXPECT_LT(b.scores.cpsnr, a.scores.cpsnr);
}

// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/error.h>
#include <mvg/harness.h>
#include <mvg/synthetic.h>

#include "fixtures.h"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace mvg;
namespace fs = std::filesystem;

namespace {

void write_blank_run(const fs::path &dir, const MethodSetup &setup, int count) {
    auto views = setup.output_orbit(16);
    views.resize(static_cast<std::size_t>(count), views.back());
    write_multiview(dir.string(), std::vector<RgbImage>(static_cast<std::size_t>(count), RgbImage(16, 16, 0.5)),
                    views);
}

nlohmann::json base_manifest() {
    return {{"seed", 3},
            {"methods", {{{"id", "sv3d"}, {"preset", "sv3d"}}}},
            {"conditions", {{{"id", "best"}, {"aspect", "best"}}}},
            {"objects", {{{"id", "mug"}, {"runs", {{{"method", "sv3d"}, {"condition", "best"}, {"dir", "mug/sv3d"}}}}}}}};
}

bool mentions(const std::vector<std::string> &problems, const std::string &a, const std::string &b = "") {
    for (const auto &p : problems) {
        if (p.find(a) != std::string::npos && p.find(b) != std::string::npos) return true;
    }
    return false;
}

nlohmann::json row(const std::string &object, const std::string &method, nlohmann::json raw,
                   bool ground_truth = false) {
    nlohmann::json full;
    for (const auto &d : report_dimensions()) full[d] = raw.contains(d) ? raw[d] : nlohmann::json(nullptr);
    return {{"object", object},
            {"condition", "best"},
            {"method", method},
            {"aspect", "best"},
            {"ground_truth", ground_truth},
            {"seed", 1},
            {"fit", nlohmann::json::object()},
            {"test_views_hash", "h-" + object},
            {"gt_upper_bounds", {{"cpsnr", 25.0}, {"cssim", 0.9}}},
            {"status", "ok"},
            {"raw", full}};
}

const nlohmann::json &aggregate_of(const nlohmann::json &report, const std::string &method) {
    for (const auto &e : report.at("aggregate")) {
        if (e.at("method") == method) return e;
    }
    throw std::runtime_error("no aggregate for " + method);
}

} // namespace

TEST(Presets, Snapshot) {
    const auto &p = method_presets();
    ASSERT_EQ(p.size(), 4u);
    auto expect = [](const MethodSetup &m, double fov, double elev, double dist, int count, double out) {
        EXPECT_DOUBLE_EQ(m.fov_deg, fov) << m.method_id;
        EXPECT_DOUBLE_EQ(m.input_elevation_deg, elev) << m.method_id;
        EXPECT_DOUBLE_EQ(m.input_distance, dist) << m.method_id;
        EXPECT_EQ(m.output_view_count, count) << m.method_id;
        EXPECT_DOUBLE_EQ(m.output_elevation_deg, out) << m.method_id;
    };
    expect(method_preset("syncdreamer"), 49.1, 30.0, 1.5, 16, 30.0);
    expect(method_preset("v3d"), 60.0, 0.0, 2.0, 18, 0.0);
    expect(method_preset("sv3d"), 33.8, 12.5, 2.35, 21, 12.5);
    expect(method_preset("zero123"), 49.1, 0.0, 1.85, 21, 0.0);
    EXPECT_THROW(method_preset("dreamfusion"), ConfigError);
}

TEST(Presets, OutputOrbit) {
    const auto orbit = method_preset("sv3d").output_orbit(64);
    ASSERT_EQ(orbit.size(), 21u);
    EXPECT_DOUBLE_EQ(orbit[0].azimuth_deg, 0.0);
    EXPECT_NEAR(orbit[1].azimuth_deg, 360.0 / 21.0, 1e-12);
    for (const auto &v : orbit) {
        EXPECT_DOUBLE_EQ(v.elevation_deg, 12.5);
        EXPECT_DOUBLE_EQ(v.distance, 2.35);
        EXPECT_DOUBLE_EQ(v.fov_deg, 33.8);
        EXPECT_EQ(v.image_size, 64);
    }
}

TEST(Aspects, Names) {
    for (auto a : {Aspect::Best, Aspect::Real, Aspect::RobustLight, Aspect::RobustAzimuth, Aspect::RobustElevation}) {
        EXPECT_EQ(aspect_from_name(aspect_name(a)), a);
    }
    EXPECT_TRUE(uses_random_test_views(Aspect::Best));
    EXPECT_TRUE(uses_random_test_views(Aspect::RobustLight));
    EXPECT_FALSE(uses_random_test_views(Aspect::Real));
    EXPECT_FALSE(uses_random_test_views(Aspect::RobustElevation));
    EXPECT_THROW(aspect_from_name("fast"), ConfigError);
}

TEST(Manifest, ValidPlanHasNoProblems) {
    const auto dir = fixtures::scratch_dir("manifest-ok");
    write_blank_run(dir / "mug/sv3d", method_preset("sv3d"), 21);
    const auto plan = parse_manifest(base_manifest(), dir.string());
    EXPECT_TRUE(validate_plan(plan).empty());
    EXPECT_EQ(plan.objects[0].runs[0].dir, (dir / "mug/sv3d").string());
    EXPECT_EQ(plan.method("sv3d")->setup.output_view_count, 21);
}

TEST(Manifest, WrongImageCountNamesTheRun) {
    const auto dir = fixtures::scratch_dir("manifest-count");
    write_blank_run(dir / "mug/sv3d", method_preset("sv3d"), 20);
    const auto problems = validate_plan(parse_manifest(base_manifest(), dir.string()));
    ASSERT_FALSE(problems.empty());
    EXPECT_TRUE(mentions(problems, "object mug, method sv3d", "20 images but the method generates 21"));
}

TEST(Manifest, ListsEveryProblem) {
    const auto dir = fixtures::scratch_dir("manifest-many");
    auto j = base_manifest();
    j["objects"][0]["runs"].push_back({{"method", "nope"}, {"condition", "best"}, {"dir", "mug/nope"}});
    j["conditions"].push_back({{"id", "real1"}, {"aspect", "real"}});
    j["objects"][0]["gt_features"] = "mug/gt.mvgf";
    const auto problems = validate_plan(parse_manifest(j, dir.string()));
    EXPECT_TRUE(mentions(problems, "method sv3d", "missing directory"));
    EXPECT_TRUE(mentions(problems, "unknown method_id 'nope'"));
    EXPECT_TRUE(mentions(problems, "real-image conditions need reference_method"));
    EXPECT_TRUE(mentions(problems, "missing gt_features"));
    EXPECT_GE(problems.size(), 4u);

    std::ofstream(dir / "manifest.json") << j.dump();
    try {
        load_manifest((dir / "manifest.json").string());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError &e) {
        EXPECT_NE(std::string(e.what()).find("unknown method_id"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("reference_method"), std::string::npos);
    }
}

TEST(Manifest, ElevationSweepBounds) {
    const auto dir = fixtures::scratch_dir("manifest-elev");
    write_blank_run(dir / "mug/sv3d", method_preset("sv3d"), 21);
    auto j = base_manifest();
    j["conditions"].push_back({{"id", "e80"}, {"aspect", "robust-elevation"}, {"input_elevation_deg", 80}});
    j["conditions"].push_back({{"id", "e-"}, {"aspect", "robust-elevation"}});
    const auto problems = validate_plan(parse_manifest(j, dir.string()));
    EXPECT_TRUE(mentions(problems, "e80", "(-75, 75)"));
    EXPECT_TRUE(mentions(problems, "e-", "needs input_elevation_deg"));
}

TEST(Manifest, ConditionsFromShippedGrid) {
    const auto dir = fixtures::scratch_dir("manifest-grid");
    write_blank_run(dir / "mug/sv3d", method_preset("sv3d"), 21);
    fs::copy_file(fs::path(MVG_SOURCE_DIR) / "presets/robustness_grid.json", dir / "grid.json");
    auto j = base_manifest();
    j["conditions"] = "grid.json";
    j["objects"][0]["runs"][0]["condition"] = "elevation-20";
    const auto plan = parse_manifest(j, dir.string());
    EXPECT_TRUE(validate_plan(plan).empty());
    const Condition *c = plan.condition("elevation-20");
    ASSERT_NE(c, nullptr);
    EXPECT_EQ(c->aspect, Aspect::RobustElevation);
    EXPECT_EQ(c->input_elevation_deg, 20.0);
    ASSERT_NE(plan.condition("light-0.5"), nullptr);
    ASSERT_NE(plan.condition("azimuth-90"), nullptr);
}

TEST(Ingestion, RoundTrip) {
    const auto dir = fixtures::scratch_dir("ingest");
    const auto setup = method_preset("v3d");
    const auto views = setup.output_orbit(24);
    std::vector<RgbImage> images;
    for (int i = 0; i < 18; ++i) images.emplace_back(24, 24, i / 17.0);
    write_multiview(dir.string(), images, views);
    EXPECT_EQ(ingestion_images(dir.string()).size(), 18u);
    const auto set = load_multiview(dir.string(), "o", "v3d");
    ASSERT_EQ(set.images.size(), 18u);
    ASSERT_EQ(set.views.size(), 18u);
    EXPECT_NEAR(set.images[17].at(3, 3, 1), 1.0, 1e-12);
    EXPECT_NEAR(set.views[5].azimuth_deg, views[5].azimuth_deg, 1e-12);
    fs::remove(dir / "poses.json");
    EXPECT_THROW(load_multiview(dir.string(), "o", "v3d"), Error);
}

TEST(TestViews, SharedAcrossMethodsAndSeeded) {
    EvaluationPlan plan;
    plan.seed = 11;
    plan.fit.image_size = 32;
    Condition best;
    best.id = "best";
    const auto a = plan_test_views(plan, "mug", best);
    const auto b = plan_test_views(plan, "mug", best);
    const auto c = plan_test_views(plan, "vase", best);
    ASSERT_EQ(a.size(), 16u);
    EXPECT_EQ(views_hash(a), views_hash(b));
    EXPECT_NE(views_hash(a), views_hash(c));
    for (const auto &v : a) {
        EXPECT_GE(v.elevation_deg, -15.0);
        EXPECT_LE(v.elevation_deg, 45.0);
        EXPECT_EQ(v.image_size, 32);
    }
    Condition elev;
    elev.id = "e20";
    elev.aspect = Aspect::RobustElevation;
    elev.input_elevation_deg = 20.0;
    const auto f = plan_test_views(plan, "mug", elev);
    ASSERT_EQ(f.size(), 16u);
    EXPECT_DOUBLE_EQ(f[0].elevation_deg, 35.0);
    EXPECT_DOUBLE_EQ(f[8].elevation_deg, 5.0);
    EXPECT_DOUBLE_EQ(f[0].distance, 3.2);
}

TEST(Report, SingleRow) {
    const auto report = build_report({row("mug", "a", {{"cd", 2.0}, {"cpsnr", 20.0}, {"quality", 0.5}})});
    const auto &agg = aggregate_of(report, "a");
    // A lone row is its own worst case on error dimensions.
    EXPECT_EQ(agg["normalized"]["cd"], 0.0);
    EXPECT_DOUBLE_EQ(agg["normalized"]["cpsnr"].get<double>(), 0.8);
    EXPECT_DOUBLE_EQ(agg["normalized"]["quality"].get<double>(), 0.5);
    EXPECT_TRUE(agg["normalized"]["ofid"].is_null());
    EXPECT_EQ(agg["counts"]["ofid"], 0);
    EXPECT_FALSE(report["partial"].get<bool>());
}

TEST(Report, HandComputedMeans) {
    std::vector<nlohmann::json> rows{
        row("mug", "a", {{"cd", 2.0}, {"depth", 10.0}, {"cpsnr", 20.0}, {"cssim", 0.72}, {"clpips", 0.1}}),
        row("mug", "b", {{"cd", 4.0}, {"depth", 5.0}, {"cpsnr", 25.0}, {"cssim", 0.9}, {"clpips", 0.2}}),
        row("vase", "a", {{"cd", 1.0}, {"depth", 4.0}, {"cpsnr", 10.0}, {"cssim", 0.45}, {"clpips", 0.3}}),
        row("vase", "b", {{"cd", 3.0}, {"depth", 4.0}, {"cpsnr", 30.0}, {"cssim", 0.99}, {"clpips", 0.1}}),
    };
    const auto report = build_report(rows);
    const auto &a = aggregate_of(report, "a")["normalized"];
    const auto &b = aggregate_of(report, "b")["normalized"];
    // mug: cd a 0.5 b 0; vase: a 2/3 b 0.
    EXPECT_NEAR(a["cd"].get<double>(), (0.5 + 2.0 / 3.0) / 2.0, 1e-12);
    EXPECT_NEAR(b["cd"].get<double>(), 0.0, 1e-12);
    EXPECT_NEAR(a["depth"].get<double>(), (0.0 + 0.0) / 2.0, 1e-12);
    EXPECT_NEAR(b["depth"].get<double>(), (0.5 + 0.0) / 2.0, 1e-12);
    EXPECT_NEAR(a["cpsnr"].get<double>(), (0.8 + 0.4) / 2.0, 1e-12);
    EXPECT_NEAR(b["cpsnr"].get<double>(), (1.0 + 1.0) / 2.0, 1e-12);
    EXPECT_NEAR(a["cssim"].get<double>(), (0.8 + 0.5) / 2.0, 1e-12);
    EXPECT_NEAR(a["clpips"].get<double>(), (0.5 + 0.0) / 2.0, 1e-12);
    EXPECT_NEAR(aggregate_of(report, "a")["raw"]["cd"].get<double>(), 1.5, 1e-12);

    // Aggregates are recomputable from the normalized rows.
    for (const auto &e : report["aggregate"]) {
        for (const auto &d : report_dimensions()) {
            double sum = 0.0;
            int n = 0;
            for (const auto &r : report["rows"]) {
                if (r["method"] != e["method"] || r["normalized"][d].is_null()) continue;
                sum += r["normalized"][d].get<double>();
                ++n;
            }
            if (n == 0) {
                EXPECT_TRUE(e["normalized"][d].is_null());
            } else {
                EXPECT_NEAR(e["normalized"][d].get<double>(), sum / n, 1e-12);
            }
        }
    }
    const auto radar = radar_json(report);
    for (const auto &m : radar["methods"]) {
        for (const auto &[k, v] : m["values"].items()) {
            if (v.is_null()) continue;
            EXPECT_GE(v.get<double>(), 0.0) << k;
            EXPECT_LE(v.get<double>(), 1.0) << k;
        }
    }
    // Row order does not matter.
    std::reverse(rows.begin(), rows.end());
    EXPECT_EQ(build_report(rows).dump(), report.dump());
}

TEST(Report, GroundTruthRowSetsRatioBound) {
    const auto report = build_report({
        row("mug", "gt", {{"cpsnr", 40.0}, {"cssim", 0.95}}, true),
        row("mug", "a", {{"cpsnr", 20.0}, {"cssim", 0.76}}),
    });
    EXPECT_DOUBLE_EQ(aggregate_of(report, "a")["normalized"]["cpsnr"].get<double>(), 0.5);
    EXPECT_NEAR(aggregate_of(report, "a")["normalized"]["cssim"].get<double>(), 0.8, 1e-12);
    EXPECT_DOUBLE_EQ(aggregate_of(report, "gt")["normalized"]["cpsnr"].get<double>(), 1.0);
}

TEST(Report, FailedRowsAndMismatchedViews) {
    auto bad = row("mug", "b", {});
    bad["status"] = "error";
    bad["error"] = "fit: diverged";
    const auto report = build_report({row("mug", "a", {{"cd", 1.0}}), bad});
    EXPECT_TRUE(report["partial"].get<bool>());
    ASSERT_EQ(report["failed_units"].size(), 1u);
    EXPECT_EQ(aggregate_of(report, "b")["rows"], 0);

    auto other = row("mug", "b", {{"cd", 1.0}});
    other["test_views_hash"] = "different";
    EXPECT_THROW(build_report({row("mug", "a", {{"cd", 1.0}}), other}), ConfigError);
    EXPECT_THROW(build_report({}), ConfigError);
}

TEST(Report, CsvColumns) {
    const auto report = build_report({row("mug", "a", {{"cd", 2.0}})});
    std::istringstream csv(summary_csv(report));
    std::string header, line;
    std::getline(csv, header);
    std::getline(csv, line);
    EXPECT_EQ(header.rfind("method,rows,cd,depth,cpsnr,cssim,clpips,ofid,quality,class,color,style,cd_norm", 0), 0u);
    EXPECT_EQ(line.rfind("a,1,2.0,", 0), 0u);
}

TEST(Run, SyntheticEndToEndAndResume) {
    const auto dir = fixtures::scratch_dir("run-synth");
    SyntheticPlanOptions opt;
    opt.out_dir = (dir / "plan").string();
    opt.seed = 5;
    opt.gaussians = 120;
    opt.image_size = 48;
    opt.fit_steps = 40;
    opt.fit_image_size = 32;
    opt.fit_init_points = 400;
    opt.test_view_count = 4;
    const auto manifest = write_synthetic_plan(opt);
    const auto plan = load_manifest(manifest);

    RunOptions ro;
    ro.out_dir = (dir / "out").string();
    ro.workers = 2;
    const auto first = run_aspect(plan, Aspect::Best, ro);
    EXPECT_EQ(first.units, 2);
    EXPECT_EQ(first.computed, 2);
    EXPECT_EQ(first.failed, 0);
    EXPECT_TRUE(fs::is_regular_file(dir / "out/best/report.json"));
    EXPECT_TRUE(fs::is_regular_file(dir / "out/best/summary.csv"));
    EXPECT_TRUE(fs::is_regular_file(dir / "out/best/radar.json"));
    for (const auto &r : first.report["rows"]) {
        EXPECT_EQ(r["status"], "ok") << r.value("error", "");
        for (const auto &d : {"cd", "depth", "cpsnr", "cssim", "clpips"}) EXPECT_TRUE(r["raw"][d].is_number()) << d;
    }

    const auto second = run_aspect(plan, Aspect::Best, ro);
    EXPECT_EQ(second.reused, 2);
    EXPECT_EQ(second.computed, 0);
    EXPECT_EQ(second.report.dump(), first.report.dump());

    // A changed fit config invalidates the rows.
    auto changed = plan;
    changed.fit.steps += 1;
    const auto third = run_aspect(changed, Aspect::Best, ro);
    EXPECT_EQ(third.computed, 2);
}

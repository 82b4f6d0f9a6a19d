// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_HARNESS_H
#define MVG_HARNESS_H

#include <mvg/consistency.h>
#include <mvg/fit.h>
#include <mvg/geometry.h>
#include <mvg/vlm.h>

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mvg {

inline constexpr const char *kEngineVersion = "mvg-eval 0.1.0";

// ---------------------------------------------------------------------------
// Methods

/// Camera setup a method was trained with, plus the orbit it generates on.
struct MethodSetup {
    std::string method_id;
    double fov_deg = 0.0;
    double input_elevation_deg = 0.0;
    double input_distance = 0.0;
    int output_view_count = 0;
    /// Elevation of the generated orbit; the methods studied keep the input elevation.
    double output_elevation_deg = 0.0;

    /// Evenly spaced azimuths from 0 at output_elevation_deg, input distance and fov.
    std::vector<CameraView> output_orbit(int image_size = 256) const;

    void validate() const;
};

/// Built-in presets: "syncdreamer", "v3d", "sv3d", "zero123".
const std::vector<MethodSetup> &method_presets();
MethodSetup method_preset(const std::string &name);

void to_json(nlohmann::json &j, const MethodSetup &m);

// ---------------------------------------------------------------------------
// Plans

enum class Aspect { Best, Real, RobustLight, RobustAzimuth, RobustElevation };

const char *aspect_name(Aspect a);
Aspect aspect_from_name(const std::string &name);

/// Best and the light/azimuth sweeps render at random views; real and the
/// elevation sweep at fixed offsets from the output elevation.
bool uses_random_test_views(Aspect a);

struct Condition {
    std::string id;
    Aspect aspect = Aspect::Best;
    std::optional<double> light_intensity;
    std::optional<double> input_azimuth_deg;
    std::optional<double> input_elevation_deg;
};

struct PlanMethod {
    std::string id;
    MethodSetup setup;
    /// Runs of this method hold ground-truth renders; their ratio metrics act
    /// as the normalization upper bound.
    bool ground_truth = false;
};

struct RunRef {
    std::string method;
    std::string condition;
    std::string dir;      // resolved
    std::string features; // resolved, optional
};

struct PlanObject {
    std::string id;
    std::optional<ReferenceAttributes> attributes;
    std::string gt_features; // resolved, optional
    std::vector<RunRef> runs;
};

struct GtUpperBounds {
    std::optional<double> cpsnr;
    std::optional<double> cssim;
};

struct VlmPlan {
    std::optional<VlmClientConfig> client;
    std::string replay; // resolved fixture path, optional
    int parallelism = 4;
};

struct EvaluationPlan {
    std::uint64_t seed = 0;
    int test_view_count = 16;
    /// 0 means the fit resolution.
    int test_image_size = 0;
    FitConfig fit;
    std::string reference_method;
    std::string perceptual = "structural";
    std::vector<PlanMethod> methods;
    std::vector<Condition> conditions;
    std::vector<PlanObject> objects;
    GtUpperBounds gt_upper_bounds;
    std::optional<VlmPlan> vlm;
    std::string base_dir;

    const PlanMethod *method(const std::string &id) const;
    const Condition *condition(const std::string &id) const;
};

/// Parses a manifest; relative paths resolve against the manifest directory.
/// Throws ConfigError listing every problem found by validate_plan().
EvaluationPlan load_manifest(const std::string &path);
EvaluationPlan parse_manifest(const nlohmann::json &j, const std::string &base_dir);

/// All problems with a plan and the files it references; empty when valid.
std::vector<std::string> validate_plan(const EvaluationPlan &plan);

// ---------------------------------------------------------------------------
// Ingestion layout: <dir>/view_000.png ... and <dir>/poses.json (camera list).

std::vector<std::string> ingestion_images(const std::string &dir);
MultiViewSet load_multiview(const std::string &dir, const std::string &object_id,
                            const std::string &method_id);
void write_multiview(const std::string &dir, const std::vector<RgbImage> &images,
                     const std::vector<CameraView> &views);

// ---------------------------------------------------------------------------
// Running

/// Test cameras for an (object, condition); identical for every method.
std::vector<CameraView> plan_test_views(const EvaluationPlan &plan, const std::string &object_id,
                                        const Condition &condition);

struct RunOptions {
    std::string out_dir;
    int workers = 1;
    /// Optional log sink for progress lines.
    std::ostream *log = nullptr;
};

struct RunSummary {
    int units = 0;
    int computed = 0;
    int reused = 0;
    int failed = 0;
    nlohmann::json report;
};

/// Evaluates every run whose condition has the given aspect. Each unit writes
/// <out>/rows/<aspect>/<object>__<condition>__<method>.json as it completes and
/// finished rows are reused on restart. The report files are then rebuilt
/// from the rows into <out>/<aspect>/ (see write_report).
RunSummary run_aspect(const EvaluationPlan &plan, Aspect aspect, const RunOptions &options);

// ---------------------------------------------------------------------------
// Reports

/// The ten report dimensions in column order.
const std::vector<std::string> &report_dimensions();

std::vector<nlohmann::json> load_rows(const std::string &rows_dir);

/// Normalizes rows within each (object, condition) group and averages per
/// method. Pure function of the row set; ordering is by (object, condition,
/// method) and method id.
nlohmann::json build_report(std::vector<nlohmann::json> rows);

/// report.json, summary.csv and radar.json.
void write_report(const nlohmann::json &report, const std::string &out_dir);

std::string summary_csv(const nlohmann::json &report);
nlohmann::json radar_json(const nlohmann::json &report);

} // namespace mvg

#endif // MVG_HARNESS_H

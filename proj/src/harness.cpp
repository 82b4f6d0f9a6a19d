// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/harness.h>

#include <mvg/error.h>
#include <mvg/image.h>
#include <mvg/parallel.h>
#include <mvg/ply.h>
#include <mvg/random.h>
#include <mvg/semantic.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace mvg {

// ---------------------------------------------------------------------------
// Methods

std::vector<CameraView> MethodSetup::output_orbit(int image_size) const {
    return orbit_views(fov_deg, output_elevation_deg, input_distance, output_view_count, 0.0,
                       image_size);
}

void MethodSetup::validate() const {
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError(method_id + ": fov must be in (0, 180)");
    if (!(input_distance > 0.0)) throw ConfigError(method_id + ": input distance must be positive");
    if (output_view_count < 2) throw ConfigError(method_id + ": output view count must be >= 2");
}

const std::vector<MethodSetup> &method_presets() {
    static const std::vector<MethodSetup> presets{
        {"syncdreamer", 49.1, 30.0, 1.5, 16, 30.0},
        {"v3d", 60.0, 0.0, 2.0, 18, 0.0},
        {"sv3d", 33.8, 12.5, 2.35, 21, 12.5},
        {"zero123", 49.1, 0.0, 1.85, 21, 0.0},
    };
    return presets;
}

MethodSetup method_preset(const std::string &name) {
    for (const auto &m : method_presets()) {
        if (m.method_id == name) return m;
    }
    throw ConfigError("unknown method preset '" + name + "' (known: syncdreamer, v3d, sv3d, zero123)");
}

void to_json(nlohmann::json &j, const MethodSetup &m) {
    j = {{"method_id", m.method_id},
         {"fov_deg", m.fov_deg},
         {"input_elevation_deg", m.input_elevation_deg},
         {"input_distance", m.input_distance},
         {"output_view_count", m.output_view_count},
         {"output_elevation_deg", m.output_elevation_deg}};
}

// ---------------------------------------------------------------------------
// Plans

const char *aspect_name(Aspect a) {
    switch (a) {
    case Aspect::Best: return "best";
    case Aspect::Real: return "real";
    case Aspect::RobustLight: return "robust-light";
    case Aspect::RobustAzimuth: return "robust-azimuth";
    case Aspect::RobustElevation: return "robust-elevation";
    }
    return "?";
}

Aspect aspect_from_name(const std::string &name) {
    for (Aspect a : {Aspect::Best, Aspect::Real, Aspect::RobustLight, Aspect::RobustAzimuth,
                     Aspect::RobustElevation}) {
        if (name == aspect_name(a)) return a;
    }
    throw ConfigError("unknown aspect '" + name +
                      "' (expected best, real, robust-light, robust-azimuth or robust-elevation)");
}

bool uses_random_test_views(Aspect a) {
    return a == Aspect::Best || a == Aspect::RobustLight || a == Aspect::RobustAzimuth;
}

const PlanMethod *EvaluationPlan::method(const std::string &id) const {
    for (const auto &m : methods) {
        if (m.id == id) return &m;
    }
    return nullptr;
}

const Condition *EvaluationPlan::condition(const std::string &id) const {
    for (const auto &c : conditions) {
        if (c.id == id) return &c;
    }
    return nullptr;
}

namespace {

std::string resolve(const std::string &base, const std::string &p) {
    if (p.empty()) return p;
    const fs::path path(p);
    return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

template <typename T> std::optional<T> opt(const nlohmann::json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

bool valid_id(const std::string &id) {
    static const std::regex re("[A-Za-z0-9_.+-]+");
    return std::regex_match(id, re);
}

} // namespace

EvaluationPlan parse_manifest(const nlohmann::json &j, const std::string &base_dir) {
    EvaluationPlan plan;
    plan.base_dir = base_dir;
    try {
        plan.seed = j.value("seed", std::uint64_t{0});
        plan.test_view_count = j.value("test_view_count", plan.test_view_count);
        plan.test_image_size = j.value("test_image_size", plan.test_image_size);
        if (j.contains("fit")) plan.fit = j.at("fit").get<FitConfig>();
        plan.reference_method = j.value("reference_method", std::string());
        plan.perceptual = j.value("perceptual", plan.perceptual);

        for (const auto &m : j.at("methods")) {
            PlanMethod pm;
            pm.id = m.at("id").get<std::string>();
            if (m.contains("preset")) {
                pm.setup = method_preset(m.at("preset").get<std::string>());
            }
            pm.setup.method_id = pm.id;
            pm.setup.fov_deg = m.value("fov_deg", pm.setup.fov_deg);
            pm.setup.input_elevation_deg = m.value("input_elevation_deg", pm.setup.input_elevation_deg);
            pm.setup.input_distance = m.value("input_distance", pm.setup.input_distance);
            pm.setup.output_view_count = m.value("output_view_count", pm.setup.output_view_count);
            pm.setup.output_elevation_deg =
                m.value("output_elevation_deg",
                        m.contains("preset") ? pm.setup.output_elevation_deg : pm.setup.input_elevation_deg);
            pm.ground_truth = m.value("ground_truth", false);
            plan.methods.push_back(pm);
        }
        // Conditions may be listed inline or in a separate file such as
        // presets/robustness_grid.json.
        nlohmann::json conditions = j.at("conditions");
        if (conditions.is_string()) {
            const std::string path = resolve(base_dir, conditions.get<std::string>());
            std::ifstream in(path);
            if (!in) throw ConfigError("cannot open conditions file " + path);
            in >> conditions;
            if (conditions.is_object()) conditions = conditions.at("conditions");
        }
        for (const auto &c : conditions) {
            Condition cond;
            cond.id = c.at("id").get<std::string>();
            cond.aspect = aspect_from_name(c.at("aspect").get<std::string>());
            cond.light_intensity = opt<double>(c, "light_intensity");
            cond.input_azimuth_deg = opt<double>(c, "input_azimuth_deg");
            cond.input_elevation_deg = opt<double>(c, "input_elevation_deg");
            plan.conditions.push_back(cond);
        }
        for (const auto &o : j.at("objects")) {
            PlanObject obj;
            obj.id = o.at("id").get<std::string>();
            if (o.contains("attributes")) obj.attributes = o.at("attributes").get<ReferenceAttributes>();
            obj.gt_features = resolve(base_dir, o.value("gt_features", std::string()));
            for (const auto &r : o.at("runs")) {
                RunRef run;
                run.method = r.at("method").get<std::string>();
                run.condition = r.at("condition").get<std::string>();
                run.dir = resolve(base_dir, r.at("dir").get<std::string>());
                run.features = resolve(base_dir, r.value("features", std::string()));
                obj.runs.push_back(run);
            }
            plan.objects.push_back(obj);
        }
        if (j.contains("gt_upper_bounds")) {
            const auto &g = j.at("gt_upper_bounds");
            plan.gt_upper_bounds.cpsnr = opt<double>(g, "cpsnr");
            plan.gt_upper_bounds.cssim = opt<double>(g, "cssim");
        }
        if (j.contains("vlm")) {
            const auto &v = j.at("vlm");
            VlmPlan vp;
            if (v.contains("client")) vp.client = v.at("client").get<VlmClientConfig>();
            vp.replay = resolve(base_dir, v.value("replay", std::string()));
            vp.parallelism = v.value("parallelism", vp.parallelism);
            plan.vlm = vp;
        }
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    return plan;
}

std::vector<std::string> ingestion_images(const std::string &dir) {
    static const std::regex re("view_[0-9]{3}\\.png");
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto &e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && std::regex_match(e.path().filename().string(), re)) {
            out.push_back(e.path().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> validate_plan(const EvaluationPlan &plan) {
    std::vector<std::string> problems;
    auto check = [&](auto &&fn, const std::string &where) {
        try {
            fn();
        } catch (const std::exception &e) {
            problems.push_back(where + ": " + e.what());
        }
    };
    check([&] { plan.fit.validate(); }, "fit");
    if (plan.test_view_count < 1) problems.push_back("test_view_count must be >= 1");
    if (plan.test_image_size != 0 && plan.test_image_size < 11) {
        problems.push_back("test_image_size must be 0 (fit size) or >= 11");
    }
    check([&] { make_perceptual_provider(plan.perceptual); }, "perceptual");
    if (plan.methods.empty()) problems.push_back("no methods");
    if (plan.objects.empty()) problems.push_back("no objects");
    if (plan.conditions.empty()) problems.push_back("no conditions");

    std::set<std::string> ids;
    for (const auto &m : plan.methods) {
        if (!valid_id(m.id)) problems.push_back("method id '" + m.id + "' must match [A-Za-z0-9_.+-]+");
        if (!ids.insert("m/" + m.id).second) problems.push_back("duplicate method id '" + m.id + "'");
        check([&] { m.setup.validate(); }, "method " + m.id);
    }
    bool needs_reference = false;
    for (const auto &c : plan.conditions) {
        if (!valid_id(c.id)) problems.push_back("condition id '" + c.id + "' must match [A-Za-z0-9_.+-]+");
        if (!ids.insert("c/" + c.id).second) problems.push_back("duplicate condition id '" + c.id + "'");
        if (c.aspect == Aspect::Real) needs_reference = true;
        if (c.aspect == Aspect::RobustElevation) {
            if (!c.input_elevation_deg) {
                problems.push_back("condition " + c.id + ": robust-elevation needs input_elevation_deg");
            } else if (!(std::abs(*c.input_elevation_deg) < 75.0)) {
                problems.push_back("condition " + c.id + ": input_elevation_deg must be in (-75, 75)");
            }
        }
        if (c.aspect == Aspect::RobustLight && !c.light_intensity) {
            problems.push_back("condition " + c.id + ": robust-light needs light_intensity");
        }
        if (c.aspect == Aspect::RobustAzimuth && !c.input_azimuth_deg) {
            problems.push_back("condition " + c.id + ": robust-azimuth needs input_azimuth_deg");
        }
    }
    if (needs_reference) {
        const PlanMethod *ref = plan.method(plan.reference_method);
        if (plan.reference_method.empty()) {
            problems.push_back("real-image conditions need reference_method");
        } else if (!ref) {
            problems.push_back("reference_method '" + plan.reference_method + "' is not a listed method");
        } else if (!(std::abs(ref->setup.output_elevation_deg) < 75.0)) {
            problems.push_back("reference_method output elevation must be in (-75, 75)");
        }
    }

    for (const auto &o : plan.objects) {
        if (!valid_id(o.id)) problems.push_back("object id '" + o.id + "' must match [A-Za-z0-9_.+-]+");
        if (!ids.insert("o/" + o.id).second) problems.push_back("duplicate object id '" + o.id + "'");
        if (o.attributes) check([&] { o.attributes->validate(); }, "object " + o.id);
        if (!o.gt_features.empty() && !fs::is_regular_file(o.gt_features)) {
            problems.push_back("object " + o.id + ": missing gt_features file " + o.gt_features);
        }
        std::set<std::string> units;
        for (const auto &r : o.runs) {
            const std::string where = "object " + o.id + ", method " + r.method + ", condition " + r.condition;
            const PlanMethod *m = plan.method(r.method);
            if (!m) problems.push_back(where + ": unknown method_id '" + r.method + "'");
            if (!plan.condition(r.condition)) problems.push_back(where + ": unknown condition '" + r.condition + "'");
            if (!units.insert(r.method + "\n" + r.condition).second) problems.push_back(where + ": duplicate run");
            if (!r.features.empty() && !fs::is_regular_file(r.features)) {
                problems.push_back(where + ": missing features file " + r.features);
            }
            if (!fs::is_directory(r.dir)) {
                problems.push_back(where + ": missing directory " + r.dir);
                continue;
            }
            const auto images = ingestion_images(r.dir);
            if (m && static_cast<int>(images.size()) != m->setup.output_view_count) {
                problems.push_back(where + ": " + std::to_string(images.size()) + " images but the method generates " +
                                   std::to_string(m->setup.output_view_count));
            }
            for (std::size_t i = 0; i < images.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "view_%03zu.png", i);
                if (fs::path(images[i]).filename() != name) {
                    problems.push_back(where + ": image names must be contiguous from view_000.png");
                    break;
                }
            }
            const std::string poses = (fs::path(r.dir) / "poses.json").string();
            if (!fs::is_regular_file(poses)) {
                problems.push_back(where + ": missing poses.json");
                continue;
            }
            try {
                const auto views = load_views_json(poses);
                if (views.size() != images.size()) {
                    problems.push_back(where + ": poses.json has " + std::to_string(views.size()) +
                                       " cameras for " + std::to_string(images.size()) + " images");
                }
            } catch (const std::exception &e) {
                problems.push_back(where + ": " + e.what());
            }
        }
    }
    return problems;
}

EvaluationPlan load_manifest(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(path + ": " + e.what());
    }
    EvaluationPlan plan = parse_manifest(j, fs::absolute(path).parent_path().string());
    const auto problems = validate_plan(plan);
    if (!problems.empty()) {
        std::string msg = path + ": " + std::to_string(problems.size()) + " problem(s)";
        for (const auto &p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Ingestion

MultiViewSet load_multiview(const std::string &dir, const std::string &object_id,
                            const std::string &method_id) {
    MultiViewSet set;
    set.object_id = object_id;
    set.method_id = method_id;
    for (const auto &p : ingestion_images(dir)) set.images.push_back(read_png(p));
    set.views = load_views_json((fs::path(dir) / "poses.json").string());
    if (set.images.size() != set.views.size()) {
        throw ConfigError(dir + ": " + std::to_string(set.images.size()) + " images but " +
                          std::to_string(set.views.size()) + " poses");
    }
    return set;
}

void write_multiview(const std::string &dir, const std::vector<RgbImage> &images,
                     const std::vector<CameraView> &views) {
    if (images.size() != views.size()) throw ConfigError("write_multiview: count mismatch");
    fs::create_directories(dir);
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.png", i);
        write_png(images[i], (fs::path(dir) / name).string());
    }
    save_views_json(views, (fs::path(dir) / "poses.json").string());
}

// ---------------------------------------------------------------------------
// Running

std::vector<CameraView> plan_test_views(const EvaluationPlan &plan, const std::string &object_id,
                                        const Condition &condition) {
    const int size = plan.test_image_size > 0 ? plan.test_image_size : plan.fit.image_size;
    if (uses_random_test_views(condition.aspect)) {
        return random_test_views(mix_seed(plan.seed, fnv1a(object_id)), plan.test_view_count, size);
    }
    double elevation = 0.0;
    if (condition.aspect == Aspect::RobustElevation) {
        if (!condition.input_elevation_deg) {
            throw ConfigError("condition " + condition.id + " needs input_elevation_deg");
        }
        elevation = *condition.input_elevation_deg;
    } else {
        const PlanMethod *ref = plan.method(plan.reference_method);
        if (!ref) throw ConfigError("aspect real needs a reference_method present in the plan");
        elevation = ref->setup.output_elevation_deg;
    }
    // The fixed offset layout is 16 views; test_view_count applies to random views only.
    return fixed_offset_test_views(elevation, size);
}

namespace {

struct Unit {
    const PlanObject *object;
    const RunRef *run;
    const Condition *condition;
    const PlanMethod *method;
};

std::string unit_stem(const Unit &u) {
    return u.object->id + "__" + u.condition->id + "__" + u.method->id;
}

nlohmann::json read_json_file(const fs::path &p) {
    std::ifstream in(p);
    nlohmann::json j;
    in >> j;
    return j;
}

void write_json_atomic(const fs::path &p, const nlohmann::json &j) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + tmp.string());
        out << j.dump(2) << "\n";
        if (!out) throw Error("failed writing " + tmp.string());
    }
    fs::rename(tmp, p);
}

nlohmann::json null_dims() {
    nlohmann::json raw = nlohmann::json::object();
    for (const auto &d : report_dimensions()) raw[d] = nullptr;
    return raw;
}

std::uint64_t object_seed(const EvaluationPlan &plan, const std::string &object_id) {
    return mix_seed(plan.seed ^ 0x5eedf17ULL, fnv1a(object_id));
}

} // namespace

RunSummary run_aspect(const EvaluationPlan &plan, Aspect aspect, const RunOptions &options) {
    if (options.out_dir.empty()) throw ConfigError("run: output directory required");
    const PlanMethod *reference = nullptr;
    if (aspect == Aspect::Real) {
        reference = plan.method(plan.reference_method);
        if (!reference) throw ConfigError("aspect real needs a reference_method present in the plan");
    }

    std::vector<Unit> units;
    for (const auto &o : plan.objects) {
        for (const auto &r : o.runs) {
            const Condition *c = plan.condition(r.condition);
            const PlanMethod *m = plan.method(r.method);
            if (!c || !m) throw ConfigError("run references an unknown method or condition; validate the plan");
            if (c->aspect == aspect) units.push_back({&o, &r, c, m});
        }
    }
    if (units.empty()) {
        throw ConfigError(std::string("plan has no runs for aspect ") + aspect_name(aspect));
    }
    std::sort(units.begin(), units.end(),
              [](const Unit &a, const Unit &b) { return unit_stem(a) < unit_stem(b); });

    const fs::path rows_dir = fs::path(options.out_dir) / "rows" / aspect_name(aspect);
    const fs::path splat_dir = fs::path(options.out_dir) / "splats" / aspect_name(aspect);
    fs::create_directories(rows_dir);
    fs::create_directories(splat_dir);

    nlohmann::json fit_json = plan.fit;
    fit_json.erase("threads");
    fit_json.erase("loss_curve_csv");
    nlohmann::json bounds = nlohmann::json::object();
    if (plan.gt_upper_bounds.cpsnr) bounds["cpsnr"] = *plan.gt_upper_bounds.cpsnr;
    if (plan.gt_upper_bounds.cssim) bounds["cssim"] = *plan.gt_upper_bounds.cssim;

    std::mutex log_mutex;
    auto log = [&](const std::string &line) {
        if (!options.log) return;
        std::lock_guard lock(log_mutex);
        *options.log << line << std::endl;
    };

    RunSummary summary;
    summary.units = static_cast<int>(units.size());
    std::mutex summary_mutex;

    auto reference_ply = [&](const PlanObject &o, const Condition &c) {
        return splat_dir / (o.id + "__" + c.id + "__" + reference->id + ".ply");
    };

    auto evaluate = [&](const Unit &u) {
        const fs::path row_path = rows_dir / (unit_stem(u) + ".json");
        const std::vector<CameraView> test_views = plan_test_views(plan, u.object->id, *u.condition);
        const std::string hash = views_hash(test_views);
        const bool is_reference = reference && u.method == reference;

        if (fs::exists(row_path)) {
            try {
                const auto old = read_json_file(row_path);
                const bool ok = old.at("status") == "ok" && old.at("test_views_hash") == hash &&
                                old.at("seed") == plan.seed && old.at("fit") == fit_json;
                if (ok && (!is_reference || fs::exists(reference_ply(*u.object, *u.condition)))) {
                    std::lock_guard lock(summary_mutex);
                    ++summary.reused;
                    log("reuse " + unit_stem(u));
                    return;
                }
            } catch (const std::exception &) {
                // Unreadable row: recompute it.
            }
        }

        nlohmann::json row;
        row["object"] = u.object->id;
        row["condition"] = u.condition->id;
        row["method"] = u.method->id;
        row["aspect"] = aspect_name(aspect);
        row["ground_truth"] = u.method->ground_truth;
        row["seed"] = plan.seed;
        row["fit"] = fit_json;
        row["test_views_hash"] = hash;
        row["gt_upper_bounds"] = bounds;
        row["perceptual"] = plan.perceptual;
        row["raw"] = null_dims();
        row["vlm_partial"] = false;
        log("eval  " + unit_stem(u));
        try {
            const MultiViewSet mv = load_multiview(u.run->dir, u.object->id, u.method->id);
            FitConfig cfg = plan.fit;
            cfg.seed = object_seed(plan, u.object->id);
            auto perceptual = make_perceptual_provider(plan.perceptual);
            ConsistencyOptions copt;
            copt.perceptual = perceptual.get();
            copt.resample_seed = cfg.seed;

            GaussianSplat align_target;
            const GaussianSplat *align_to = nullptr;
            if (reference && !is_reference) {
                const fs::path ply = reference_ply(*u.object, *u.condition);
                if (!fs::exists(ply)) {
                    throw ConfigError("reference method " + reference->id + " has no splat for this object");
                }
                align_target = load_ply(ply.string());
                align_to = &align_target;
            }
            const ConsistencyResult r = evaluate_consistency(mv, test_views, cfg, align_to, copt);
            if (is_reference) {
                // Later units align to the stored file so restarts see identical input.
                const fs::path ply = reference_ply(*u.object, *u.condition);
                save_ply(r.splat1, ply.string() + ".tmp");
                fs::rename(ply.string() + ".tmp", ply);
            }
            auto &raw = row["raw"];
            raw["cd"] = r.scores.cd;
            raw["depth"] = r.scores.depth;
            raw["cpsnr"] = r.scores.cpsnr;
            raw["cssim"] = r.scores.cssim;
            raw["clpips"] = r.scores.clpips;

            if (!u.object->gt_features.empty() && !u.run->features.empty()) {
                raw["ofid"] = frechet_distance(read_features(u.object->gt_features),
                                               read_features(u.run->features));
            }
            if (plan.vlm && u.object->attributes) {
                std::unique_ptr<VlmClient> client;
                if (!plan.vlm->replay.empty()) {
                    client = ReplayVlmClient::from_file(plan.vlm->replay);
                } else if (plan.vlm->client) {
                    client = std::make_unique<HttpVlmClient>(*plan.vlm->client);
                }
                if (client) {
                    const VlmScores v = vlm_scores(ingestion_images(u.run->dir), *u.object->attributes,
                                                   *client, plan.vlm->parallelism);
                    if (v.scored_images > 0) {
                        raw["quality"] = v.quality;
                        raw["class"] = v.object_class;
                        raw["color"] = v.color;
                        raw["style"] = v.style;
                    }
                    row["vlm_partial"] = v.partial;
                    row["vlm_log"] = v.log;
                }
            }
            row["status"] = "ok";
        } catch (const std::exception &e) {
            row["status"] = "error";
            row["error"] = e.what();
            log("fail  " + unit_stem(u) + ": " + e.what());
        }
        write_json_atomic(row_path, row);
        std::lock_guard lock(summary_mutex);
        ++summary.computed;
        if (row["status"] != "ok") ++summary.failed;
    };

    // Reference units first: the others align to their splats.
    std::vector<Unit> first, rest;
    for (const auto &u : units) (reference && u.method == reference ? first : rest).push_back(u);
    for (auto *batch : {&first, &rest}) {
        parallel_for(static_cast<int>(batch->size()), std::max(1, options.workers),
                     [&](int i) { evaluate((*batch)[i]); });
    }

    std::vector<nlohmann::json> rows;
    for (const auto &u : units) rows.push_back(read_json_file(rows_dir / (unit_stem(u) + ".json")));
    summary.report = build_report(std::move(rows));
    summary.report["metadata"]["aspect"] = aspect_name(aspect);
    write_report(summary.report, (fs::path(options.out_dir) / aspect_name(aspect)).string());
    return summary;
}

// ---------------------------------------------------------------------------
// Reports

const std::vector<std::string> &report_dimensions() {
    static const std::vector<std::string> dims{"cd",   "depth",   "cpsnr", "cssim", "clpips",
                                               "ofid", "quality", "class", "color", "style"};
    return dims;
}

std::vector<nlohmann::json> load_rows(const std::string &rows_dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(rows_dir)) throw ConfigError("rows directory not found: " + rows_dir);
    for (const auto &e : fs::recursive_directory_iterator(rows_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<nlohmann::json> rows;
    for (const auto &f : files) {
        try {
            rows.push_back(read_json_file(f));
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(f.string() + ": " + e.what());
        }
    }
    return rows;
}

namespace {

std::optional<MetricKind> consistency_kind(const std::string &dim) {
    if (dim == "cd") return MetricKind::Chamfer;
    if (dim == "depth") return MetricKind::Depth;
    if (dim == "cpsnr") return MetricKind::CPsnr;
    if (dim == "cssim") return MetricKind::CSsim;
    if (dim == "clpips") return MetricKind::CLpips;
    return std::nullopt;
}

bool is_vlm_dim(const std::string &dim) {
    return dim == "quality" || dim == "class" || dim == "color" || dim == "style";
}

} // namespace

nlohmann::json build_report(std::vector<nlohmann::json> rows) {
    if (rows.empty()) throw ConfigError("report: no rows");
    auto key = [](const nlohmann::json &r) {
        return r.at("object").get<std::string>() + "\n" + r.at("condition").get<std::string>() + "\n" +
               r.at("method").get<std::string>();
    };
    std::sort(rows.begin(), rows.end(), [&](const auto &a, const auto &b) { return key(a) < key(b); });

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        groups[rows[i].at("object").get<std::string>() + "\n" + rows[i].at("condition").get<std::string>()]
            .push_back(i);
    }

    std::vector<std::string> problems;
    for (const auto &[gkey, members] : groups) {
        std::optional<std::string> hash;
        for (std::size_t i : members) {
            const auto h = rows[i].at("test_views_hash").get<std::string>();
            if (hash && *hash != h) {
                problems.push_back("rows for " + rows[i].at("object").get<std::string>() + " / " +
                                   rows[i].at("condition").get<std::string>() + " used different test views");
            }
            hash = h;
        }
        for (const auto &dim : report_dimensions()) {
            const auto kind = consistency_kind(dim);
            const bool error_kind = dim == "ofid" || (kind && is_error_kind(*kind));
            double max_raw = 0.0;
            std::optional<double> gt_raw;
            for (std::size_t i : members) {
                const auto &r = rows[i];
                if (r.at("status") != "ok" || r.at("raw").at(dim).is_null()) continue;
                const double v = r.at("raw").at(dim).get<double>();
                max_raw = std::max(max_raw, v);
                if (r.value("ground_truth", false)) gt_raw = v;
            }
            for (std::size_t i : members) {
                auto &r = rows[i];
                auto &norm = r["normalized"];
                if (norm.is_null()) norm = nlohmann::json::object();
                norm[dim] = nullptr;
                if (r.at("status") != "ok" || r.at("raw").at(dim).is_null()) continue;
                const double v = r.at("raw").at(dim).get<double>();
                if (is_vlm_dim(dim)) {
                    norm[dim] = std::clamp(v, 0.0, 1.0);
                } else if (error_kind) {
                    // All methods at zero error are all perfect.
                    norm[dim] = max_raw > 0.0
                                    ? normalize_score(v, kind.value_or(MetricKind::Chamfer), 0.0, max_raw)
                                    : 1.0;
                } else {
                    std::optional<double> upper = gt_raw;
                    if (!upper && r.contains("gt_upper_bounds") && r["gt_upper_bounds"].contains(dim)) {
                        upper = r["gt_upper_bounds"][dim].get<double>();
                    }
                    if (upper && *upper > 0.0) norm[dim] = normalize_score(v, *kind, *upper, 0.0);
                }
            }
        }
    }
    if (!problems.empty()) {
        std::string msg = "report: inconsistent test views";
        for (const auto &p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }

    // Per-method means over ok rows; nulls are skipped and counted.
    std::map<std::string, std::vector<std::size_t>> by_method;
    for (std::size_t i = 0; i < rows.size(); ++i) by_method[rows[i].at("method").get<std::string>()].push_back(i);
    nlohmann::json aggregate = nlohmann::json::array();
    nlohmann::json failed = nlohmann::json::array();
    bool partial = false;
    for (const auto &[method, members] : by_method) {
        nlohmann::json entry;
        entry["method"] = method;
        int ok_rows = 0;
        for (const auto &part : {"raw", "normalized"}) {
            nlohmann::json means = nlohmann::json::object();
            nlohmann::json counts = nlohmann::json::object();
            for (const auto &dim : report_dimensions()) {
                double sum = 0.0;
                int n = 0;
                for (std::size_t i : members) {
                    const auto &r = rows[i];
                    if (r.at("status") != "ok" || r.at(part).at(dim).is_null()) continue;
                    sum += r.at(part).at(dim).get<double>();
                    ++n;
                }
                means[dim] = n > 0 ? nlohmann::json(sum / n) : nlohmann::json(nullptr);
                counts[dim] = n;
            }
            entry[part] = means;
            entry["counts"] = counts;
        }
        for (std::size_t i : members) {
            const auto &r = rows[i];
            if (r.at("status") == "ok") {
                ++ok_rows;
                if (r.value("vlm_partial", false)) partial = true;
            } else {
                failed.push_back(key(r));
                partial = true;
            }
        }
        entry["rows"] = ok_rows;
        aggregate.push_back(entry);
    }

    nlohmann::json report;
    report["metadata"] = {{"engine", kEngineVersion},
                          {"seed", rows.front().at("seed")},
                          {"fit", rows.front().at("fit")},
                          {"perceptual", rows.front().value("perceptual", "")},
                          {"aspect", rows.front().value("aspect", "")},
                          {"dimensions", report_dimensions()}};
    report["partial"] = partial;
    report["failed_units"] = failed;
    report["rows"] = rows;
    report["aggregate"] = aggregate;
    return report;
}

std::string summary_csv(const nlohmann::json &report) {
    std::ostringstream out;
    out << "method,rows";
    for (const auto &d : report_dimensions()) out << "," << d;
    for (const auto &d : report_dimensions()) out << "," << d << "_norm";
    out << "\n";
    for (const auto &e : report.at("aggregate")) {
        out << e.at("method").get<std::string>() << "," << e.at("rows").get<int>();
        for (const auto &part : {"raw", "normalized"}) {
            for (const auto &d : report_dimensions()) {
                out << ",";
                if (!e.at(part).at(d).is_null()) out << e.at(part).at(d).dump();
            }
        }
        out << "\n";
    }
    return out.str();
}

nlohmann::json radar_json(const nlohmann::json &report) {
    nlohmann::json radar;
    radar["axes"] = report_dimensions();
    radar["methods"] = nlohmann::json::array();
    for (const auto &e : report.at("aggregate")) {
        radar["methods"].push_back({{"method", e.at("method")}, {"values", e.at("normalized")}});
    }
    return radar;
}

void write_report(const nlohmann::json &report, const std::string &out_dir) {
    fs::create_directories(out_dir);
    write_json_atomic(fs::path(out_dir) / "report.json", report);
    write_json_atomic(fs::path(out_dir) / "radar.json", radar_json(report));
    std::ofstream csv(fs::path(out_dir) / "summary.csv");
    if (!csv) throw Error("cannot write summary.csv");
    csv << summary_csv(report);
}

} // namespace mvg

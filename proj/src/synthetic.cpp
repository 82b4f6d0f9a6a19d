// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/synthetic.h>

#include <mvg/error.h>
#include <mvg/harness.h>
#include <mvg/random.h>
#include <mvg/render.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace mvg {

GaussianSplat procedural_object(std::uint64_t seed, int count) {
    if (count < 10) {
        throw ConfigError("procedural_object: need at least 10 Gaussians");
    }
    Rng rng(seed);
    GaussianSplat s;
    s.reserve(count);
    const int handle = count / 5;
    const int cap = count / 10;
    const int body = count - handle - cap;
    auto random_rotation = [&]() {
        return Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    };

    for (int i = 0; i < body; ++i) {
        // Uniform direction on the sphere, mapped onto an ellipsoid.
        const Vec3 d = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const Vec3 p(0.30 * d.x(), 0.26 * d.y() - 0.05, 0.22 * d.z());
        const double stripe = 0.5 + 0.5 * std::sin(14.0 * p.y());
        const Vec3 color(0.85 * stripe + 0.1, 0.25 + 0.35 * (1.0 - stripe), 0.2 + 0.6 * (d.z() > 0));
        const Vec3 scale(rng.uniform(0.035, 0.06), rng.uniform(0.035, 0.06), rng.uniform(0.015, 0.03));
        s.push_back(p, scale, random_rotation(), 0.9, color.cwiseMin(1.0));
    }
    for (int i = 0; i < handle; ++i) {
        // Torus in the x-y plane attached at +x.
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        const double b = rng.uniform(0.0, 2.0 * M_PI);
        const double major = 0.11;
        const double minor = 0.03;
        const Vec3 p(0.33 + (major + minor * std::cos(b)) * std::cos(a),
                     -0.05 + (major + minor * std::cos(b)) * std::sin(a), minor * std::sin(b));
        s.push_back(p, Vec3::Constant(rng.uniform(0.02, 0.03)), random_rotation(), 0.9,
                    Vec3(0.15, 0.35, 0.85));
    }
    for (int i = 0; i < cap; ++i) {
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        const double r = 0.12 * std::sqrt(rng.uniform());
        const Vec3 p(r * std::cos(a) - 0.08, 0.24 + rng.uniform(0.0, 0.04), r * std::sin(a) + 0.04);
        s.push_back(p, Vec3(0.04, 0.015, 0.04), random_rotation(), 0.95, Vec3(0.95, 0.8, 0.1));
    }
    s.validate();
    return s;
}

std::vector<RgbImage> render_views(const GaussianSplat &splat, const std::vector<CameraView> &views,
                                   int threads) {
    std::vector<RgbImage> out;
    out.reserve(views.size());
    for (const auto &v : views) {
        out.push_back(render_rgb(splat, v, {Vec3::Ones(), threads}));
    }
    return out;
}

GaussianSplat altered_object(const GaussianSplat &base, double yaw_deg) {
    const double a = yaw_deg * M_PI / 180.0;
    SimilarityTransform turn;
    turn.rotation = Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
    GaussianSplat s = transformed(base, turn);
    for (std::size_t k = 0; k < s.size(); ++k) {
        s.centers[k].y() *= 1.35;
        s.scales[k].y() *= 1.35;
        const Vec3 c = s.colors[k];
        s.colors[k] = Vec3(c.z(), c.x(), c.y());
    }
    s.validate();
    return s;
}

std::vector<int> replaced_views(const std::vector<int> &candidates, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("replacement rate must be in [0, 1]");
    std::vector<int> order = candidates;
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    const auto n = static_cast<std::size_t>(std::lround(rate * static_cast<double>(candidates.size())));
    order.resize(n);
    return order;
}

std::string write_synthetic_plan(const SyntheticPlanOptions &o) {
    namespace fs = std::filesystem;
    if (o.out_dir.empty()) throw ConfigError("synthetic plan: output directory required");
    if (o.objects < 1) throw ConfigError("synthetic plan: need at least one object");
    const fs::path root(o.out_dir);
    fs::create_directories(root);

    const MethodSetup gt = method_preset("sv3d");
    const MethodSetup corrupt = method_preset("syncdreamer");

    nlohmann::json manifest;
    manifest["seed"] = o.seed;
    manifest["test_view_count"] = o.test_view_count;
    FitConfig fit;
    fit.steps = o.fit_steps;
    fit.image_size = o.fit_image_size;
    fit.init_points = o.fit_init_points;
    manifest["fit"] = fit;
    manifest["methods"] = {{{"id", "corrupt"}, {"preset", "syncdreamer"}},
                           {{"id", "gt"}, {"preset", "sv3d"}, {"ground_truth", true}}};
    manifest["conditions"] = {{{"id", "best"}, {"aspect", "best"}}};
    if (o.with_real) {
        manifest["reference_method"] = "gt";
        manifest["conditions"].push_back({{"id", "real"}, {"aspect", "real"}});
    }
    manifest["objects"] = nlohmann::json::array();

    for (int i = 0; i < o.objects; ++i) {
        const std::string id = "obj" + std::to_string(i);
        const GaussianSplat object = procedural_object(mix_seed(o.seed, static_cast<std::uint64_t>(i)), o.gaussians);
        const GaussianSplat altered = altered_object(object);
        nlohmann::json obj{{"id", id}, {"runs", nlohmann::json::array()}};

        const auto gt_views = gt.output_orbit(o.image_size);
        const std::string gt_dir = id + "/gt";
        write_multiview((root / gt_dir).string(), render_views(object, gt_views), gt_views);

        const auto c_views = corrupt.output_orbit(o.image_size);
        std::vector<int> all(c_views.size());
        for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
        const auto swapped = replaced_views(all, o.corrupt_rate, mix_seed(o.seed, 1000 + i));
        std::vector<RgbImage> c_images = render_views(object, c_views);
        for (int k : swapped) c_images[k] = render_rgb(altered, c_views[k]);
        const std::string c_dir = id + "/corrupt";
        write_multiview((root / c_dir).string(), c_images, c_views);

        for (const std::string cond : {"best", "real"}) {
            if (cond == "real" && !o.with_real) continue;
            obj["runs"].push_back({{"method", "corrupt"}, {"condition", cond}, {"dir", c_dir}});
            obj["runs"].push_back({{"method", "gt"}, {"condition", cond}, {"dir", gt_dir}});
        }
        manifest["objects"].push_back(obj);
    }
    const fs::path path = root / "manifest.json";
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << manifest.dump(2) << "\n";
    return path.string();
}

} // namespace mvg

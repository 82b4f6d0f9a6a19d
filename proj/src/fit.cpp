// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/fit.h>

#include <mvg/error.h>
#include <mvg/image_metrics.h>
#include <mvg/random.h>
#include <mvg/render.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace mvg {

namespace {

constexpr double kL1Weight = 0.8;
constexpr double kSsimWeight = 0.2;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-15;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// Flat raw parameters, 14 per Gaussian.
enum Field { kPos = 0, kLogScale = 3, kQuat = 6, kOpacityLogit = 10, kColorLogit = 11 };
constexpr int kParams = 14;

struct Adam {
    std::vector<double> m, v;
    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

GaussianSplat activate(const std::vector<double> &raw) {
    const std::size_t n = raw.size() / kParams;
    GaussianSplat s;
    s.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double *p = raw.data() + k * kParams;
        s.push_back(Vec3(p[0], p[1], p[2]),
                    Vec3(std::exp(p[3]), std::exp(p[4]), std::exp(p[5])),
                    Vec4(p[6], p[7], p[8], p[9]).normalized(), sigmoid(p[10]),
                    Vec3(sigmoid(p[11]), sigmoid(p[12]), sigmoid(p[13])));
    }
    return s;
}

std::vector<double> deactivate(const GaussianSplat &s) {
    std::vector<double> raw(s.size() * kParams);
    for (std::size_t k = 0; k < s.size(); ++k) {
        double *p = raw.data() + k * kParams;
        for (int i = 0; i < 3; ++i) {
            p[kPos + i] = s.centers[k][i];
            p[kLogScale + i] = std::log(s.scales[k][i]);
            p[kColorLogit + i] = logit(std::clamp(s.colors[k][i], 1e-6, 1.0 - 1e-6));
        }
        for (int i = 0; i < 4; ++i) {
            p[kQuat + i] = s.rotations[k][i];
        }
        p[kOpacityLogit] = logit(s.opacities[k]);
    }
    return raw;
}

void check_inputs(const std::vector<RgbImage> &images, const std::vector<CameraView> &views) {
    if (images.size() != views.size()) {
        throw ConfigError("fit: " + std::to_string(images.size()) + " images but " +
                          std::to_string(views.size()) + " views");
    }
    if (views.size() < 3) {
        throw ConfigError("fit: need at least 3 views, got " + std::to_string(views.size()));
    }
    for (const auto &img : images) {
        if (!img.same_shape(images.front())) {
            throw ConfigError("fit: training images differ in dimensions");
        }
    }
    if (images.front().width != images.front().height) {
        throw ConfigError("fit: training images must be square");
    }
    for (const auto &v : views) {
        v.validate();
    }
}

} // namespace

FitConfig FitConfig::full_scale() {
    FitConfig cfg;
    cfg.init_points = 100000;
    cfg.steps = 10000;
    return cfg;
}

void FitConfig::validate() const {
    if (init_points < 1) {
        throw ConfigError("fit config: init_points must be >= 1");
    }
    if (steps < 0) {
        throw ConfigError("fit config: steps must be >= 0");
    }
    for (const double lr_value : {lr.centers, lr.colors, lr.opacities, lr.scales, lr.rotations}) {
        if (!(lr_value > 0.0)) {
            throw ConfigError("fit config: learning rates must be positive");
        }
    }
    if (!(prune_opacity_below > 0.0 && prune_opacity_below < 1.0)) {
        throw ConfigError("fit config: prune_opacity_below must lie in (0, 1)");
    }
    if (!(init_opacity > 0.0 && init_opacity < 1.0)) {
        throw ConfigError("fit config: init_opacity must lie in (0, 1)");
    }
    if (image_size < kSsimWindow) {
        throw ConfigError("fit config: image_size must be at least 11");
    }
    if (prune_interval < 1 || init_scale < 0.0 || !(center_lr_final_ratio > 0.0) ||
        !(min_support_pixels >= 0.0)) {
        throw ConfigError("fit config: invalid pruning or schedule parameters");
    }
}

void to_json(nlohmann::json &j, const FitConfig &c) {
    j = nlohmann::json{{"init_points", c.init_points},
                       {"steps", c.steps},
                       {"lr",
                        {{"centers", c.lr.centers},
                         {"colors", c.lr.colors},
                         {"opacities", c.lr.opacities},
                         {"scales", c.lr.scales},
                         {"rotations", c.lr.rotations}}},
                       {"center_lr_final_ratio", c.center_lr_final_ratio},
                       {"seed", c.seed},
                       {"image_size", c.image_size},
                       {"prune_opacity_below", c.prune_opacity_below},
                       {"prune_interval", c.prune_interval},
                       {"init_scale", c.init_scale},
                       {"init_opacity", c.init_opacity},
                       {"min_support_pixels", c.min_support_pixels}};
}

void from_json(const nlohmann::json &j, FitConfig &c) {
    try {
        c = FitConfig{};
        c.init_points = j.value("init_points", c.init_points);
        c.steps = j.value("steps", c.steps);
        if (j.contains("lr")) {
            const auto &lr = j.at("lr");
            c.lr.centers = lr.value("centers", c.lr.centers);
            c.lr.colors = lr.value("colors", c.lr.colors);
            c.lr.opacities = lr.value("opacities", c.lr.opacities);
            c.lr.scales = lr.value("scales", c.lr.scales);
            c.lr.rotations = lr.value("rotations", c.lr.rotations);
        }
        c.center_lr_final_ratio = j.value("center_lr_final_ratio", c.center_lr_final_ratio);
        c.seed = j.value("seed", c.seed);
        c.image_size = j.value("image_size", c.image_size);
        c.prune_opacity_below = j.value("prune_opacity_below", c.prune_opacity_below);
        c.prune_interval = j.value("prune_interval", c.prune_interval);
        c.init_scale = j.value("init_scale", c.init_scale);
        c.init_opacity = j.value("init_opacity", c.init_opacity);
        c.min_support_pixels = j.value("min_support_pixels", c.min_support_pixels);
        c.threads = j.value("threads", c.threads);
        c.loss_curve_csv = j.value("loss_curve_csv", c.loss_curve_csv);
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("fit config: ") + e.what());
    }
    c.validate();
}

double photometric_loss(const RgbImage &rendered, const RgbImage &target) {
    if (!rendered.same_shape(target)) {
        throw ConfigError("photometric_loss: image dimensions differ");
    }
    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.pixels.size(); ++i) {
        l1 += std::abs(rendered.pixels[i] - target.pixels[i]);
    }
    l1 /= static_cast<double>(rendered.pixels.size());
    return kL1Weight * l1 + kSsimWeight * (1.0 - ssim(rendered, target));
}

LossGradient photometric_loss_with_gradient(const RgbImage &rendered, const RgbImage &target) {
    if (!rendered.same_shape(target)) {
        throw ConfigError("photometric_loss: image dimensions differ");
    }
    SsimGradient s = ssim_with_gradient(rendered, target);
    const double n = static_cast<double>(rendered.pixels.size());
    LossGradient out;
    out.d_rendered.resize(rendered.pixels.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.pixels.size(); ++i) {
        const double d = rendered.pixels[i] - target.pixels[i];
        l1 += std::abs(d);
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        out.d_rendered[i] = kL1Weight * sign / n - kSsimWeight * s.d_a[i];
    }
    out.value = kL1Weight * l1 / n + kSsimWeight * (1.0 - s.value);
    return out;
}

RgbImage resize_square(const RgbImage &image, int size) {
    if (image.width == size && image.height == size) {
        return image;
    }
    RgbImage src = image;
    while (src.width >= 2 * size && src.height >= 2 * size) {
        src = downsample2(src);
    }
    RgbImage out(size, size, 0.0);
    const double sx = static_cast<double>(src.width) / size;
    const double sy = static_cast<double>(src.height) / size;
    for (int y = 0; y < size; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double ty = fy - y0;
        for (int x = 0; x < size; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double tx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - tx) * src.at(x0, y0, c) + tx * src.at(x1, y0, c);
                const double bot = (1 - tx) * src.at(x0, y1, c) + tx * src.at(x1, y1, c);
                out.at(x, y, c) = (1 - ty) * top + ty * bot;
            }
        }
    }
    return out;
}

GaussianSplat initial_splat(const FitConfig &cfg, const std::vector<CameraView> &views) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, 0x1417));
    const double scale = cfg.init_scale > 0.0
                             ? cfg.init_scale
                             : 0.5 * std::cbrt(8.0 / static_cast<double>(cfg.init_points));
    GaussianSplat all;
    all.reserve(cfg.init_points);
    for (int i = 0; i < cfg.init_points; ++i) {
        const double x = rng.uniform(-1.0, 1.0);
        const double y = rng.uniform(-1.0, 1.0);
        const double z = rng.uniform(-1.0, 1.0);
        all.push_back(Vec3(x, y, z), Vec3::Constant(scale), Vec4(1.0, 0.0, 0.0, 0.0),
                      cfg.init_opacity, Vec3::Constant(0.5));
    }
    if (views.empty()) {
        return all;
    }
    std::vector<bool> seen(all.size(), false);
    for (CameraView v : views) {
        v.image_size = cfg.image_size;
        const auto vis = Rasterizer(all, v, {Vec3::Ones(), cfg.threads}).visibility();
        for (std::size_t k = 0; k < vis.size(); ++k) {
            seen[k] = seen[k] || vis[k];
        }
    }
    GaussianSplat kept;
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (seen[k]) {
            kept.push_back(all.centers[k], all.scales[k], all.rotations[k], all.opacities[k],
                           all.colors[k]);
        }
    }
    return kept;
}

GaussianSplat fit_splat(const std::vector<RgbImage> &images, const std::vector<CameraView> &views,
                        const FitConfig &cfg, FitTrace *trace) {
    cfg.validate();
    check_inputs(images, views);

    std::vector<RgbImage> targets;
    std::vector<CameraView> cams;
    targets.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        targets.push_back(resize_square(images[i], cfg.image_size));
        CameraView v = views[i];
        v.image_size = cfg.image_size;
        cams.push_back(v);
    }

    GaussianSplat init = initial_splat(cfg, cams);
    if (init.empty()) {
        throw ConfigError("fit: no initial Gaussian is visible from the training views");
    }
    if (cfg.steps == 0) {
        if (trace != nullptr) {
            trace->snapshots.assign(trace->snapshot_steps.size(), init);
        }
        return init;
    }
    std::vector<double> raw = deactivate(init);
    Adam adam;
    adam.resize(raw.size());

    const RenderOptions ropts{Vec3::Ones(), cfg.threads};
    Rng order_rng(mix_seed(cfg.seed, 0x0de7));
    std::vector<std::size_t> order(cams.size());
    std::size_t cursor = order.size();

    std::vector<double> rate(kParams);
    std::vector<double> step_losses;
    step_losses.reserve(cfg.steps);
    std::size_t next_snapshot = 0;
    if (trace != nullptr) {
        trace->step_loss.clear();
        trace->snapshots.clear();
        std::sort(trace->snapshot_steps.begin(), trace->snapshot_steps.end());
    }
    auto take_snapshots = [&](int step) {
        if (trace == nullptr) {
            return;
        }
        while (next_snapshot < trace->snapshot_steps.size() &&
               trace->snapshot_steps[next_snapshot] == step) {
            trace->snapshots.push_back(activate(raw));
            ++next_snapshot;
        }
    };
    take_snapshots(0);

    for (int step = 1; step <= cfg.steps; ++step) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[order_rng.below(i)]);
            }
            cursor = 0;
        }
        const std::size_t vi = order[cursor++];

        const GaussianSplat splat = activate(raw);
        const Rasterizer raster(splat, cams[vi], ropts);
        const LossGradient loss = photometric_loss_with_gradient(raster.rgb(), targets[vi]);
        const SplatGradients g = raster.backward(loss.d_rendered);
        step_losses.push_back(loss.value);

        const double progress = cfg.steps > 1 ? (step - 1.0) / (cfg.steps - 1.0) : 0.0;
        const double center_lr = cfg.lr.centers * std::pow(cfg.center_lr_final_ratio, progress);
        std::fill(rate.begin() + kPos, rate.begin() + kPos + 3, center_lr);
        std::fill(rate.begin() + kLogScale, rate.begin() + kLogScale + 3, cfg.lr.scales);
        std::fill(rate.begin() + kQuat, rate.begin() + kQuat + 4, cfg.lr.rotations);
        rate[kOpacityLogit] = cfg.lr.opacities;
        std::fill(rate.begin() + kColorLogit, rate.begin() + kColorLogit + 3, cfg.lr.colors);

        const double bc1 = 1.0 - std::pow(kAdamBeta1, step);
        const double bc2 = 1.0 - std::pow(kAdamBeta2, step);
        double grad[kParams];
        for (std::size_t k = 0; k < splat.size(); ++k) {
            for (int i = 0; i < 3; ++i) {
                grad[kPos + i] = g.centers[k][i];
                grad[kLogScale + i] = g.scales[k][i] * splat.scales[k][i];
                const double c = splat.colors[k][i];
                grad[kColorLogit + i] = g.colors[k][i] * c * (1.0 - c);
            }
            for (int i = 0; i < 4; ++i) {
                grad[kQuat + i] = g.rotations[k][i];
            }
            const double o = splat.opacities[k];
            grad[kOpacityLogit] = g.opacities[k] * o * (1.0 - o);

            double *p = raw.data() + k * kParams;
            double *m = adam.m.data() + k * kParams;
            double *v = adam.v.data() + k * kParams;
            for (int i = 0; i < kParams; ++i) {
                m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
                v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
                p[i] -= rate[i] * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
            }
            const double qn = std::sqrt(p[6] * p[6] + p[7] * p[7] + p[8] * p[8] + p[9] * p[9]);
            for (int i = 6; i < 10; ++i) {
                p[i] /= qn;
            }
            // Keep logits and log-scales in a range where activations stay representable.
            p[kOpacityLogit] = std::clamp(p[kOpacityLogit], -20.0, 20.0);
            for (int i = 0; i < 3; ++i) {
                p[kLogScale + i] = std::clamp(p[kLogScale + i], -16.0, 2.0);
                p[kColorLogit + i] = std::clamp(p[kColorLogit + i], -12.0, 12.0);
            }
        }

        if (step % cfg.prune_interval == 0 || step == cfg.steps) {
            const double threshold = logit(cfg.prune_opacity_below);
            std::size_t out = 0;
            const std::size_t n = raw.size() / kParams;
            for (std::size_t k = 0; k < n; ++k) {
                if (raw[k * kParams + kOpacityLogit] < threshold) {
                    continue;
                }
                if (out != k) {
                    std::copy_n(raw.begin() + k * kParams, kParams, raw.begin() + out * kParams);
                    std::copy_n(adam.m.begin() + k * kParams, kParams,
                                adam.m.begin() + out * kParams);
                    std::copy_n(adam.v.begin() + k * kParams, kParams,
                                adam.v.begin() + out * kParams);
                }
                ++out;
            }
            // Never prune to nothing; keep the single most opaque Gaussian if needed.
            if (out == 0) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < n; ++k) {
                    if (raw[k * kParams + kOpacityLogit] > raw[best * kParams + kOpacityLogit]) {
                        best = k;
                    }
                }
                std::copy_n(raw.begin() + best * kParams, kParams, raw.begin());
                std::copy_n(adam.m.begin() + best * kParams, kParams, adam.m.begin());
                std::copy_n(adam.v.begin() + best * kParams, kParams, adam.v.begin());
                out = 1;
            }
            raw.resize(out * kParams);
            adam.m.resize(out * kParams);
            adam.v.resize(out * kParams);
        }
        take_snapshots(step);
    }

    GaussianSplat result = activate(raw);
    if (cfg.min_support_pixels > 0.0) {
        std::vector<double> support(result.size(), 0.0);
        for (const CameraView &v : cams) {
            const auto w = Rasterizer(result, v, ropts).weights();
            for (std::size_t k = 0; k < w.size(); ++k) {
                support[k] += w[k];
            }
        }
        const double needed = cfg.min_support_pixels * static_cast<double>(cams.size());
        GaussianSplat kept;
        for (std::size_t k = 0; k < result.size(); ++k) {
            if (support[k] >= needed) {
                kept.push_back(result.centers[k], result.scales[k], result.rotations[k],
                               result.opacities[k], result.colors[k]);
            }
        }
        if (!kept.empty()) {
            result = std::move(kept);
        }
    }

    if (!cfg.loss_curve_csv.empty()) {
        std::ofstream csv(cfg.loss_curve_csv);
        csv << "step,loss\n";
        for (std::size_t i = 0; i < step_losses.size(); ++i) {
            csv << i + 1 << "," << step_losses[i] << "\n";
        }
    }
    if (trace != nullptr) {
        trace->step_loss = std::move(step_losses);
    }
    return result;
}

double mean_photometric_loss(const GaussianSplat &splat, const std::vector<RgbImage> &images,
                             const std::vector<CameraView> &views, int threads) {
    check_inputs(images, views);
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        CameraView v = views[i];
        v.image_size = images[i].width;
        total += photometric_loss(render_rgb(splat, v, {Vec3::Ones(), threads}), images[i]);
    }
    return total / static_cast<double>(images.size());
}

} // namespace mvg

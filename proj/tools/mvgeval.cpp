// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
// mvgeval: command-line front end for the evaluation engine.

#include <mvg/consistency.h>
#include <mvg/error.h>
#include <mvg/fit.h>
#include <mvg/harness.h>
#include <mvg/image.h>
#include <mvg/parallel.h>
#include <mvg/perceptual.h>
#include <mvg/ply.h>
#include <mvg/semantic.h>
#include <mvg/synthetic.h>
#include <mvg/vlm.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw mvg::ConfigError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw mvg::ParseError(path + ": " + e.what());
    }
}

std::vector<std::string> feature_files(const std::string &p) {
    if (fs::is_regular_file(p)) return {p};
    std::vector<std::string> out;
    if (!fs::is_directory(p)) throw mvg::ConfigError("no such file or directory: " + p);
    for (const auto &e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".mvgf") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Multi-view generation consistency evaluation"};
    app.require_subcommand(1);

    std::string manifest, out_dir, aspect = "best";
    std::optional<std::uint64_t> seed;
    int workers = 1;
    int threads = 0;

    auto *validate = app.add_subcommand("validate", "Check a manifest and every file it references");
    validate->add_option("manifest", manifest, "Manifest JSON")->required();

    auto *eval = app.add_subcommand("eval", "Evaluate all runs of one aspect");
    eval->add_option("--aspect", aspect, "best, real, robust-light, robust-azimuth or robust-elevation")
        ->required();
    eval->add_option("--manifest", manifest, "Manifest JSON")->required();
    eval->add_option("--out", out_dir, "Output directory")->required();
    eval->add_option("--seed", seed, "Override the plan seed");
    eval->add_option("--workers", workers, "Evaluation units in flight")->check(CLI::PositiveNumber);
    eval->add_option("--threads", threads, "Render threads per fit (default: plan)");

    std::string images_dir, views_path, out_path, config_path;
    std::optional<int> steps, image_size;
    auto *fit = app.add_subcommand("fit", "Fit a Gaussian splat to posed images");
    fit->add_option("--images", images_dir, "Directory with view_NNN.png")->required();
    fit->add_option("--views", views_path, "Camera list JSON (default: <images>/poses.json)");
    fit->add_option("--out", out_path, "Output PLY")->required();
    fit->add_option("--config", config_path, "FitConfig JSON");
    fit->add_option("--steps", steps, "Override optimization steps");
    fit->add_option("--image-size", image_size, "Override fit resolution");
    fit->add_option("--seed", seed, "Override fit seed");
    fit->add_option("--threads", threads, "Render threads");

    std::string splat_a, splat_b, perceptual = "structural";
    auto *metrics = app.add_subcommand("metrics", "Consistency metrics between two splats");
    metrics->add_option("--splat-a", splat_a, "First PLY")->required();
    metrics->add_option("--splat-b", splat_b, "Second PLY")->required();
    metrics->add_option("--views", views_path, "Test camera list JSON")->required();
    metrics->add_option("--perceptual", perceptual, "structural or command:<program>");
    metrics->add_option("--seed", seed, "Resampling seed");
    metrics->add_option("--threads", threads, "Render threads");

    std::string gt_path, gen_path;
    auto *ofid_cmd = app.add_subcommand("ofid", "Mean Fréchet distance over per-object feature files");
    ofid_cmd->add_option("--gt", gt_path, "MVGF file or directory of .mvgf files")->required();
    ofid_cmd->add_option("--gen", gen_path, "MVGF file or directory, paired by file name")->required();

    std::string attrs_path, client_path, replay_path, record_path;
    auto *vlm = app.add_subcommand("vlm", "VLM quality and semantic scores for a set of images");
    vlm->add_option("--images", images_dir, "Directory with view_NNN.png")->required();
    vlm->add_option("--attrs", attrs_path, "Reference attributes JSON {class, colors, style}")->required();
    vlm->add_option("--client", client_path, "Client config JSON");
    vlm->add_option("--replay", replay_path, "Recorded reply fixture");
    vlm->add_option("--record", record_path, "Write a reply fixture for later replay");

    std::string rows_dir;
    auto *aggregate = app.add_subcommand("aggregate", "Rebuild report files from row files");
    aggregate->add_option("--rows", rows_dir, "Row directory")->required();
    aggregate->add_option("--out", out_dir, "Output directory")->required();

    int view_count = 0;
    auto *splits = app.add_subcommand("dump-splits", "Print the view split for a view count");
    splits->add_option("--views", view_count, "Generated view count")->required();

    app.add_subcommand("dump-presets", "Print the built-in method camera presets");

    mvg::SyntheticPlanOptions synth;
    auto *make_synth = app.add_subcommand("make-synthetic", "Write a synthetic plan from a procedural object");
    make_synth->add_option("--out", synth.out_dir, "Output directory")->required();
    make_synth->add_option("--objects", synth.objects, "Object count");
    make_synth->add_option("--seed", synth.seed, "Seed");
    make_synth->add_option("--image-size", synth.image_size, "Resolution of written views");
    make_synth->add_option("--corrupt-rate", synth.corrupt_rate, "Share of corrupted views");
    make_synth->add_option("--fit-steps", synth.fit_steps, "Fit steps written to the manifest");
    make_synth->add_option("--fit-image-size", synth.fit_image_size, "Fit resolution");
    make_synth->add_option("--fit-init-points", synth.fit_init_points, "Initial Gaussians");
    make_synth->add_option("--test-views", synth.test_view_count, "Random test view count");
    make_synth->add_flag("--with-real", synth.with_real, "Add a real-image condition");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            mvg::EvaluationPlan plan;
            try {
                std::ifstream in(manifest);
                if (!in) throw mvg::ConfigError("cannot open manifest " + manifest);
                plan = mvg::parse_manifest(json::parse(in), fs::absolute(manifest).parent_path().string());
            } catch (const json::exception &e) {
                std::cerr << manifest << ": " << e.what() << "\n";
                return 1;
            }
            const auto problems = mvg::validate_plan(plan);
            for (const auto &p : problems) std::cout << "error: " << p << "\n";
            if (!problems.empty()) return 1;
            std::size_t units = 0;
            for (const auto &o : plan.objects) units += o.runs.size();
            std::cout << "ok: " << plan.objects.size() << " objects, " << plan.methods.size() << " methods, "
                      << plan.conditions.size() << " conditions, " << units << " evaluation units\n";
            return 0;
        }
        if (*eval) {
            mvg::EvaluationPlan plan = mvg::load_manifest(manifest);
            if (seed) plan.seed = *seed;
            if (threads > 0) plan.fit.threads = threads;
            mvg::RunOptions opt;
            opt.out_dir = out_dir;
            opt.workers = workers;
            opt.log = &std::cerr;
            const auto s = mvg::run_aspect(plan, mvg::aspect_from_name(aspect), opt);
            std::cout << "units " << s.units << ", computed " << s.computed << ", reused " << s.reused
                      << ", failed " << s.failed << "\n";
            std::cout << mvg::summary_csv(s.report);
            return s.failed > 0 ? 1 : 0;
        }
        if (*fit) {
            mvg::FitConfig cfg;
            if (!config_path.empty()) cfg = read_json(config_path).get<mvg::FitConfig>();
            if (steps) cfg.steps = *steps;
            if (image_size) cfg.image_size = *image_size;
            if (seed) cfg.seed = *seed;
            if (threads > 0) cfg.threads = threads;
            const auto files = mvg::ingestion_images(images_dir);
            if (views_path.empty()) views_path = (fs::path(images_dir) / "poses.json").string();
            const auto views = mvg::load_views_json(views_path);
            if (files.size() != views.size()) {
                throw mvg::ConfigError(std::to_string(files.size()) + " images but " +
                                       std::to_string(views.size()) + " cameras");
            }
            std::vector<mvg::RgbImage> images;
            for (const auto &f : files) images.push_back(mvg::read_png(f));
            const auto splat = mvg::fit_splat(images, views, cfg);
            mvg::save_ply(splat, out_path);
            std::cout << "wrote " << out_path << " (" << splat.size() << " Gaussians)\n";
            return 0;
        }
        if (*metrics) {
            const auto a = mvg::load_ply(splat_a);
            const auto b = mvg::load_ply(splat_b);
            const auto views = mvg::load_views_json(views_path);
            const int t = threads > 0 ? threads : 1;
            const std::uint64_t s = seed.value_or(0);
            mvg::ConsistencyScores sc;
            sc.cd = mvg::chamfer(mvg::resample_points(a, 5, 60000, s), mvg::resample_points(b, 5, 60000, s));
            sc.depth = mvg::depth_error(a, b, views, 1000.0, t);
            auto provider = mvg::make_perceptual_provider(perceptual);
            const auto tex = mvg::texture_consistency(a, b, views, *provider, t);
            sc.cpsnr = tex.cpsnr;
            sc.cssim = tex.cssim;
            sc.clpips = tex.clpips;
            std::cout << json(sc).dump(2) << "\n";
            return 0;
        }
        if (*ofid_cmd) {
            const auto gts = feature_files(gt_path);
            std::vector<std::pair<mvg::FeatureSet, mvg::FeatureSet>> pairs;
            json per_object = json::object();
            for (const auto &g : gts) {
                const fs::path gen = fs::is_directory(gen_path) ? fs::path(gen_path) / fs::path(g).filename()
                                                                : fs::path(gen_path);
                if (!fs::is_regular_file(gen)) throw mvg::ConfigError("no generated features for " + g);
                pairs.emplace_back(mvg::read_features(g), mvg::read_features(gen.string()));
                per_object[fs::path(g).stem().string()] =
                    mvg::frechet_distance(pairs.back().first, pairs.back().second);
            }
            std::cout << json{{"ofid", mvg::ofid(pairs)}, {"objects", per_object}}.dump(2) << "\n";
            return 0;
        }
        if (*vlm) {
            const auto attrs = read_json(attrs_path).get<mvg::ReferenceAttributes>();
            std::unique_ptr<mvg::VlmClient> client;
            int parallelism = 4;
            if (!replay_path.empty()) {
                client = mvg::ReplayVlmClient::from_file(replay_path);
            } else if (!client_path.empty()) {
                const auto cfg = read_json(client_path).get<mvg::VlmClientConfig>();
                parallelism = cfg.parallelism;
                client = std::make_unique<mvg::HttpVlmClient>(cfg);
            } else {
                throw mvg::ConfigError("vlm needs --client or --replay");
            }
            std::unique_ptr<mvg::RecordingVlmClient> recorder;
            mvg::VlmClient *active = client.get();
            if (!record_path.empty()) {
                recorder = std::make_unique<mvg::RecordingVlmClient>(*client);
                active = recorder.get();
            }
            const auto s = mvg::vlm_scores(mvg::ingestion_images(images_dir), attrs, *active, parallelism);
            if (recorder) recorder->save(record_path);
            std::cout << json(s).dump(2) << "\n";
            return s.partial ? 1 : 0;
        }
        if (*aggregate) {
            const auto report = mvg::build_report(mvg::load_rows(rows_dir));
            mvg::write_report(report, out_dir);
            std::cout << mvg::summary_csv(report);
            return 0;
        }
        if (*splits) {
            std::cout << json(mvg::split_views(view_count)).dump(2) << "\n";
            return 0;
        }
        if (app.got_subcommand("dump-presets")) {
            std::cout << json(mvg::method_presets()).dump(2) << "\n";
            return 0;
        }
        if (*make_synth) {
            std::cout << mvg::write_synthetic_plan(synth) << "\n";
            return 0;
        }
    } catch (const mvg::Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

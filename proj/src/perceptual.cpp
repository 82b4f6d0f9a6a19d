// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/perceptual.h>

#include <mvg/error.h>
#include <mvg/image_metrics.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <unistd.h>

namespace mvg {

double StructuralPerceptualProvider::distance(const RgbImage &a, const RgbImage &b) {
    if (!a.same_shape(b)) {
        throw ProviderError("structural perceptual distance: image dimensions differ");
    }
    RgbImage x = a;
    RgbImage y = b;
    double total = 0.0;
    int levels = 0;
    for (int level = 0; level < 3; ++level) {
        if (x.width < kSsimWindow || x.height < kSsimWindow) {
            break;
        }
        total += 0.5 * (1.0 - ssim(x, y));
        ++levels;
        x = downsample2(x);
        y = downsample2(y);
    }
    if (levels == 0) {
        throw ProviderError("structural perceptual distance: image smaller than 11x11");
    }
    return std::max(0.0, total / levels);
}

CommandPerceptualProvider::CommandPerceptualProvider(std::string command, std::string scratch_dir)
    : command_(std::move(command)), scratch_dir_(std::move(scratch_dir)) {
    if (scratch_dir_.empty()) {
        scratch_dir_ = std::filesystem::temp_directory_path().string();
    }
}

double CommandPerceptualProvider::distance(const RgbImage &a, const RgbImage &b) {
    static std::atomic<unsigned> counter{0};
    const std::string stem = scratch_dir_ + "/mvg_perceptual_" + std::to_string(::getpid()) + "_" +
                             std::to_string(counter++);
    const std::string pa = stem + "_a.png";
    const std::string pb = stem + "_b.png";
    write_png(a, pa);
    write_png(b, pb);
    const std::string cmd = command_ + " '" + pa + "' '" + pb + "'";
    std::string output;
    int status = -1;
    {
        std::unique_ptr<FILE, int (*)(FILE *)> pipe(::popen(cmd.c_str(), "r"), ::pclose);
        if (!pipe) {
            throw ProviderError("perceptual provider: cannot start '" + command_ + "'");
        }
        char buf[256];
        while (std::fgets(buf, sizeof(buf), pipe.get()) != nullptr) {
            output += buf;
        }
        status = ::pclose(pipe.release());
    }
    std::filesystem::remove(pa);
    std::filesystem::remove(pb);
    if (status != 0) {
        throw ProviderError("perceptual provider '" + command_ + "' exited with status " +
                            std::to_string(status));
    }
    double value = 0.0;
    try {
        std::size_t used = 0;
        value = std::stod(output, &used);
    } catch (const std::exception &) {
        throw ProviderError("perceptual provider '" + command_ + "' printed no number: '" +
                            output + "'");
    }
    if (!std::isfinite(value) || value < 0.0) {
        throw ProviderError("perceptual provider '" + command_ + "' returned invalid distance " +
                            output);
    }
    return value;
}

std::unique_ptr<PerceptualProvider> make_perceptual_provider(const std::string &spec) {
    if (spec.empty() || spec == "structural") {
        return std::make_unique<StructuralPerceptualProvider>();
    }
    const std::string prefix = "command:";
    if (spec.rfind(prefix, 0) == 0 && spec.size() > prefix.size()) {
        return std::make_unique<CommandPerceptualProvider>(spec.substr(prefix.size()));
    }
    throw ConfigError("unknown perceptual provider '" + spec +
                      "' (expected 'structural' or 'command:<program>')");
}

} // namespace mvg

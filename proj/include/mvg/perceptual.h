// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_PERCEPTUAL_H
#define MVG_PERCEPTUAL_H

#include <mvg/image.h>

#include <memory>
#include <string>

namespace mvg {

/// Maps an image pair to a non-negative perceptual distance with d(a, a) = 0.
/// Implementations report failure by throwing ProviderError.
class PerceptualProvider {
  public:
    virtual ~PerceptualProvider() = default;
    virtual double distance(const RgbImage &a, const RgbImage &b) = 0;
    virtual std::string name() const = 0;
};

/// In-process structural distance: mean of (1 - SSIM) / 2 over a three-level
/// 2x pyramid (levels smaller than the SSIM window are skipped). Needs no
/// learned weights, so it is the default when no external network is wired in.
class StructuralPerceptualProvider final : public PerceptualProvider {
  public:
    double distance(const RgbImage &a, const RgbImage &b) override;
    std::string name() const override { return "structural-ms-dssim"; }
};

/// Delegates to an external program: `<command> <a.png> <b.png>` must print a
/// single number on stdout and exit 0. Typical use is a small LPIPS script.
class CommandPerceptualProvider final : public PerceptualProvider {
  public:
    explicit CommandPerceptualProvider(std::string command, std::string scratch_dir = {});
    double distance(const RgbImage &a, const RgbImage &b) override;
    std::string name() const override { return "command:" + command_; }

  private:
    std::string command_;
    std::string scratch_dir_;
};

/// "structural" or "command:<program>".
std::unique_ptr<PerceptualProvider> make_perceptual_provider(const std::string &spec);

} // namespace mvg

#endif // MVG_PERCEPTUAL_H

// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#include <mvg/semantic.h>

#include <mvg/error.h>

#include <Eigen/Eigenvalues>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mvg {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

void FeatureSet::validate() const {
    if (vectors.rows() < 2) {
        throw ConfigError("feature set '" + source_tag + "' needs at least 2 vectors");
    }
    if (vectors.cols() < 1) throw ConfigError("feature set '" + source_tag + "' has zero dimension");
    if (!vectors.allFinite()) throw ConfigError("feature set '" + source_tag + "' has non-finite values");
}

FeatureSet read_features(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open feature file " + path);
    std::array<char, 4> magic{};
    std::uint32_t count = 0, dim = 0;
    in.read(magic.data(), 4);
    in.read(reinterpret_cast<char *>(&count), 4);
    in.read(reinterpret_cast<char *>(&dim), 4);
    if (!in || std::memcmp(magic.data(), "MVGF", 4) != 0) {
        throw ParseError(path + ": not an MVGF feature file");
    }
    std::vector<float> raw(static_cast<std::size_t>(count) * dim);
    in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(raw.size() * 4)) {
        throw ParseError(path + ": header declares " + std::to_string(count) + "x" +
                         std::to_string(dim) + " values but the file is truncated");
    }
    FeatureSet fs;
    fs.source_tag = path;
    fs.vectors.resize(count, dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        for (std::uint32_t d = 0; d < dim; ++d) fs.vectors(i, d) = raw[std::size_t(i) * dim + d];
    }
    if (!fs.vectors.allFinite()) throw ParseError(path + ": non-finite feature value");
    return fs;
}

void write_features(const std::string &path, const FeatureSet &features) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write feature file " + path);
    const auto count = static_cast<std::uint32_t>(features.count());
    const auto dim = static_cast<std::uint32_t>(features.dim());
    out.write("MVGF", 4);
    out.write(reinterpret_cast<const char *>(&count), 4);
    out.write(reinterpret_cast<const char *>(&dim), 4);
    for (std::uint32_t i = 0; i < count; ++i) {
        for (std::uint32_t d = 0; d < dim; ++d) {
            const auto v = static_cast<float>(features.vectors(i, d));
            out.write(reinterpret_cast<const char *>(&v), 4);
        }
    }
    if (!out) throw ConfigError("failed writing feature file " + path);
}

namespace {

void moments(const Eigen::MatrixXd &x, Eigen::VectorXd &mean, Eigen::MatrixXd &cov) {
    mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    cov.diagonal().array() += kFrechetEpsilon;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd &m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

} // namespace

double frechet_distance(const FeatureSet &a, const FeatureSet &b) {
    a.validate();
    b.validate();
    if (a.dim() != b.dim()) {
        throw ConfigError("Fréchet distance: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()) + ")");
    }
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    moments(a.vectors, mu_a, cov_a);
    moments(b.vectors, mu_b, cov_b);

    // Tr((A B)^1/2) = Tr((A^1/2 B A^1/2)^1/2), and the latter is symmetric.
    const Eigen::MatrixXd root_a = psd_sqrt(cov_a);
    Eigen::MatrixXd inner = root_a * cov_b * root_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner, Eigen::EigenvaluesOnly);
    const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    if (!std::isfinite(d)) throw ConfigError("Fréchet distance is not finite");
    return std::max(d, 0.0);
}

double ofid(const std::vector<std::pair<FeatureSet, FeatureSet>> &per_object) {
    if (per_object.empty()) throw ConfigError("oFID needs at least one object");
    double sum = 0.0;
    for (const auto &[gt, gen] : per_object) sum += frechet_distance(gt, gen);
    return sum / static_cast<double>(per_object.size());
}

} // namespace mvg

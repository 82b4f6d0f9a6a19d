// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_SEMANTIC_H
#define MVG_SEMANTIC_H

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace mvg {

/// N embedding vectors of dimension D, one per row.
struct FeatureSet {
    Eigen::MatrixXd vectors;
    std::string source_tag;

    Eigen::Index count() const { return vectors.rows(); }
    Eigen::Index dim() const { return vectors.cols(); }

    void validate() const;
};

/// Binary feature file: "MVGF", u32 count, u32 dim, count*dim float32, all
/// little-endian. The source tag is set to the file path.
FeatureSet read_features(const std::string &path);
void write_features(const std::string &path, const FeatureSet &features);

inline constexpr double kFrechetEpsilon = 1e-6;

/// Fréchet distance between Gaussians fitted to the two sets (sample
/// covariance with N - 1, plus kFrechetEpsilon on the diagonal).
double frechet_distance(const FeatureSet &a, const FeatureSet &b);

/// Mean Fréchet distance over objects.
double ofid(const std::vector<std::pair<FeatureSet, FeatureSet>> &per_object);

} // namespace mvg

#endif // MVG_SEMANTIC_H

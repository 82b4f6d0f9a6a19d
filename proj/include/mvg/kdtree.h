// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_KDTREE_H
#define MVG_KDTREE_H

#include <mvg/geometry.h>

#include <cstdint>
#include <vector>

namespace mvg {

/// Static 3-D kd-tree for exact nearest-neighbor queries.
class KdTree {
  public:
    explicit KdTree(std::vector<Vec3> points);

    struct Hit {
        std::uint32_t index = 0;
        double squared_distance = 0.0;
    };

    /// Exact nearest neighbor; ties resolve to the lowest point index.
    Hit nearest(const Vec3 &query) const;

    std::size_t size() const { return points_.size(); }
    const Vec3 &point(std::size_t i) const { return points_[i]; }

  private:
    struct Node {
        std::uint32_t begin, end; // range in order_
        std::int32_t left = -1, right = -1;
        int axis = -1;            // -1 for leaves
        double split = 0.0;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);
    void search(std::int32_t node, const Vec3 &q, Hit &best) const;

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

} // namespace mvg

#endif // MVG_KDTREE_H

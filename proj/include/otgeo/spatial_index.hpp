#pragma once

#include "otgeo/types.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace otgeo {

/// Exact k-d tree over a 3D point set.
///
/// Queries return neighbours ordered by (squared distance, index), so ties are
/// always resolved towards the lowest point index. Distances use
/// squared_distance(), which makes results identical to a brute-force scan.
/// The tree stores a copy of the points and is immutable after construction;
/// concurrent queries are safe.
class KdTree {
public:
    explicit KdTree(const Points& points, std::size_t leaf_size = 8);

    std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }

    Index nearest(const double* query) const;

    /// k nearest, nearest first. k is clamped to size().
    IndexList k_nearest(const double* query, std::size_t k) const;

private:
    struct Node {
        double lo[3];
        double hi[3];
        std::size_t begin = 0;  // range into order_
        std::size_t end = 0;
        int left = -1;
        int right = -1;
    };

    int build(std::size_t begin, std::size_t end);

    Points points_;
    std::vector<Index> order_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_;
};

}  // namespace otgeo

#include "otgeo/spatial_index.hpp"

#include "otgeo/error.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace otgeo {

namespace {

using Candidate = std::pair<double, Index>;  // (squared distance, index), lexicographic

double box_distance(const double* q, const double* lo, const double* hi)
{
    double d = 0.0;
    for (int a = 0; a < 3; ++a) {
        double gap = 0.0;
        if (q[a] < lo[a]) gap = lo[a] - q[a];
        else if (q[a] > hi[a]) gap = q[a] - hi[a];
        d += gap * gap;
    }
    return d;
}

}  // namespace

KdTree::KdTree(const Points& points, std::size_t leaf_size)
    : points_(points), leaf_size_(std::max<std::size_t>(1, leaf_size))
{
    require(points_.rows() > 0, ErrorKind::InvalidInput, "spatial index needs at least one point");
    order_.resize(static_cast<std::size_t>(points_.rows()));
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<Index>(i);
    nodes_.reserve(2 * order_.size() / leaf_size_ + 1);
    build(0, order_.size());
}

int KdTree::build(std::size_t begin, std::size_t end)
{
    Node node;
    node.begin = begin;
    node.end = end;
    for (int a = 0; a < 3; ++a) {
        node.lo[a] = std::numeric_limits<double>::infinity();
        node.hi[a] = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = begin; i < end; ++i) {
        const double* p = points_.row(order_[i]).data();
        for (int a = 0; a < 3; ++a) {
            node.lo[a] = std::min(node.lo[a], p[a]);
            node.hi[a] = std::max(node.hi[a], p[a]);
        }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= leaf_size_) return id;

    int axis = 0;
    double spread = node.hi[0] - node.lo[0];
    for (int a = 1; a < 3; ++a) {
        if (node.hi[a] - node.lo[a] > spread) {
            spread = node.hi[a] - node.lo[a];
            axis = a;
        }
    }
    if (spread <= 0.0) return id;  // all points coincide: keep as a leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](Index x, Index y) {
                         const double px = points_(x, axis);
                         const double py = points_(y, axis);
                         return px < py || (px == py && x < y);
                     });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

Index KdTree::nearest(const double* query) const { return k_nearest(query, 1).front(); }

IndexList KdTree::k_nearest(const double* query, std::size_t k) const
{
    k = std::min(k, size());
    require(k >= 1, ErrorKind::InvalidInput, "k-nearest query needs k >= 1");

    // Max-heap of the best k candidates; top() is the current worst.
    std::priority_queue<Candidate> best;
    auto worst = [&] {
        return best.size() < k ? std::numeric_limits<double>::infinity() : best.top().first;
    };

    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        // Equal distance may still hide a lower index, so only prune on strict excess.
        if (box_distance(query, node.lo, node.hi) > worst()) continue;
        if (node.left < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const Index idx = order_[i];
                const Candidate c{squared_distance(query, points_.row(idx).data()), idx};
                if (best.size() < k) best.push(c);
                else if (c < best.top()) {
                    best.pop();
                    best.push(c);
                }
            }
            continue;
        }
        const Node& l = nodes_[static_cast<std::size_t>(node.left)];
        const Node& r = nodes_[static_cast<std::size_t>(node.right)];
        const double dl = box_distance(query, l.lo, l.hi);
        const double dr = box_distance(query, r.lo, r.hi);
        // Push the farther child first so the nearer one is explored first.
        if (dl <= dr) {
            stack.push_back(node.right);
            stack.push_back(node.left);
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }

    IndexList out(best.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = best.top().second;
        best.pop();
    }
    return out;
}

}  // namespace otgeo

#include "otgeo/error.hpp"
#include "otgeo/ot_plan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

namespace otgeo {

namespace {

// Transportation simplex over a spanning-tree basis. Nodes 0..n2-1 are rows
// (supplies a), nodes n2..n2+n1-1 are columns (demands b).
struct Basic {
    Eigen::Index i;
    Eigen::Index j;
    double x;
};

class TransportSimplex {
public:
    TransportSimplex(const RowMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b)
        : M_(M), n2_(M.rows()), n1_(M.cols())
    {
        northwest_corner(a, b);
        scale_ = std::max(1.0, M.cwiseAbs().maxCoeff());
    }

    void solve()
    {
        const std::size_t nodes = static_cast<std::size_t>(n1_ + n2_);
        int degenerate_run = 0;
        const long long cap = 100000LL + 50LL * static_cast<long long>(n1_ * n2_);
        for (long long pivot = 0;; ++pivot) {
            require(pivot < cap, ErrorKind::Numeric, "transportation simplex did not terminate");
            build_tree(nodes);

            const bool bland = degenerate_run > 50;
            Eigen::Index ei = -1, ej = -1;
            double best = -1e-12 * scale_;
            for (Eigen::Index i = 0; i < n2_ && !(bland && ei >= 0); ++i) {
                for (Eigen::Index j = 0; j < n1_; ++j) {
                    const double rc = M_(i, j) - pot_[static_cast<std::size_t>(i)] -
                                      pot_[static_cast<std::size_t>(n2_ + j)];
                    if (rc < best) {
                        best = rc;
                        ei = i;
                        ej = j;
                        if (bland) break;
                    }
                }
            }
            if (ei < 0) return;

            // Tree path from column node to row node; alternating signs start
            // with "-" on the edge touching the entering column.
            std::vector<std::size_t> path = tree_path(static_cast<std::size_t>(n2_ + ej), static_cast<std::size_t>(ei));
            double theta = std::numeric_limits<double>::infinity();
            std::size_t leave = path.size();
            for (std::size_t k = 0; k < path.size(); k += 2) {
                const double x = cells_[path[k]].x;
                if (x < theta || (x == theta && path[k] < path[leave])) {
                    theta = x;
                    leave = k;
                }
            }
            for (std::size_t k = 0; k < path.size(); ++k) cells_[path[k]].x += (k % 2 == 0 ? -theta : theta);
            const std::size_t gone = path[leave];
            cells_[gone] = Basic{ei, ej, theta};
            degenerate_run = theta == 0.0 ? degenerate_run + 1 : 0;
        }
    }

    TransportPlan plan(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const
    {
        TransportPlan p;
        p.coupling = RowMatrix::Zero(n2_, n1_);
        for (const Basic& c : cells_) p.coupling(c.i, c.j) = std::max(0.0, c.x);
        p.a = a;
        p.b = b;
        p.converged = true;
        return p;
    }

private:
    void northwest_corner(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
    {
        std::vector<double> s(a.data(), a.data() + a.size()), d(b.data(), b.data() + b.size());
        Eigen::Index i = 0, j = 0;
        while (true) {
            const double x = std::min(s[static_cast<std::size_t>(i)], d[static_cast<std::size_t>(j)]);
            cells_.push_back({i, j, x});
            s[static_cast<std::size_t>(i)] -= x;
            d[static_cast<std::size_t>(j)] -= x;
            if (i == n2_ - 1 && j == n1_ - 1) break;
            if (i == n2_ - 1) ++j;
            else if (j == n1_ - 1) ++i;
            else if (s[static_cast<std::size_t>(i)] <= d[static_cast<std::size_t>(j)]) ++i;
            else ++j;
        }
    }

    void build_tree(std::size_t nodes)
    {
        adj_.assign(nodes, {});
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            adj_[static_cast<std::size_t>(cells_[c].i)].push_back(c);
            adj_[static_cast<std::size_t>(n2_ + cells_[c].j)].push_back(c);
        }
        pot_.assign(nodes, 0.0);
        parent_edge_.assign(nodes, SIZE_MAX);
        depth_.assign(nodes, -1);
        std::deque<std::size_t> queue{0};
        depth_[0] = 0;
        while (!queue.empty()) {
            const std::size_t u = queue.front();
            queue.pop_front();
            for (std::size_t c : adj_[u]) {
                const std::size_t row = static_cast<std::size_t>(cells_[c].i);
                const std::size_t col = static_cast<std::size_t>(n2_ + cells_[c].j);
                const std::size_t w = u == row ? col : row;
                if (depth_[w] >= 0) continue;
                depth_[w] = depth_[u] + 1;
                parent_edge_[w] = c;
                // u_i + v_j = M_ij on basic cells.
                pot_[w] = M_(cells_[c].i, cells_[c].j) - pot_[u];
                queue.push_back(w);
            }
        }
        for (std::size_t v = 0; v < nodes; ++v)
            require(depth_[v] >= 0, ErrorKind::Numeric, "transportation basis is not a spanning tree");
    }

    std::size_t other(std::size_t c, std::size_t node) const
    {
        const std::size_t row = static_cast<std::size_t>(cells_[c].i);
        return node == row ? static_cast<std::size_t>(n2_ + cells_[c].j) : row;
    }

    // Cells on the tree path from `from` to `to`, in order starting at `from`.
    std::vector<std::size_t> tree_path(std::size_t from, std::size_t to) const
    {
        std::vector<std::size_t> head, tail;
        std::size_t x = from, y = to;
        while (depth_[x] > depth_[y]) {
            head.push_back(parent_edge_[x]);
            x = other(parent_edge_[x], x);
        }
        while (depth_[y] > depth_[x]) {
            tail.push_back(parent_edge_[y]);
            y = other(parent_edge_[y], y);
        }
        while (x != y) {
            head.push_back(parent_edge_[x]);
            x = other(parent_edge_[x], x);
            tail.push_back(parent_edge_[y]);
            y = other(parent_edge_[y], y);
        }
        head.insert(head.end(), tail.rbegin(), tail.rend());
        return head;
    }

    const RowMatrix& M_;
    Eigen::Index n2_, n1_;
    double scale_ = 1.0;
    std::vector<Basic> cells_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<double> pot_;
    std::vector<std::size_t> parent_edge_;
    std::vector<int> depth_;
};

}  // namespace

TransportPlan exact_plan_lp(const CostMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    require(M.rows() > 0 && M.cols() > 0, ErrorKind::InvalidInput, "empty cost matrix");
    require(static_cast<double>(M.rows()) * static_cast<double>(M.cols()) <= 1e4, ErrorKind::Size,
            "exact LP oracle is limited to n1*n2 <= 10^4 (got " + std::to_string(M.rows()) + "x" +
                std::to_string(M.cols()) + ")");
    require(a.size() == M.rows() && b.size() == M.cols(), ErrorKind::InvalidInput, "marginal lengths do not match");
    require((a.array() >= 0.0).all() && (b.array() >= 0.0).all(), ErrorKind::InvalidInput, "negative marginal");
    require(std::abs(a.sum() - b.sum()) <= 1e-12, ErrorKind::InvalidInput, "marginals carry different mass");

    TransportSimplex simplex(M.entries, a, b);
    simplex.solve();
    TransportPlan plan = simplex.plan(a, b);
    finalize_plan(plan, M);
    return plan;
}

}  // namespace otgeo

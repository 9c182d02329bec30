#pragma once

// Reference implementations used only by tests. Each is written for clarity
// and checks the library from an independent direction.

#include "otgeo/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <vector>

namespace oracle {

using otgeo::Points;

inline double sqdist(const Points& a, Eigen::Index i, const Points& b, Eigen::Index j)
{
    return (a.row(i) - b.row(j)).squaredNorm();
}

/// Index in `set` nearest to row q of `queries`, ties to the lowest index.
inline std::uint32_t nearest(const Points& set, const Points& queries, Eigen::Index q)
{
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (Eigen::Index j = 0; j < set.rows(); ++j) {
        const double d = sqdist(queries, q, set, j);
        if (d < best) {
            best = d;
            arg = static_cast<std::uint32_t>(j);
        }
    }
    return arg;
}

/// k nearest, ordered by (distance, index).
inline std::vector<std::uint32_t> k_nearest(const Points& set, const Points& queries, Eigen::Index q, int k)
{
    std::vector<std::pair<double, std::uint32_t>> all;
    for (Eigen::Index j = 0; j < set.rows(); ++j) all.emplace_back(sqdist(queries, q, set, j), static_cast<std::uint32_t>(j));
    std::sort(all.begin(), all.end());
    std::vector<std::uint32_t> out;
    for (int t = 0; t < k; ++t) out.push_back(all[static_cast<std::size_t>(t)].second);
    return out;
}

/// Minimal sum of squared differences over all permutations; returns the
/// assigned target value for each source entry.
inline std::vector<double> brute_force_assignment(const std::vector<double>& x, const std::vector<double>& y,
                                                  double* best_cost = nullptr)
{
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> arg = perm;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) c += (x[i] - y[perm[i]]) * (x[i] - y[perm[i]]);
        if (c < best) {
            best = c;
            arg = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = y[arg[i]];
    if (best_cost) *best_cost = best;
    return out;
}

/// Exact transport cost for uniform marginals by min-cost flow. Masses are
/// scaled to integers (row supply L/n1, column demand L/n2 with L = lcm) and
/// shipped by successive shortest paths with Dijkstra on reduced costs.
inline double exact_uniform_transport_cost(const Eigen::MatrixXd& M)
{
    const long n1 = M.rows(), n2 = M.cols();
    const long L = std::lcm(n1, n2);
    const long supply = L / n1, demand = L / n2;
    const long V = n1 + n2 + 2, S = n1 + n2, T = S + 1;

    struct Edge {
        long to, cap;
        double cost;
    };
    std::vector<Edge> edges;
    std::vector<std::vector<long>> adj(static_cast<std::size_t>(V));
    auto add = [&](long u, long v, long cap, double cost) {
        adj[static_cast<std::size_t>(u)].push_back(static_cast<long>(edges.size()));
        edges.push_back({v, cap, cost});
        adj[static_cast<std::size_t>(v)].push_back(static_cast<long>(edges.size()));
        edges.push_back({u, 0, -cost});
    };
    for (long i = 0; i < n1; ++i) add(S, i, supply, 0.0);
    for (long j = 0; j < n2; ++j) add(n1 + j, T, demand, 0.0);
    for (long i = 0; i < n1; ++i)
        for (long j = 0; j < n2; ++j) add(i, n1 + j, L, M(i, j));

    std::vector<double> pot(static_cast<std::size_t>(V), 0.0);
    // Initial potentials: all costs are nonnegative, so zero works.
    long flow = 0;
    double cost = 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    while (flow < L) {
        std::vector<double> dist(static_cast<std::size_t>(V), inf);
        std::vector<long> prev_edge(static_cast<std::size_t>(V), -1);
        std::vector<char> done(static_cast<std::size_t>(V), 0);
        dist[static_cast<std::size_t>(S)] = 0.0;
        for (long it = 0; it < V; ++it) {
            long u = -1;
            for (long v = 0; v < V; ++v)
                if (!done[static_cast<std::size_t>(v)] && (u < 0 || dist[static_cast<std::size_t>(v)] < dist[static_cast<std::size_t>(u)]))
                    u = v;
            if (u < 0 || dist[static_cast<std::size_t>(u)] == inf) break;
            done[static_cast<std::size_t>(u)] = 1;
            for (long e : adj[static_cast<std::size_t>(u)]) {
                const Edge& ed = edges[static_cast<std::size_t>(e)];
                if (ed.cap <= 0) continue;
                const double rc = ed.cost + pot[static_cast<std::size_t>(u)] - pot[static_cast<std::size_t>(ed.to)];
                const double nd = dist[static_cast<std::size_t>(u)] + std::max(0.0, rc);
                if (nd < dist[static_cast<std::size_t>(ed.to)]) {
                    dist[static_cast<std::size_t>(ed.to)] = nd;
                    prev_edge[static_cast<std::size_t>(ed.to)] = e;
                }
            }
        }
        if (dist[static_cast<std::size_t>(T)] == inf) break;
        for (long v = 0; v < V; ++v)
            if (dist[static_cast<std::size_t>(v)] < inf) pot[static_cast<std::size_t>(v)] += dist[static_cast<std::size_t>(v)];
        long push = L - flow;
        for (long v = T; v != S;) {
            const long e = prev_edge[static_cast<std::size_t>(v)];
            push = std::min(push, edges[static_cast<std::size_t>(e)].cap);
            v = edges[static_cast<std::size_t>(e ^ 1)].to;
        }
        for (long v = T; v != S;) {
            const long e = prev_edge[static_cast<std::size_t>(v)];
            edges[static_cast<std::size_t>(e)].cap -= push;
            edges[static_cast<std::size_t>(e ^ 1)].cap += push;
            cost += static_cast<double>(push) * edges[static_cast<std::size_t>(e)].cost;
            v = edges[static_cast<std::size_t>(e ^ 1)].to;
        }
        flow += push;
    }
    return cost / static_cast<double>(L);
}

/// Truncated spectral convolution by direct O(m^4) sums: for every kept
/// frequency, DFT each channel, mix with the complex weights, and add the
/// real part of the inverse DFT term.
inline Eigen::MatrixXd naive_spectral_conv(const Eigen::MatrixXd& H, int m, const double* W, int w, int m1, int m2)
{
    using cd = std::complex<double>;
    const int N = m * m;
    const int e1 = std::min(m1, m / 2), e2 = std::min(m2, m / 2);
    const double tau = 2.0 * M_PI;
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(N, w);
    for (int s1 = -e1; s1 < e1; ++s1) {
        for (int k2 = 0; k2 < e2; ++k2) {
            const int k1 = (s1 + m) % m;
            const int row = s1 >= 0 ? s1 : 2 * m1 + s1;
            std::vector<cd> xh(static_cast<std::size_t>(w));
            for (int c = 0; c < w; ++c) {
                cd acc = 0.0;
                for (int a = 0; a < m; ++a)
                    for (int b = 0; b < m; ++b) acc += H(a * m + b, c) * std::exp(cd(0.0, -tau * (k1 * a + k2 * b) / m));
                xh[static_cast<std::size_t>(c)] = acc;
            }
            for (int o = 0; o < w; ++o) {
                cd z = 0.0;
                for (int c = 0; c < w; ++c) {
                    const std::size_t idx = ((((static_cast<std::size_t>(row) * m2 + k2) * w + c) * w + o) * 2);
                    z += cd(W[idx], W[idx + 1]) * xh[static_cast<std::size_t>(c)];
                }
                for (int a = 0; a < m; ++a)
                    for (int b = 0; b < m; ++b)
                        R(a * m + b, o) += (z * std::exp(cd(0.0, tau * (k1 * a + k2 * b) / m))).real() / N;
            }
        }
    }
    return R;
}

inline Points random_points(std::size_t n, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> g;
    Points p(static_cast<Eigen::Index>(n), 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = scale * g(rng);
    return p;
}

/// Fine latitude-longitude midpoint quadrature of f(n) over the unit sphere:
/// nodes, outward normals and area weights.
struct SphereQuadrature {
    Points nodes;
    Eigen::VectorXd weights;
};

inline SphereQuadrature sphere_quadrature(int n_theta, int n_phi)
{
    SphereQuadrature q;
    q.nodes.resize(n_theta * n_phi, 3);
    q.weights.resize(n_theta * n_phi);
    const double dt = M_PI / n_theta, dp = 2.0 * M_PI / n_phi;
    for (int i = 0; i < n_theta; ++i) {
        const double t = (i + 0.5) * dt;
        // Exact band area keeps the weights summing to 4*pi.
        const double band = (std::cos(i * dt) - std::cos((i + 1) * dt)) * dp;
        for (int j = 0; j < n_phi; ++j) {
            const double p = (j + 0.5) * dp;
            const int k = i * n_phi + j;
            q.nodes.row(k) << std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t);
            q.weights(k) = band;
        }
    }
    return q;
}

}  // namespace oracle

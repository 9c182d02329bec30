#pragma once

#include "otgeo/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace otgeo {

/// Monotone rearrangement: the i-th smallest source value is sent to the i-th
/// smallest target value. Result is in source order; ties keep input order.
Eigen::VectorXd ot_1d(const Eigen::VectorXd& source, const Eigen::VectorXd& target);

/// 1D quadratic Wasserstein distance between two equal-size empirical samples.
double wasserstein_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

enum class DirectionRule { CovEig, Random, SlicedMax };

DirectionRule parse_direction_rule(const std::string& name);
std::string to_string(DirectionRule rule);

struct Direction {
    Vec3 e = Vec3::UnitX();
    /// cov-eig found a zero discrepancy matrix and drew a random direction.
    bool fallback = false;
};

/// Unit direction with its first nonzero component positive.
///   cov-eig:    leading eigenvector of (Cov X - Cov Y)^2 + dmu dmu^T
///   random:     uniform on the sphere
///   sliced-max: best of `slices` random directions by 1D W2 of the projections
Direction informative_direction(const Points& X, const Points& Y, DirectionRule rule, std::mt19937_64& rng,
                                int slices = 64);

struct PpmmConfig {
    int max_iters = 0;  // 0 = default_ppmm_iters(n)
    DirectionRule rule = DirectionRule::CovEig;
    /// Stop when the projected W2 drops below tol; negative = 1e-6 * bbox diagonal of Y.
    double tol = -1.0;
    std::uint64_t seed = 0;
    int slices = 64;
};

struct MongeMapResult {
    Points transported;
    int iterations = 0;
    bool converged = false;
    std::vector<double> per_iter_disc;
    std::vector<Vec3> directions;
    int fallbacks = 0;
    double tol = 0.0;
};

/// K = ceil(c * sqrt(n)) with K(18000) = 2000.
int default_ppmm_iters(std::size_t n);

/// Projection pursuit Monge map from X0 onto Y (equal counts).
MongeMapResult ppmm(const Points& X0, const Points& Y, const PpmmConfig& cfg);

}  // namespace otgeo

#pragma once

#include "otgeo/geometry.hpp"
#include "otgeo/types.hpp"

#include <string>

namespace otgeo {

/// Dense n2 x n1 squared-Euclidean cost, rows = latent points, columns =
/// physical points. Entries come from squared_distance().
struct CostMatrix {
    RowMatrix entries;
    std::string row_tag;
    std::string col_tag;

    Eigen::Index rows() const { return entries.rows(); }
    Eigen::Index cols() const { return entries.cols(); }
};

CostMatrix cost_matrix(const Points& latent, const Points& physical);

double median_cost(const CostMatrix& M);

struct SinkhornConfig {
    double beta = 1e6;
    /// Interpret beta in units of 1/median(M) (effective beta = beta / median(M)).
    bool beta_relative = false;
    int max_iters = 5000;
    /// Bound on the L1 violation of either marginal.
    double marginal_tol = 1e-9;
    bool log_domain = true;
    /// Warm-start by halving the temperature from max(M) down to the target.
    /// Only the last stage is bound by max_iters; earlier stages are capped at
    /// anneal_stage_iters each. Requires log_domain.
    bool anneal = true;
    int anneal_stage_iters = 10000;
    /// Project the returned coupling onto the transport polytope (row/column
    /// down-scaling followed by a rank-one mass correction). Moves at most
    /// 2 * (row + column residual) of mass and makes both marginals exact.
    bool round_to_polytope = true;
};

/// Dual potentials of the entropic problem: P_ij = exp((f_i + g_j - M_ij) / epsilon).
struct SinkhornPotentials {
    Eigen::VectorXd f;
    Eigen::VectorXd g;
    double epsilon = 0.0;
    double beta_requested = 0.0;
    double beta_effective = 0.0;
    double median_cost = 0.0;
    int iterations = 0;
    int stages = 0;
    bool converged = false;
};

struct TransportPlan {
    RowMatrix coupling;
    Eigen::VectorXd a;  // row marginal (latent)
    Eigen::VectorXd b;  // column marginal (physical)
    double beta = 0.0;
    double beta_effective = 0.0;
    int iterations = 0;
    bool converged = false;
    double row_residual = 0.0;  // ||P 1 - a||_1
    double col_residual = 0.0;  // ||P^T 1 - b||_1
    double cost = 0.0;          // <P, M>

    Eigen::Index nonzeros(double threshold = 0.0) const;
};

SinkhornPotentials sinkhorn_potentials(const CostMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                       const SinkhornConfig& cfg);

/// Solves and materialises the plan; refuses instances above max_dense_entries().
TransportPlan sinkhorn(const CostMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const SinkhornConfig& cfg);

RowMatrix plan_from_potentials(const CostMatrix& M, const SinkhornPotentials& pot);

/// Rounds a nearly feasible nonnegative coupling onto the transport polytope.
void round_to_polytope(RowMatrix& P, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Fills residuals and cost of an existing coupling.
void finalize_plan(TransportPlan& plan, const CostMatrix& M);

/// Exact optimal coupling by the transportation simplex; at most n1 + n2 - 1
/// nonzeros. Refuses n1 * n2 > 10^4.
TransportPlan exact_plan_lp(const CostMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

constexpr double max_dense_entries() { return 2e8; }

// ---------------------------------------------------------------------------
// Transported mesh

/// Barycentric image x'_i = sum_j P_ij x_j / sum_j P_ij. The realised row mass
/// is used so every x'_i is a convex combination of cloud points.
Points transported_mesh(const TransportPlan& plan, const PointCloud& cloud);

enum class PlanStrategy { Matrix, Max, Mean };

PlanStrategy parse_plan_strategy(const std::string& name);
std::string to_string(PlanStrategy s);

struct StrategyResult {
    Points points;
    /// Index of the chosen physical point per latent row (empty for Matrix).
    IndexList provenance;
};

StrategyResult plan_strategy(const TransportPlan& plan, const PointCloud& cloud, PlanStrategy mode);

/// Same as plan_strategy, but plan rows are rebuilt one at a time from the
/// potentials so the coupling is never stored.
StrategyResult plan_strategy_streamed(const Points& latent, const PointCloud& cloud, const SinkhornPotentials& pot,
                                      PlanStrategy mode);

}  // namespace otgeo

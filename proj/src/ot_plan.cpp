#include "otgeo/ot_plan.hpp"

#include "otgeo/error.hpp"
#include "otgeo/parallel.hpp"
#include "otgeo/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

namespace otgeo {

CostMatrix cost_matrix(const Points& latent, const Points& physical)
{
    require(latent.rows() > 0 && physical.rows() > 0, ErrorKind::InvalidInput, "cost_matrix needs nonempty sets");
    require(static_cast<double>(latent.rows()) * static_cast<double>(physical.rows()) <= max_dense_entries(),
            ErrorKind::Size, "cost matrix would exceed the dense limit; downsample the cloud or reduce alpha");
    CostMatrix M;
    M.entries.resize(latent.rows(), physical.rows());
    parallel_for(0, static_cast<std::size_t>(latent.rows()), [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double* xi = latent.row(r).data();
        double* out = M.entries.row(r).data();
        for (Eigen::Index j = 0; j < physical.rows(); ++j) out[j] = squared_distance(xi, physical.row(j).data());
    });
    return M;
}

double median_cost(const CostMatrix& M)
{
    std::vector<double> v(M.entries.data(), M.entries.data() + M.entries.size());
    require(!v.empty(), ErrorKind::InvalidInput, "median of an empty cost matrix");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

Eigen::Index TransportPlan::nonzeros(double threshold) const
{
    return (coupling.array() > threshold).count();
}

namespace {

void check_marginal(const Eigen::VectorXd& w, Eigen::Index n, const char* name)
{
    require(w.size() == n, ErrorKind::InvalidInput, std::string("marginal ") + name + " has the wrong length");
    require(w.allFinite() && (w.array() > 0.0).all(), ErrorKind::InvalidInput,
            std::string("marginal ") + name + " must be strictly positive");
    require(std::abs(w.sum() - 1.0) <= 1e-12, ErrorKind::InvalidInput,
            std::string("marginal ") + name + " is not normalised");
}

double log_sum_exp(const double* x, Eigen::Index n, Eigen::Index stride)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) mx = std::max(mx, x[k * stride]);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += std::exp(x[k * stride] - mx);
    return mx + std::log(s);
}

// Stabilised scaling iterations: P = diag(u) Kt diag(v) with
// Kt = exp((f + g - M) / eps). u and v are folded back into f and g whenever
// they drift far from 1.
class Solver {
public:
    Solver(const RowMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b)
        : M_(M), a_(a), b_(b), f_(Eigen::VectorXd::Zero(M.rows())), g_(Eigen::VectorXd::Zero(M.cols())),
          u_(Eigen::VectorXd::Ones(M.rows())), v_(Eigen::VectorXd::Ones(M.cols()))
    {
    }

    // Returns true when the row residual dropped below tol.
    bool stage(double eps, int max_iters, double tol, bool log_domain, int& iterations)
    {
        absorb();
        eps_ = eps;
        if (log_domain) {
            update_f_log();
            update_g_log();
        }
        rebuild_kernel();
        for (int it = 0; it < max_iters; ++it) {
            ++iterations;
            c_.noalias() = K_.transpose() * u_;
            if (!positive_finite(c_)) {
                require(log_domain, ErrorKind::Numeric,
                        "Sinkhorn kernel underflow at beta=" + std::to_string(1.0 / eps) + "; enable log_domain");
                absorb();
                update_g_log();
                rebuild_kernel();
                c_.noalias() = K_.transpose() * u_;
                require(positive_finite(c_), ErrorKind::Numeric, "Sinkhorn column update is not finite");
            }
            v_ = b_.cwiseQuotient(c_);

            r_.noalias() = K_ * v_;
            if (!positive_finite(r_)) {
                require(log_domain, ErrorKind::Numeric,
                        "Sinkhorn kernel underflow at beta=" + std::to_string(1.0 / eps) + "; enable log_domain");
                absorb();
                update_f_log();
                rebuild_kernel();
                continue;
            }
            const double residual = (u_.cwiseProduct(r_) - a_).lpNorm<1>();
            if (residual < tol) return true;
            u_ = a_.cwiseQuotient(r_);
            if (!log_domain) {
                require(u_.allFinite() && v_.allFinite(), ErrorKind::Numeric,
                        "Sinkhorn scaling overflow at beta=" + std::to_string(1.0 / eps) + "; enable log_domain");
                continue;
            }
            if (needs_absorb(u_) || needs_absorb(v_)) {
                absorb();
                rebuild_kernel();
            }
        }
        return false;
    }

    // Current coupling diag(u) Kt diag(v); marginals are consistent with the
    // kernel the iterations ran on, unlike a re-exponentiation of f and g.
    RowMatrix coupling() const
    {
        return u_.asDiagonal() * K_ * v_.asDiagonal();
    }

    void absorb() noexcept
    {
        f_.array() += eps_ * u_.array().log();
        g_.array() += eps_ * v_.array().log();
        u_.setOnes();
        v_.setOnes();
    }

    const Eigen::VectorXd& f() const { return f_; }
    const Eigen::VectorXd& g() const { return g_; }

private:
    static bool positive_finite(const Eigen::VectorXd& x)
    {
        return x.allFinite() && (x.array() > 0.0).all();
    }

    static bool needs_absorb(const Eigen::VectorXd& x)
    {
        constexpr double hi = 1e50, lo = 1e-50;
        return (x.array() > hi).any() || (x.array() < lo).any();
    }

    void rebuild_kernel()
    {
        K_.resize(M_.rows(), M_.cols());
        const double inv = 1.0 / eps_;
        for (Eigen::Index i = 0; i < M_.rows(); ++i)
            for (Eigen::Index j = 0; j < M_.cols(); ++j) K_(i, j) = std::exp((f_(i) + g_(j) - M_(i, j)) * inv);
    }

    void update_f_log()
    {
        std::vector<double> buf(static_cast<std::size_t>(M_.cols()));
        const double inv = 1.0 / eps_;
        for (Eigen::Index i = 0; i < M_.rows(); ++i) {
            for (Eigen::Index j = 0; j < M_.cols(); ++j) buf[static_cast<std::size_t>(j)] = (g_(j) - M_(i, j)) * inv;
            f_(i) = eps_ * (std::log(a_(i)) - log_sum_exp(buf.data(), M_.cols(), 1));
        }
    }

    void update_g_log()
    {
        std::vector<double> buf(static_cast<std::size_t>(M_.rows()));
        const double inv = 1.0 / eps_;
        for (Eigen::Index j = 0; j < M_.cols(); ++j) {
            for (Eigen::Index i = 0; i < M_.rows(); ++i) buf[static_cast<std::size_t>(i)] = (f_(i) - M_(i, j)) * inv;
            g_(j) = eps_ * (std::log(b_(j)) - log_sum_exp(buf.data(), M_.rows(), 1));
        }
    }

    const RowMatrix& M_;
    const Eigen::VectorXd& a_;
    const Eigen::VectorXd& b_;
    Eigen::VectorXd f_, g_, u_, v_, c_, r_;
    RowMatrix K_;
    double eps_ = 1.0;
};

}  // namespace

namespace {

SinkhornPotentials run_sinkhorn(const CostMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                const SinkhornConfig& cfg, Solver& solver)
{
    require(cfg.beta > 0.0 && std::isfinite(cfg.beta), ErrorKind::InvalidConfig, "beta must be positive");
    require(cfg.max_iters >= 1, ErrorKind::InvalidConfig, "max_iters must be >= 1");
    require(cfg.marginal_tol > 0.0, ErrorKind::InvalidConfig, "marginal_tol must be positive");
    require(M.rows() > 0 && M.cols() > 0, ErrorKind::InvalidInput, "empty cost matrix");
    require(M.entries.allFinite(), ErrorKind::InvalidInput, "cost matrix has non-finite entries");
    require(static_cast<double>(M.rows()) * static_cast<double>(M.cols()) <= max_dense_entries(), ErrorKind::Size,
            "instance exceeds the dense plan limit; downsample the cloud");
    check_marginal(a, M.rows(), "a");
    check_marginal(b, M.cols(), "b");

    SinkhornPotentials pot;
    pot.beta_requested = cfg.beta;
    pot.median_cost = median_cost(M);
    if (cfg.beta_relative) {
        require(pot.median_cost > 0.0, ErrorKind::InvalidInput, "relative beta needs a nonzero median cost");
        pot.beta_effective = cfg.beta / pot.median_cost;
    } else {
        pot.beta_effective = cfg.beta;
    }
    const double eps_target = 1.0 / pot.beta_effective;

    if (cfg.log_domain && cfg.anneal) {
        double eps = std::max(M.entries.maxCoeff(), eps_target);
        while (eps > eps_target) {
            solver.stage(eps, cfg.anneal_stage_iters, cfg.marginal_tol, true, pot.iterations);
            ++pot.stages;
            eps = std::max(0.5 * eps, eps_target);
        }
    }
    pot.converged = solver.stage(eps_target, cfg.max_iters, cfg.marginal_tol, cfg.log_domain, pot.iterations);
    ++pot.stages;
    pot.epsilon = eps_target;
    return pot;
}

}  // namespace

SinkhornPotentials sinkhorn_potentials(const CostMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                       const SinkhornConfig& cfg)
{
    Solver solver(M.entries, a, b);
    SinkhornPotentials pot = run_sinkhorn(M, a, b, cfg, solver);
    solver.absorb();
    pot.f = solver.f();
    pot.g = solver.g();
    return pot;
}

RowMatrix plan_from_potentials(const CostMatrix& M, const SinkhornPotentials& pot)
{
    RowMatrix P(M.rows(), M.cols());
    const double inv = 1.0 / pot.epsilon;
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j)
            P(i, j) = std::exp((pot.f(i) + pot.g(j) - M.entries(i, j)) * inv);
    return P;
}

void round_to_polytope(RowMatrix& P, const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    const Eigen::VectorXd r = P.rowwise().sum();
    for (Eigen::Index i = 0; i < P.rows(); ++i)
        if (r(i) > a(i)) P.row(i) *= a(i) / r(i);
    const Eigen::VectorXd c = P.colwise().sum().transpose();
    for (Eigen::Index j = 0; j < P.cols(); ++j)
        if (c(j) > b(j)) P.col(j) *= b(j) / c(j);
    const Eigen::VectorXd er = (a - P.rowwise().sum()).cwiseMax(0.0);
    const Eigen::VectorXd ec = (b - P.colwise().sum().transpose()).cwiseMax(0.0);
    const double mass = er.sum();
    if (mass > 0.0) P.noalias() += (er / mass) * ec.transpose();
}

void finalize_plan(TransportPlan& plan, const CostMatrix& M)
{
    plan.row_residual = (plan.coupling.rowwise().sum() - plan.a).lpNorm<1>();
    plan.col_residual = (plan.coupling.colwise().sum().transpose() - plan.b).lpNorm<1>();
    plan.cost = plan.coupling.cwiseProduct(M.entries).sum();
}

TransportPlan sinkhorn(const CostMatrix& M, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const SinkhornConfig& cfg)
{
    Solver solver(M.entries, a, b);
    const SinkhornPotentials pot = run_sinkhorn(M, a, b, cfg, solver);
    TransportPlan plan;
    plan.coupling = solver.coupling();
    if (cfg.round_to_polytope) round_to_polytope(plan.coupling, a, b);
    plan.a = a;
    plan.b = b;
    plan.beta = pot.beta_requested;
    plan.beta_effective = pot.beta_effective;
    plan.iterations = pot.iterations;
    finalize_plan(plan, M);
    plan.converged = pot.converged && std::max(plan.row_residual, plan.col_residual) < cfg.marginal_tol;
    return plan;
}

// ---------------------------------------------------------------------------

Points transported_mesh(const TransportPlan& plan, const PointCloud& cloud)
{
    require(plan.coupling.cols() == cloud.points.rows(), ErrorKind::Shape,
            "plan column count does not match the cloud size");
    Points out(plan.coupling.rows(), 3);
    for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i) {
        const double mass = plan.coupling.row(i).sum();
        require(mass > 0.0 && (plan.a.size() == 0 || plan.a(i) > 0.0), ErrorKind::DegenerateRow,
                "latent row " + std::to_string(i) + " carries no mass");
        out.row(i) = (plan.coupling.row(i) * cloud.points) / mass;
    }
    return out;
}

PlanStrategy parse_plan_strategy(const std::string& name)
{
    if (name == "matrix") return PlanStrategy::Matrix;
    if (name == "max") return PlanStrategy::Max;
    if (name == "mean") return PlanStrategy::Mean;
    fail(ErrorKind::InvalidConfig, "unknown plan strategy '" + name + "'");
}

std::string to_string(PlanStrategy s)
{
    switch (s) {
    case PlanStrategy::Matrix: return "matrix";
    case PlanStrategy::Max: return "max";
    case PlanStrategy::Mean: return "mean";
    }
    return "?";
}

namespace {

// Shared row-wise strategy evaluation; row(i, buf) fills plan row i.
template <class RowFn>
StrategyResult apply_strategy(Eigen::Index rows, const PointCloud& cloud, PlanStrategy mode, RowFn row)
{
    StrategyResult res;
    res.points.resize(rows, 3);
    if (mode != PlanStrategy::Matrix) res.provenance.resize(static_cast<std::size_t>(rows));
    std::unique_ptr<KdTree> tree;
    if (mode == PlanStrategy::Mean) tree = std::make_unique<KdTree>(cloud.points);

    parallel_for(0, static_cast<std::size_t>(rows), [&](std::size_t ui) {
        const auto i = static_cast<Eigen::Index>(ui);
        Eigen::RowVectorXd p(cloud.points.rows());
        row(i, p);
        if (mode == PlanStrategy::Max) {
            Eigen::Index best = 0;
            for (Eigen::Index j = 1; j < p.size(); ++j)
                if (p(j) > p(best)) best = j;
            res.provenance[ui] = static_cast<Index>(best);
            res.points.row(i) = cloud.points.row(best);
            return;
        }
        const double mass = p.sum();
        require(mass > 0.0, ErrorKind::DegenerateRow, "latent row " + std::to_string(i) + " carries no mass");
        const Eigen::RowVector3d x = (p * cloud.points) / mass;
        if (mode == PlanStrategy::Matrix) {
            res.points.row(i) = x;
            return;
        }
        const Index nn = tree->nearest(x.data());
        res.provenance[ui] = nn;
        res.points.row(i) = cloud.points.row(nn);
    });
    return res;
}

}  // namespace

StrategyResult plan_strategy(const TransportPlan& plan, const PointCloud& cloud, PlanStrategy mode)
{
    require(plan.coupling.cols() == cloud.points.rows(), ErrorKind::Shape,
            "plan column count does not match the cloud size");
    return apply_strategy(plan.coupling.rows(), cloud, mode,
                          [&](Eigen::Index i, Eigen::RowVectorXd& p) { p = plan.coupling.row(i); });
}

StrategyResult plan_strategy_streamed(const Points& latent, const PointCloud& cloud, const SinkhornPotentials& pot,
                                      PlanStrategy mode)
{
    require(pot.f.size() == latent.rows() && pot.g.size() == cloud.points.rows(), ErrorKind::Shape,
            "potentials do not match the point sets");
    const double inv = 1.0 / pot.epsilon;
    return apply_strategy(latent.rows(), cloud, mode, [&](Eigen::Index i, Eigen::RowVectorXd& p) {
        const double* xi = latent.row(i).data();
        for (Eigen::Index j = 0; j < p.size(); ++j)
            p(j) = std::exp((pot.f(i) + pot.g(j) - squared_distance(xi, cloud.points.row(j).data())) * inv);
    });
}

}  // namespace otgeo

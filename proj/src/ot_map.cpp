#include "otgeo/ot_map.hpp"

#include "otgeo/error.hpp"
#include "otgeo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace otgeo {

namespace {

std::vector<Eigen::Index> stable_order(const Eigen::VectorXd& x)
{
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index p, Eigen::Index q) { return x(p) < x(q); });
    return idx;
}

Eigen::VectorXd sorted(const Eigen::VectorXd& x)
{
    Eigen::VectorXd s = x;
    std::sort(s.data(), s.data() + s.size());
    return s;
}

Eigen::VectorXd project(const Points& X, const Vec3& e)
{
    Eigen::VectorXd p(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) p(i) = X(i, 0) * e(0) + X(i, 1) * e(1) + X(i, 2) * e(2);
    return p;
}

Vec3 canonical_sign(Vec3 e)
{
    for (int a = 0; a < 3; ++a) {
        if (e(a) != 0.0) {
            if (e(a) < 0.0) e = -e;
            break;
        }
    }
    return e;
}

Vec3 random_unit(std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        Vec3 v(normal(rng), normal(rng), normal(rng));
        const double n = v.norm();
        if (n > 1e-12) return v / n;
    }
}

Eigen::Matrix3d covariance(const Points& X, Vec3& mean)
{
    mean = X.colwise().mean().transpose();
    const Points C = X.rowwise() - mean.transpose();
    return (C.transpose() * C) / static_cast<double>(X.rows());
}

}  // namespace

Eigen::VectorXd ot_1d(const Eigen::VectorXd& source, const Eigen::VectorXd& target)
{
    require(source.size() == target.size(), ErrorKind::InvalidInput,
            "ot_1d needs equal lengths (" + std::to_string(source.size()) + " vs " +
                std::to_string(target.size()) + ")");
    const auto order = stable_order(source);
    const Eigen::VectorXd t = sorted(target);
    Eigen::VectorXd out(source.size());
    for (std::size_t k = 0; k < order.size(); ++k) out(order[k]) = t(static_cast<Eigen::Index>(k));
    return out;
}

double wasserstein_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y)
{
    require(x.size() == y.size() && x.size() > 0, ErrorKind::InvalidInput, "wasserstein_1d needs equal sizes");
    return std::sqrt((sorted(x) - sorted(y)).squaredNorm() / static_cast<double>(x.size()));
}

DirectionRule parse_direction_rule(const std::string& name)
{
    if (name == "cov-eig") return DirectionRule::CovEig;
    if (name == "random") return DirectionRule::Random;
    if (name == "sliced-max") return DirectionRule::SlicedMax;
    fail(ErrorKind::InvalidConfig, "unknown direction rule '" + name + "'");
}

std::string to_string(DirectionRule rule)
{
    switch (rule) {
    case DirectionRule::CovEig: return "cov-eig";
    case DirectionRule::Random: return "random";
    case DirectionRule::SlicedMax: return "sliced-max";
    }
    return "?";
}

Direction informative_direction(const Points& X, const Points& Y, DirectionRule rule, std::mt19937_64& rng,
                                int slices)
{
    require(X.rows() >= 2 && Y.rows() >= 2, ErrorKind::InvalidInput, "informative_direction needs n >= 2");
    Direction d;
    switch (rule) {
    case DirectionRule::Random: d.e = random_unit(rng); break;
    case DirectionRule::SlicedMax: {
        require(slices >= 1, ErrorKind::InvalidConfig, "sliced-max needs at least one slice");
        double best = -1.0;
        for (int s = 0; s < slices; ++s) {
            const Vec3 e = random_unit(rng);
            const double w = wasserstein_1d(project(X, e), project(Y, e));
            if (w > best) {
                best = w;
                d.e = e;
            }
        }
        break;
    }
    case DirectionRule::CovEig: {
        Vec3 mx, my;
        const Eigen::Matrix3d dc = covariance(X, mx) - covariance(Y, my);
        const Vec3 dm = mx - my;
        const Eigen::Matrix3d D = dc * dc + dm * dm.transpose();
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(D);
        if (!(eig.eigenvalues()(2) > 0.0)) {
            d.e = random_unit(rng);
            d.fallback = true;
        } else {
            d.e = eig.eigenvectors().col(2).normalized();
        }
        break;
    }
    }
    d.e = canonical_sign(d.e);
    return d;
}

int default_ppmm_iters(std::size_t n)
{
    const double c = 2000.0 / std::sqrt(18000.0);
    return std::max(1, static_cast<int>(std::ceil(c * std::sqrt(static_cast<double>(n)))));
}

MongeMapResult ppmm(const Points& X0, const Points& Y, const PpmmConfig& cfg)
{
    require(X0.rows() == Y.rows(), ErrorKind::InvalidInput,
            "ppmm needs equal point counts (" + std::to_string(X0.rows()) + " vs " + std::to_string(Y.rows()) + ")");
    require(X0.rows() >= 2, ErrorKind::InvalidInput, "ppmm needs at least two points");
    require(cfg.max_iters >= 0, ErrorKind::InvalidConfig, "ppmm iterations must be >= 1");

    MongeMapResult res;
    res.transported = X0;
    res.tol = cfg.tol >= 0.0 ? cfg.tol : 1e-6 * bounding_box(Y).diagonal();
    const int K = cfg.max_iters > 0 ? cfg.max_iters : default_ppmm_iters(static_cast<std::size_t>(X0.rows()));
    std::mt19937_64 rng(cfg.seed);
    Points& X = res.transported;

    for (int k = 0; k < K; ++k) {
        const Direction dir = informative_direction(X, Y, cfg.rule, rng, cfg.slices);
        res.fallbacks += dir.fallback ? 1 : 0;
        const Eigen::VectorXd px = project(X, dir.e);
        const Eigen::VectorXd py = project(Y, dir.e);
        const double disc = wasserstein_1d(px, py);
        res.directions.push_back(dir.e);
        res.per_iter_disc.push_back(disc);
        res.iterations = k + 1;
        if (disc < res.tol) {
            res.converged = true;
            break;
        }
        const Eigen::VectorXd delta = ot_1d(px, py) - px;
        X.noalias() += delta * dir.e.transpose();
    }
    return res;
}

}  // namespace otgeo

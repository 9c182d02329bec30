#include "oracles.hpp"

#include "otgeo/error.hpp"
#include "otgeo/ot_map.hpp"

#include <doctest.h>

using namespace otgeo;

namespace {

Eigen::VectorXd sorted(Eigen::VectorXd v)
{
    std::sort(v.data(), v.data() + v.size());
    return v;
}

}  // namespace

TEST_CASE("ot_1d equals the brute-force assignment")
{
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> len(1, 7);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 60; ++rep) {
        const int n = len(rng);
        std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
        for (auto& v : x) v = g(rng);
        for (auto& v : y) v = g(rng);
        double best = 0.0;
        const auto ref = oracle::brute_force_assignment(x, y, &best);
        const Eigen::VectorXd out = ot_1d(Eigen::Map<Eigen::VectorXd>(x.data(), n), Eigen::Map<Eigen::VectorXd>(y.data(), n));
        for (int i = 0; i < n; ++i) CHECK(out(i) == ref[static_cast<std::size_t>(i)]);
        const double w = wasserstein_1d(Eigen::Map<Eigen::VectorXd>(x.data(), n), Eigen::Map<Eigen::VectorXd>(y.data(), n));
        CHECK(w * w == doctest::Approx(best / n).epsilon(1e-12));
    }
}

TEST_CASE("ot_1d keeps input order among ties")
{
    Eigen::VectorXd x(4), y(4);
    x << 1.0, 1.0, 0.0, 1.0;
    y << 3.0, 2.0, 1.0, 4.0;
    const Eigen::VectorXd out = ot_1d(x, y);
    CHECK(out(2) == 1.0);
    CHECK(out(0) == 2.0);
    CHECK(out(1) == 3.0);
    CHECK(out(3) == 4.0);
}

TEST_CASE("every PPMM step matches sorted projections along its direction")
{
    std::mt19937_64 rng(2);
    const Points X = oracle::random_points(128, rng);
    Points Y = oracle::random_points(128, rng, 0.5);
    Y.col(0).array() += 2.0;
    for (const auto rule : {DirectionRule::CovEig, DirectionRule::Random, DirectionRule::SlicedMax}) {
        for (int k = 1; k <= 12; ++k) {
            PpmmConfig cfg;
            cfg.max_iters = k;
            cfg.rule = rule;
            cfg.tol = 0.0;
            cfg.seed = 9;
            cfg.slices = 8;
            const MongeMapResult r = ppmm(X, Y, cfg);
            REQUIRE(r.iterations == k);
            const Vec3 e = r.directions.back();
            CHECK(std::abs(e.norm() - 1.0) < 1e-12);
            const Eigen::VectorXd px = sorted(r.transported * e), py = sorted(Y * e);
            CHECK((px - py).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("PPMM moves a Gaussian onto a shifted, stretched Gaussian")
{
    std::mt19937_64 rng(3);
    const Points X = oracle::random_points(1024, rng);
    Points Y = oracle::random_points(1024, rng);
    Y.col(0).array() += 3.0;
    Y.col(1) *= 2.0;
    Y.col(2) *= 0.5;
    PpmmConfig cfg;
    cfg.max_iters = 200;
    const MongeMapResult r = ppmm(X, Y, cfg);
    const Eigen::RowVector3d mx = r.transported.colwise().mean(), my = Y.colwise().mean();
    const Eigen::MatrixXd cx = (r.transported.rowwise() - mx).transpose() * (r.transported.rowwise() - mx) / 1024.0;
    const Eigen::MatrixXd cy = (Y.rowwise() - my).transpose() * (Y.rowwise() - my) / 1024.0;
    CHECK((mx - my).norm() < 0.05);
    CHECK((cx - cy).norm() < 0.1);
    CHECK(r.per_iter_disc.back() < r.per_iter_disc.front());
}

TEST_CASE("directions are canonical and cov-eig falls back on identical moments")
{
    std::mt19937_64 rng(4);
    const Points X = oracle::random_points(50, rng);
    std::mt19937_64 dir_rng(1);
    const Direction d = informative_direction(X, X, DirectionRule::CovEig, dir_rng);
    CHECK(d.fallback);
    CHECK(std::abs(d.e.norm() - 1.0) < 1e-12);
    for (int i = 0; i < 3; ++i)
        if (d.e[i] != 0.0) {
            CHECK(d.e[i] > 0.0);
            break;
        }
}

TEST_CASE("identical clouds converge immediately and counts must match")
{
    std::mt19937_64 rng(5);
    const Points X = oracle::random_points(64, rng);
    const MongeMapResult r = ppmm(X, X, PpmmConfig{});
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    CHECK(r.transported == X);
    CHECK_THROWS_AS(ppmm(X, oracle::random_points(63, rng), PpmmConfig{}), Error);
    CHECK(default_ppmm_iters(18000) == 2000);
}

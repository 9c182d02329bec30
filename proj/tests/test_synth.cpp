#include "otgeo/drag.hpp"
#include "otgeo/synth.hpp"

#include <doctest.h>

using namespace otgeo;

TEST_CASE("generation is bit-identical per seed")
{
    SynthOptions o;
    o.points = 200;
    for (const auto kind : {SynthKind::Star2d, SynthKind::BumpySphere3d}) {
        const auto a = synth_dataset(kind, 3, 7, o);
        const auto b = synth_dataset(kind, 3, 7, o);
        const auto c = synth_dataset(kind, 3, 8, o);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(a[i].tag == b[i].tag);
            CHECK(a[i].cloud.points == b[i].cloud.points);
            CHECK(a[i].target == b[i].target);
            CHECK(a[i].cd == b[i].cd);
        }
        CHECK(a[0].cloud.points != c[0].cloud.points);
    }
}

TEST_CASE("a circle has unit curvature and the cylinder pressure 1 - 4 sin^2")
{
    SynthOptions o;
    o.points = 180;
    o.amplitude = 0.0;
    o.target = SynthTarget::Curvature;
    const auto curv = synth_dataset(SynthKind::Star2d, 1, 1, o);
    CHECK((curv[0].target.array() - 1.0).abs().maxCoeff() < 1e-12);

    o.target = SynthTarget::Pressure;
    const auto pres = synth_dataset(SynthKind::Star2d, 1, 1, o);
    const Points& x = pres[0].cloud.points;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double s = x(i, 1) / std::hypot(x(i, 0), x(i, 1));
        CHECK(std::abs(pres[0].target(i, 0) - (1.0 - 4.0 * s * s)) < 1e-9);
    }
    CHECK(std::abs(pres[0].total_area - 2.0 * M_PI) < 1e-10);
}

TEST_CASE("stored star pressures are converged in the quadrature resolution")
{
    SynthOptions o;
    o.points = 300;
    const auto data = synth_dataset(SynthKind::Star2d, 4, 3, o);
    for (const auto& inst : data) {
        CHECK(inst.refinement_delta < 1e-6);
        // Potential flow past a closed body carries no pressure drag.
        CHECK(std::abs(inst.cd) < 1e-6);
        CHECK(std::abs(inst.cloud.normals->rowwise().norm().maxCoeff() - 1.0) < 1e-12);
    }
}

TEST_CASE("star points are equally spaced in arc length")
{
    SynthOptions o;
    o.points = 400;
    const auto inst = synth_dataset(SynthKind::Star2d, 1, 5, o)[0];
    const Points& x = inst.cloud.points;
    const double h = inst.total_area / 400.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double chord = (x.row((i + 1) % x.rows()) - x.row(i)).norm();
        CHECK(chord <= h + 1e-9);
        CHECK(chord > 0.9 * h);
    }
}

TEST_CASE("unperturbed bumpy sphere has the analytic target")
{
    SynthOptions o;
    o.points = 300;
    o.bumps = 0;
    const auto inst = synth_dataset(SynthKind::BumpySphere3d, 1, 2, o)[0];
    for (Eigen::Index i = 0; i < inst.cloud.points.rows(); ++i) {
        CHECK(std::abs(inst.cloud.points.row(i).norm() - 1.0) < 1e-12);
        CHECK(std::abs(inst.target(i, 0) - (inst.cloud.points(i, 0) + 0.25)) < 1e-6);
    }
    CHECK(inst.total_area == doctest::Approx(4.0 * M_PI).epsilon(1e-12));
    CHECK(inst.refinement_delta < 1e-6);
}

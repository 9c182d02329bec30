#include "otgeo/drag.hpp"

#include "otgeo/error.hpp"

#include <cmath>

namespace otgeo {

namespace {

void check(const Eigen::VectorXd& p, const Points& normals, const Eigen::VectorXd* measure)
{
    require(p.size() == normals.rows(), ErrorKind::InvalidInput, "pressure and normals differ in length");
    if (measure)
        require(measure->size() == p.size(), ErrorKind::InvalidInput, "surface measure has the wrong length");
}

}  // namespace

double drag_sum(const Eigen::VectorXd& pressure, const Points& normals, const Vec3& inlet,
                const Eigen::VectorXd* measure)
{
    check(pressure, normals, measure);
    double s = 0.0;
    for (Eigen::Index i = 0; i < pressure.size(); ++i) {
        const double proj = normals(i, 0) * inlet(0) + normals(i, 1) * inlet(1) + normals(i, 2) * inlet(2);
        s += pressure(i) * proj * (measure ? (*measure)(i) : 1.0);
    }
    return s;
}

double drag_coefficient(const Eigen::VectorXd& pressure, const Points& normals, const Eigen::VectorXd* measure,
                        double speed, double frontal_area, const Vec3& inlet, double total_area)
{
    require(std::abs(inlet.norm() - 1.0) <= 1e-9, ErrorKind::InvalidInput, "inlet direction must be a unit vector");
    require(speed > 0.0 && frontal_area > 0.0, ErrorKind::InvalidInput, "speed and frontal area must be positive");
    require(pressure.size() > 0, ErrorKind::InvalidInput, "empty pressure field");
    double sum = drag_sum(pressure, normals, inlet, measure);
    if (!measure) sum *= (total_area > 0.0 ? total_area : 1.0) / static_cast<double>(pressure.size());
    return 2.0 / (speed * speed * frontal_area) * sum;
}

double cd_loss(const Eigen::VectorXd& pressure, const Points& normals, const Vec3& inlet, double target,
               const Eigen::VectorXd* measure)
{
    const double r = drag_sum(pressure, normals, inlet, measure) - target;
    return r * r;
}

Eigen::VectorXd cd_loss_gradient(const Eigen::VectorXd& pressure, const Points& normals, const Vec3& inlet,
                                 double target, const Eigen::VectorXd* measure)
{
    const double r = drag_sum(pressure, normals, inlet, measure) - target;
    Eigen::VectorXd g(pressure.size());
    for (Eigen::Index i = 0; i < pressure.size(); ++i) {
        const double proj = normals(i, 0) * inlet(0) + normals(i, 1) * inlet(1) + normals(i, 2) * inlet(2);
        g(i) = 2.0 * r * proj * (measure ? (*measure)(i) : 1.0);
    }
    return g;
}

}  // namespace otgeo

#include "otgeo/latent_mesh.hpp"

#include "otgeo/error.hpp"

#include <cmath>
#include <numbers>

namespace otgeo {

LatentShape parse_latent_shape(const std::string& name)
{
    if (name == "torus") return LatentShape::Torus;
    if (name == "sphere") return LatentShape::Sphere;
    if (name == "plane") return LatentShape::Plane;
    if (name == "hemisphere") return LatentShape::Hemisphere;
    fail(ErrorKind::InvalidConfig, "unknown latent shape '" + name + "'");
}

std::string to_string(LatentShape shape)
{
    switch (shape) {
    case LatentShape::Torus: return "torus";
    case LatentShape::Sphere: return "sphere";
    case LatentShape::Plane: return "plane";
    case LatentShape::Hemisphere: return "hemisphere";
    }
    return "?";
}

std::size_t grid_size_for(std::size_t n1, double alpha)
{
    require(n1 >= 1, ErrorKind::InvalidInput, "grid_size_for needs n1 >= 1");
    require(alpha > 0.0 && std::isfinite(alpha), ErrorKind::InvalidConfig, "alpha must be positive");
    const double target = alpha * static_cast<double>(n1);
    auto m = static_cast<std::size_t>(std::ceil(std::sqrt(target)));
    // Guard against sqrt rounding on perfect squares in either direction.
    while (m > 1 && static_cast<double>((m - 1) * (m - 1)) >= target) --m;
    while (static_cast<double>(m * m) < target) ++m;
    return m;
}

LatentGrid generate_grid(LatentShape shape, std::size_t m, const LatentParams& params)
{
    require(m >= 2, ErrorKind::InvalidConfig, "latent grid side must be >= 2");
    LatentGrid g;
    g.shape = shape;
    g.side = m;
    g.params = params;
    const auto n = static_cast<Eigen::Index>(m * m);
    g.points.resize(n, 3);
    g.normals.resize(n, 3);
    g.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    const double pi = std::numbers::pi;
    const double dm = static_cast<double>(m);

    switch (shape) {
    case LatentShape::Torus: {
        const double R = params.torus_R, r = params.torus_r;
        require(R > r && r > 0.0, ErrorKind::InvalidConfig, "torus requires R > r > 0");
        g.periodic = {true, true};
        for (std::size_t i = 0; i < m; ++i) {
            const double th = 2.0 * pi * static_cast<double>(i) / dm;
            for (std::size_t j = 0; j < m; ++j) {
                const double ph = 2.0 * pi * static_cast<double>(j) / dm;
                const auto k = static_cast<Eigen::Index>(i * m + j);
                const double ring = R + r * std::cos(ph);
                g.points.row(k) << ring * std::cos(th), ring * std::sin(th), r * std::sin(ph);
                g.normals.row(k) << std::cos(ph) * std::cos(th), std::cos(ph) * std::sin(th), std::sin(ph);
            }
        }
        break;
    }
    case LatentShape::Sphere: {
        const double rad = params.sphere_radius;
        require(rad > 0.0, ErrorKind::InvalidConfig, "sphere radius must be positive");
        g.periodic = {false, true};
        for (std::size_t i = 0; i < m; ++i) {
            const double th = pi * (static_cast<double>(i) + 0.5) / dm;
            for (std::size_t j = 0; j < m; ++j) {
                const double ph = 2.0 * pi * static_cast<double>(j) / dm;
                const auto k = static_cast<Eigen::Index>(i * m + j);
                const Vec3 u(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
                g.normals.row(k) = u.transpose();
                g.points.row(k) = rad * u.transpose();
            }
        }
        break;
    }
    case LatentShape::Plane: {
        const double ext = params.plane_extent;
        require(ext > 0.0, ErrorKind::InvalidConfig, "plane extent must be positive");
        g.periodic = {false, false};
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const auto k = static_cast<Eigen::Index>(i * m + j);
                g.points.row(k) << ext * static_cast<double>(i) / (dm - 1.0), ext * static_cast<double>(j) / (dm - 1.0),
                    0.0;
                g.normals.row(k) << 0.0, 0.0, 1.0;
            }
        }
        break;
    }
    case LatentShape::Hemisphere: {
        const double rad = params.sphere_radius;
        require(rad > 0.0, ErrorKind::InvalidConfig, "sphere radius must be positive");
        g.periodic = {false, true};
        // Rows 0..m-2 cover the upper hemisphere; the last row is the flat cap
        // closing the rim, a ring at half radius facing down.
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double ph = 2.0 * pi * static_cast<double>(j) / dm;
                const auto k = static_cast<Eigen::Index>(i * m + j);
                if (i + 1 < m) {
                    const double th = 0.5 * pi * (static_cast<double>(i) + 0.5) / (dm - 1.0);
                    const Vec3 u(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
                    g.normals.row(k) = u.transpose();
                    g.points.row(k) = rad * u.transpose();
                } else {
                    g.points.row(k) << 0.5 * rad * std::cos(ph), 0.5 * rad * std::sin(ph), 0.0;
                    g.normals.row(k) << 0.0, 0.0, -1.0;
                }
            }
        }
        break;
    }
    }
    return g;
}

BoxFit fit_to_box(LatentGrid& grid, const BoundingBox& target)
{
    const BoundingBox src = bounding_box(grid.points);
    const Vec3 se = src.extent(), te = target.extent();
    BoxFit fit;
    double sum = 0.0;
    int count = 0;
    std::array<bool, 3> flat{};
    for (int a = 0; a < 3; ++a) {
        flat[a] = se(a) <= 1e-12 || te(a) <= 1e-12 * std::max(1.0, te.maxCoeff());
        if (!flat[a]) {
            fit.scale(a) = te(a) / se(a);
            sum += fit.scale(a);
            ++count;
        }
    }
    const double fallback = count > 0 ? sum / count : 1.0;
    for (int a = 0; a < 3; ++a)
        if (flat[a]) fit.scale(a) = fallback;
    fit.offset = target.center() - fit.scale.cwiseProduct(src.center());

    for (Eigen::Index k = 0; k < grid.points.rows(); ++k) {
        grid.points.row(k) = (fit.scale.cwiseProduct(grid.points.row(k).transpose()) + fit.offset).transpose();
        Vec3 n = grid.normals.row(k).transpose().cwiseQuotient(fit.scale);
        grid.normals.row(k) = n.normalized().transpose();
    }
    return fit;
}

}  // namespace otgeo

#pragma once

#include "otgeo/geometry.hpp"
#include "otgeo/types.hpp"

#include <array>
#include <cstddef>
#include <string>

namespace otgeo {

enum class LatentShape { Torus, Sphere, Plane, Hemisphere };

LatentShape parse_latent_shape(const std::string& name);
std::string to_string(LatentShape shape);

struct LatentParams {
    double torus_R = 2.0;
    double torus_r = 1.0;
    double sphere_radius = 1.0;
    double plane_extent = 1.0;
};

/// m x m parametric grid embedded in 3D. Point k = i*m + j corresponds to
/// parametric cell (i, j); axis 0 is i.
struct LatentGrid {
    LatentShape shape = LatentShape::Torus;
    std::size_t side = 0;
    LatentParams params;
    Points points;
    Points normals;
    Eigen::VectorXd weights;
    std::array<bool, 2> periodic{false, false};

    std::size_t size() const noexcept { return side * side; }
};

/// m = ceil(sqrt(alpha * n1)).
std::size_t grid_size_for(std::size_t n1, double alpha);

LatentGrid generate_grid(LatentShape shape, std::size_t m, const LatentParams& params = {});

/// Per-axis affine fit of the grid's bounding box onto `target`. Axes where
/// either box is flat reuse the mean scale of the other axes. Normals follow
/// the inverse-transpose of the scaling and are renormalised.
struct BoxFit {
    Vec3 scale = Vec3::Ones();
    Vec3 offset = Vec3::Zero();
};
BoxFit fit_to_box(LatentGrid& grid, const BoundingBox& target);

}  // namespace otgeo

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace otgeo {

using Vec3 = Eigen::Vector3d;

/// n x 3 point set, one point per row, stored contiguously (x, y, z, x, y, z, ...).
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = std::uint32_t;
using IndexList = std::vector<Index>;

/// Squared Euclidean distance with a fixed evaluation order. Everything that
/// compares distances (cost matrices, nearest-neighbour search, brute-force
/// oracles) goes through this so results are bit-identical across call sites.
inline double squared_distance(const double* a, const double* b)
{
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

}  // namespace otgeo

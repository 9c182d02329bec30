#pragma once

#include "otgeo/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace otgeo {

/// Physical surface samples. `weights` is the probability vector attached to the
/// points; `degenerate` marks normals that could not be estimated (zero vector).
struct PointCloud {
    Points points;
    std::optional<Points> normals;
    Eigen::VectorXd weights;
    std::vector<std::uint8_t> degenerate;
    std::string tag;

    std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }
    bool has_normals() const noexcept { return normals.has_value(); }

    /// Throws InvalidInput when an invariant does not hold.
    void validate() const;
};

PointCloud make_cloud(Points points, std::optional<Points> normals = std::nullopt, std::string tag = {});

Eigen::VectorXd uniform_weights(std::size_t n);

// ---------------------------------------------------------------------------
// Readers and writers

enum class CloudFormat { Obj, PlyAscii, Csv, RawF64 };

CloudFormat parse_cloud_format(const std::string& name);
CloudFormat cloud_format_from_extension(const std::filesystem::path& path);

/// Loads points (and normals when the file carries them). Faces are ignored.
/// Weights are always uniform.
PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format);

/// Binary layout: "OTG1", u32 count, u32 flags (bit0 = has normals), u32 reserved,
/// then count*3 little-endian f64 coordinates, then count*3 normals if flagged.
void save_raw_f64(const std::filesystem::path& path, const Points& points, const Points* normals = nullptr);
void save_csv(const std::filesystem::path& path, const PointCloud& cloud);

// ---------------------------------------------------------------------------
// Voxel downsampling

enum class VoxelRule { Centroid, FirstPoint };

struct VoxelConfig {
    double voxel_size = 0.05;
    VoxelRule reduce_rule = VoxelRule::Centroid;
};

/// Points grouped by occupied voxel, groups ordered by first appearance.
struct VoxelPartition {
    std::vector<std::vector<std::size_t>> groups;
};

VoxelPartition voxel_partition(const Points& points, double voxel_size);

/// One point per occupied voxel; weights reset to uniform. Normals, when present,
/// are averaged (centroid) or taken from the representative (first-point).
PointCloud voxel_downsample(const PointCloud& cloud, const VoxelConfig& cfg);

/// Applies the same reduction to per-point values (rows = points).
Eigen::MatrixXd reduce_field(const VoxelPartition& partition, const Eigen::MatrixXd& values, VoxelRule rule);

// ---------------------------------------------------------------------------
// Normals

/// k-NN PCA normals oriented away from the cloud centroid. Collinear
/// neighbourhoods produce a zero normal and set `degenerate[i]`.
PointCloud estimate_normals(const PointCloud& cloud, int k);

// ---------------------------------------------------------------------------
// Bounding boxes

struct BoundingBox {
    Vec3 lo;
    Vec3 hi;

    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return 0.5 * (lo + hi); }
    double diagonal() const { return extent().norm(); }
};

BoundingBox bounding_box(const Points& points);

/// Uniformly rescales into [-1, 1]^3 (largest axis fills the box). Returns the
/// applied scale and offset so that original = rescaled / scale + offset.
struct Rescale {
    double scale = 1.0;
    Vec3 offset = Vec3::Zero();
};
Rescale rescale_to_unit_box(PointCloud& cloud);

}  // namespace otgeo

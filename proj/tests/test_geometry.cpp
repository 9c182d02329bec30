#include "oracles.hpp"

#include "otgeo/error.hpp"
#include "otgeo/geometry.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <tuple>

using namespace otgeo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "otgeo_test_geometry";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream out(p);
    out << s;
}

bool throws_kind(ErrorKind kind, const std::function<void()>& fn, std::string* msg = nullptr)
{
    try {
        fn();
    } catch (const Error& e) {
        if (msg) *msg = e.what();
        return e.kind() == kind;
    }
    return false;
}

}  // namespace

TEST_CASE("obj reader keeps vertices and matching normals")
{
    const auto p = scratch("tri.obj");
    write_text(p, "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvn 0 0 1\nvn 0 0 1\nf 1 2 3\n");
    const PointCloud c = load_point_cloud(p, CloudFormat::Obj);
    CHECK(c.size() == 3);
    REQUIRE(c.has_normals());
    CHECK((*c.normals)(1, 2) == 1.0);
    CHECK(c.points(1, 0) == 1.0);
    CHECK(c.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ascii ply with normals, binary rejected, errors carry line numbers")
{
    const auto p = scratch("a.ply");
    write_text(p, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
                  "property float nx\nproperty float ny\nproperty float nz\nend_header\n"
                  "0 0 0 1 0 0\n1 2 3 0 1 0\n");
    const PointCloud c = load_point_cloud(p, CloudFormat::PlyAscii);
    CHECK(c.size() == 2);
    CHECK(c.points(1, 2) == 3.0);
    CHECK((*c.normals)(1, 1) == 1.0);

    const auto b = scratch("b.ply");
    write_text(b, "ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nend_header\n");
    CHECK(throws_kind(ErrorKind::Format, [&] { load_point_cloud(b, CloudFormat::PlyAscii); }));

    const auto bad = scratch("bad.ply");
    write_text(bad, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
                    "end_header\n0 0 0\n1 zz 3\n");
    std::string msg;
    CHECK(throws_kind(ErrorKind::Format, [&] { load_point_cloud(bad, CloudFormat::PlyAscii); }, &msg));
    CHECK(msg.find(":9:") != std::string::npos);
}

TEST_CASE("csv and raw f64 round trips are exact")
{
    std::mt19937_64 rng(1);
    Points pts = oracle::random_points(17, rng);
    Points nrm = oracle::random_points(17, rng);
    for (Eigen::Index i = 0; i < nrm.rows(); ++i) nrm.row(i).normalize();
    const PointCloud c = make_cloud(pts, nrm, "c");

    save_raw_f64(scratch("c.otg"), pts, &nrm);
    const PointCloud r = load_point_cloud(scratch("c.otg"), CloudFormat::RawF64);
    CHECK(r.points == pts);
    CHECK((*r.normals - nrm).cwiseAbs().maxCoeff() < 1e-15);  // readers renormalise

    save_csv(scratch("c.csv"), c);
    const PointCloud s = load_point_cloud(scratch("c.csv"), CloudFormat::Csv);
    CHECK(s.points == pts);
    CHECK((*s.normals - nrm).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("raw reader reports truncation")
{
    const auto p = scratch("short.otg");
    {
        std::ofstream out(p, std::ios::binary);
        const char head[16] = {'O', 'T', 'G', '1', 5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
        out.write(head, 16);
        const double x = 1.0;
        out.write(reinterpret_cast<const char*>(&x), sizeof(x));
    }
    CHECK(throws_kind(ErrorKind::Format, [&] { load_point_cloud(p, CloudFormat::RawF64); }));
}

TEST_CASE("voxel partition matches direct floor bucketing")
{
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 5; ++rep) {
        const Points pts = oracle::random_points(400, rng, 0.5);
        const double h = 0.1 + 0.05 * rep;
        std::map<std::tuple<long, long, long>, std::vector<Eigen::Index>> buckets;
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            buckets[{static_cast<long>(std::floor(pts(i, 0) / h)), static_cast<long>(std::floor(pts(i, 1) / h)),
                     static_cast<long>(std::floor(pts(i, 2) / h))}]
                .push_back(i);

        const PointCloud out = voxel_downsample(make_cloud(pts), VoxelConfig{h, VoxelRule::Centroid});
        REQUIRE(out.size() == buckets.size());
        CHECK(out.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));

        // Every centroid equals the mean of exactly one bucket.
        std::vector<Eigen::RowVector3d> means;
        for (const auto& [key, idx] : buckets) {
            Eigen::RowVector3d m = Eigen::RowVector3d::Zero();
            for (auto i : idx) m += pts.row(i);
            means.push_back(m / static_cast<double>(idx.size()));
        }
        for (Eigen::Index r = 0; r < out.points.rows(); ++r) {
            double best = 1e9;
            for (const auto& m : means) best = std::min(best, (out.points.row(r) - m).norm());
            CHECK(best < 1e-12);
        }
    }
}

TEST_CASE("voxel downsampling is idempotent and first-point keeps a subset")
{
    std::mt19937_64 rng(9);
    const PointCloud c = make_cloud(oracle::random_points(500, rng));
    for (const auto rule : {VoxelRule::Centroid, VoxelRule::FirstPoint}) {
        const PointCloud once = voxel_downsample(c, VoxelConfig{0.3, rule});
        const PointCloud twice = voxel_downsample(once, VoxelConfig{0.3, rule});
        CHECK(twice.size() == once.size());
    }
    const PointCloud fp = voxel_downsample(c, VoxelConfig{0.3, VoxelRule::FirstPoint});
    for (Eigen::Index r = 0; r < fp.points.rows(); ++r) {
        const auto j = oracle::nearest(c.points, fp.points, r);
        CHECK((c.points.row(j) - fp.points.row(r)).norm() == 0.0);
    }
}

TEST_CASE("reduce_field averages per voxel")
{
    Points pts(4, 3);
    pts << 0.01, 0, 0, 0.02, 0, 0, 0.51, 0, 0, 0.03, 0, 0;
    Eigen::MatrixXd v(4, 1);
    v << 1, 2, 10, 3;
    const VoxelPartition part = voxel_partition(pts, 0.5);
    REQUIRE(part.groups.size() == 2);
    const Eigen::MatrixXd r = reduce_field(part, v, VoxelRule::Centroid);
    CHECK(r(0, 0) == doctest::Approx(2.0));
    CHECK(r(1, 0) == 10.0);
    CHECK(reduce_field(part, v, VoxelRule::FirstPoint)(0, 0) == 1.0);
}

TEST_CASE("estimated normals on a sphere point outward and are unit")
{
    Points pts(600, 3);
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < 600; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / 600.0;
        const double r = std::sqrt(1.0 - z * z);
        pts.row(i) << r * std::cos(golden * i), r * std::sin(golden * i), z;
    }
    const PointCloud c = estimate_normals(make_cloud(pts), 12);
    REQUIRE(c.has_normals());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        CHECK(std::abs(c.normals->row(i).norm() - 1.0) < 1e-9);
        CHECK(c.normals->row(i).dot(pts.row(i)) > 0.95);
    }
}

TEST_CASE("collinear neighbourhoods are flagged degenerate")
{
    Points pts(10, 3);
    for (int i = 0; i < 10; ++i) pts.row(i) << i, 0, 0;
    const PointCloud c = estimate_normals(make_cloud(pts), 4);
    for (int i = 0; i < 10; ++i) {
        CHECK(c.degenerate[static_cast<std::size_t>(i)] == 1);
        CHECK(c.normals->row(i).norm() == 0.0);
    }
}

TEST_CASE("validate rejects bad weights and NaN")
{
    PointCloud c = make_cloud(Points::Zero(3, 3));
    c.weights(0) = 0.5;
    CHECK(throws_kind(ErrorKind::InvalidInput, [&] { c.validate(); }));
    PointCloud d = make_cloud(Points::Zero(3, 3));
    d.points(1, 1) = std::nan("");
    CHECK(throws_kind(ErrorKind::InvalidInput, [&] { d.validate(); }));
}

TEST_CASE("unit box rescale is invertible")
{
    std::mt19937_64 rng(3);
    const Points pts = oracle::random_points(50, rng, 4.0);
    PointCloud c = make_cloud(pts);
    const Rescale r = rescale_to_unit_box(c);
    const BoundingBox b = bounding_box(c.points);
    CHECK(b.extent().maxCoeff() == doctest::Approx(2.0));
    CHECK(b.lo.minCoeff() >= -1.0 - 1e-12);
    CHECK(b.hi.maxCoeff() <= 1.0 + 1e-12);
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        CHECK((c.points.row(i).transpose() / r.scale + r.offset - pts.row(i).transpose()).norm() < 1e-12);
}

#include "oracles.hpp"

#include "otgeo/coupling.hpp"
#include "otgeo/error.hpp"

#include <doctest.h>

using namespace otgeo;

TEST_CASE("encoder and decoder indices equal a brute-force scan")
{
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 4; ++rep) {
        const Points transported = oracle::random_points(120, rng);
        const PointCloud cloud = make_cloud(oracle::random_points(90, rng));
        for (int k : {1, 3}) {
            const IndexMap map = build_index_map(transported, cloud, k, k);
            map.validate();
            for (Eigen::Index l = 0; l < transported.rows(); ++l) {
                const auto ref = oracle::k_nearest(cloud.points, transported, l, k);
                for (int t = 0; t < k; ++t) CHECK(map.encoder[static_cast<std::size_t>(l * k + t)] == ref[static_cast<std::size_t>(t)]);
            }
            for (Eigen::Index p = 0; p < cloud.points.rows(); ++p) {
                const auto ref = oracle::k_nearest(transported, cloud.points, p, k);
                for (int t = 0; t < k; ++t) CHECK(map.decoder[static_cast<std::size_t>(p * k + t)] == ref[static_cast<std::size_t>(t)]);
            }
        }
    }
}

TEST_CASE("exact duplicates resolve to the lowest index")
{
    Points t(3, 3);
    t << 0, 0, 0, 1, 0, 0, 0, 0, 0;
    const PointCloud cloud = make_cloud((Points(1, 3) << 0.1, 0, 0).finished());
    const IndexList dec = decoder_indices(t, cloud, 1);
    CHECK(dec[0] == 0);
}

TEST_CASE("decode(encode(a)) is the identity when grid and cloud coincide")
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    const Points x = oracle::random_points(64, rng);
    const PointCloud cloud = make_cloud(x);
    const IndexMap map = build_index_map(x, cloud);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::MatrixXd a(64, 2);
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
        CHECK(decode_solution(encode_function(a, map), map) == a);
    }
}

TEST_CASE("multi-mean decoding averages the k nearest latent values")
{
    std::mt19937_64 rng(3);
    const Points t = oracle::random_points(30, rng);
    const PointCloud cloud = make_cloud(oracle::random_points(20, rng));
    const IndexMap map = build_index_map(t, cloud, 2, 4);
    Eigen::MatrixXd latent(30, 1);
    for (Eigen::Index i = 0; i < 30; ++i) latent(i, 0) = static_cast<double>(i * i);
    const Eigen::MatrixXd out = decode_solution(latent, map, TransferMode::MultiMean);
    for (Eigen::Index p = 0; p < 20; ++p) {
        const auto nn = oracle::k_nearest(t, cloud.points, p, 4);
        double ref = 0.0;
        for (auto i : nn) ref += latent(i, 0);
        CHECK(out(p, 0) == doctest::Approx(ref / 4.0).epsilon(1e-15));
    }
    const Eigen::MatrixXd single = decode_solution(latent, map, TransferMode::Single);
    for (Eigen::Index p = 0; p < 20; ++p) CHECK(single(p, 0) == latent(oracle::nearest(t, cloud.points, p), 0));
}

TEST_CASE("feature layouts per normal mode")
{
    LatentGrid grid = generate_grid(LatentShape::Torus, 4, LatentParams{});
    std::mt19937_64 rng(4);
    Points pts = oracle::random_points(10, rng);
    Points nrm = oracle::random_points(10, rng);
    for (Eigen::Index i = 0; i < 10; ++i) nrm.row(i).normalize();
    const PointCloud cloud = make_cloud(pts, nrm);
    IndexList E(16);
    for (std::size_t l = 0; l < 16; ++l) E[l] = static_cast<Index>((l * 7) % 10);

    CHECK(feature_channels(NormalFeatures::None) == 6);
    CHECK(feature_channels(NormalFeatures::Car) == 9);
    CHECK(feature_channels(NormalFeatures::Concat) == 12);
    CHECK(feature_channels(NormalFeatures::Cross) == 9);
    for (const auto mode : {NormalFeatures::None, NormalFeatures::Car, NormalFeatures::Concat, NormalFeatures::Cross}) {
        const LatentFeatures f = assemble_features(grid, cloud, E, mode);
        REQUIRE(f.tensor.cols() == feature_channels(mode));
        for (Eigen::Index l = 0; l < 16; ++l) {
            const auto e = static_cast<Eigen::Index>(E[static_cast<std::size_t>(l)]);
            CHECK(f.tensor.row(l).head(3) == grid.points.row(l));
            CHECK(f.tensor.row(l).segment(3, 3) == pts.row(e));
            const Vec3 h = grid.normals.row(l), n = nrm.row(e);
            if (mode == NormalFeatures::Car) CHECK(f.tensor.row(l).tail(3) == nrm.row(e));
            if (mode == NormalFeatures::Concat) {
                CHECK(f.tensor.row(l).segment(6, 3) == grid.normals.row(l));
                CHECK(f.tensor.row(l).tail(3) == nrm.row(e));
            }
            if (mode == NormalFeatures::Cross) {
                const Vec3 c(h.y() * n.z() - h.z() * n.y(), h.z() * n.x() - h.x() * n.z(), h.x() * n.y() - h.y() * n.x());
                CHECK((f.tensor.row(l).tail(3).transpose() - c).norm() < 1e-15);
            }
        }
    }
    CHECK_THROWS_AS(assemble_features(grid, make_cloud(pts), E, NormalFeatures::Cross), Error);
}

TEST_CASE("index map validation catches out-of-range entries")
{
    IndexMap m;
    m.n1 = 2;
    m.n2 = 2;
    m.encoder = {0, 5};
    m.decoder = {0, 1};
    CHECK_THROWS_AS(m.validate(), Error);
    CHECK(parse_transfer_mode("multi-mean") == TransferMode::MultiMean);
}

#include "otgeo/coupling.hpp"

#include "otgeo/error.hpp"
#include "otgeo/parallel.hpp"
#include "otgeo/spatial_index.hpp"

namespace otgeo {

namespace {

IndexList knn_lists(const Points& data, const Points& queries, int k)
{
    require(data.rows() > 0 && queries.rows() > 0, ErrorKind::InvalidInput, "index maps need nonempty point sets");
    require(k >= 1, ErrorKind::InvalidConfig, "neighbour count must be >= 1");
    require(static_cast<Eigen::Index>(k) <= data.rows(), ErrorKind::InvalidConfig,
            "neighbour count " + std::to_string(k) + " exceeds the point count " + std::to_string(data.rows()));
    const KdTree tree(data);
    const auto ku = static_cast<std::size_t>(k);
    IndexList out(static_cast<std::size_t>(queries.rows()) * ku);
    parallel_for(0, static_cast<std::size_t>(queries.rows()), [&](std::size_t q) {
        const double* x = queries.row(static_cast<Eigen::Index>(q)).data();
        if (ku == 1) {
            out[q] = tree.nearest(x);
            return;
        }
        const IndexList nn = tree.k_nearest(x, ku);
        std::copy(nn.begin(), nn.end(), out.begin() + static_cast<std::ptrdiff_t>(q * ku));
    });
    return out;
}

}  // namespace

IndexList IndexMap::encoder_first() const
{
    IndexList e(n2);
    for (std::size_t l = 0; l < n2; ++l) e[l] = encoder[l * static_cast<std::size_t>(k_enc)];
    return e;
}

void IndexMap::validate() const
{
    require(k_enc >= 1 && k_dec >= 1, ErrorKind::InvalidInput, "index map neighbour counts must be >= 1");
    require(encoder.size() == n2 * static_cast<std::size_t>(k_enc), ErrorKind::InvalidInput,
            "encoder length does not match n2 * k_enc");
    require(decoder.size() == n1 * static_cast<std::size_t>(k_dec), ErrorKind::InvalidInput,
            "decoder length does not match n1 * k_dec");
    for (Index e : encoder) require(e < n1, ErrorKind::InvalidInput, "encoder index out of range");
    for (Index d : decoder) require(d < n2, ErrorKind::InvalidInput, "decoder index out of range");
}

IndexList encoder_indices(const Points& transported, const PointCloud& cloud, int k)
{
    return knn_lists(cloud.points, transported, k);
}

IndexList decoder_indices(const Points& transported, const PointCloud& cloud, int k)
{
    return knn_lists(transported, cloud.points, k);
}

IndexMap build_index_map(const Points& transported, const PointCloud& cloud, int k_enc, int k_dec)
{
    IndexMap map;
    map.k_enc = k_enc;
    map.k_dec = k_dec;
    map.n1 = cloud.size();
    map.n2 = static_cast<std::size_t>(transported.rows());
    map.encoder = encoder_indices(transported, cloud, k_enc);
    map.decoder = decoder_indices(transported, cloud, k_dec);
    return map;
}

// ---------------------------------------------------------------------------

NormalFeatures parse_normal_features(const std::string& name)
{
    if (name == "none") return NormalFeatures::None;
    if (name == "car") return NormalFeatures::Car;
    if (name == "concat") return NormalFeatures::Concat;
    if (name == "cross") return NormalFeatures::Cross;
    fail(ErrorKind::InvalidConfig, "unknown normal-feature mode '" + name + "'");
}

std::string to_string(NormalFeatures mode)
{
    switch (mode) {
    case NormalFeatures::None: return "none";
    case NormalFeatures::Car: return "car";
    case NormalFeatures::Concat: return "concat";
    case NormalFeatures::Cross: return "cross";
    }
    return "?";
}

int feature_channels(NormalFeatures mode)
{
    switch (mode) {
    case NormalFeatures::None: return 6;
    case NormalFeatures::Car: return 9;
    case NormalFeatures::Concat: return 12;
    case NormalFeatures::Cross: return 9;
    }
    return 0;
}

LatentFeatures assemble_features(const LatentGrid& grid, const PointCloud& cloud, const IndexList& E,
                                 NormalFeatures mode)
{
    const auto n2 = static_cast<Eigen::Index>(grid.size());
    require(static_cast<Eigen::Index>(E.size()) == n2, ErrorKind::InvalidInput,
            "encoder length does not match the latent grid");
    for (Index e : E) require(e < cloud.size(), ErrorKind::InvalidInput, "encoder index out of range");
    if (mode != NormalFeatures::None)
        require(cloud.has_normals(), ErrorKind::InvalidInput,
                "cloud '" + cloud.tag + "' has no normals; run estimate_normals first");

    LatentFeatures out;
    out.side = grid.side;
    out.mode = mode;
    out.tensor.resize(n2, feature_channels(mode));
    for (Eigen::Index l = 0; l < n2; ++l) {
        const Eigen::Index e = E[static_cast<std::size_t>(l)];
        for (int a = 0; a < 3; ++a) {
            out.tensor(l, a) = grid.points(l, a);
            out.tensor(l, 3 + a) = cloud.points(e, a);
        }
        if (mode == NormalFeatures::None) continue;
        const Vec3 h = grid.normals.row(l).transpose();
        const Vec3 nrm = cloud.normals->row(e).transpose();
        switch (mode) {
        case NormalFeatures::Car:
            for (int a = 0; a < 3; ++a) out.tensor(l, 6 + a) = nrm(a);
            break;
        case NormalFeatures::Concat:
            for (int a = 0; a < 3; ++a) {
                out.tensor(l, 6 + a) = h(a);
                out.tensor(l, 9 + a) = nrm(a);
            }
            break;
        case NormalFeatures::Cross: {
            const Vec3 c = h.cross(nrm);
            for (int a = 0; a < 3; ++a) out.tensor(l, 6 + a) = c(a);
            break;
        }
        case NormalFeatures::None: break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

TransferMode parse_transfer_mode(const std::string& name)
{
    if (name == "single") return TransferMode::Single;
    if (name == "multi-mean") return TransferMode::MultiMean;
    fail(ErrorKind::InvalidConfig, "unknown encode/decode mode '" + name + "'");
}

std::string to_string(TransferMode mode)
{
    return mode == TransferMode::Single ? "single" : "multi-mean";
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& src, const IndexList& lists, std::size_t count, int k,
                       TransferMode mode)
{
    const auto ku = static_cast<std::size_t>(k);
    const std::size_t used = mode == TransferMode::Single ? 1 : ku;
    Eigen::MatrixXd out(static_cast<Eigen::Index>(count), src.cols());
    for (std::size_t p = 0; p < count; ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        if (used == 1) {
            out.row(row) = src.row(lists[p * ku]);
            continue;
        }
        out.row(row) = src.row(lists[p * ku]);
        for (std::size_t t = 1; t < used; ++t) out.row(row) += src.row(lists[p * ku + t]);
        out.row(row) /= static_cast<double>(used);
    }
    return out;
}

}  // namespace

Eigen::MatrixXd decode_solution(const Eigen::MatrixXd& latent, const IndexMap& map, TransferMode mode)
{
    require(static_cast<std::size_t>(latent.rows()) == map.n2, ErrorKind::InvalidInput,
            "latent field has " + std::to_string(latent.rows()) + " rows, index map expects " +
                std::to_string(map.n2));
    require(map.decoder.size() == map.n1 * static_cast<std::size_t>(map.k_dec), ErrorKind::InvalidInput,
            "decoder length does not match n1 * k_dec");
    return gather(latent, map.decoder, map.n1, map.k_dec, mode);
}

Eigen::MatrixXd encode_function(const Eigen::MatrixXd& physical, const IndexMap& map, TransferMode mode)
{
    require(static_cast<std::size_t>(physical.rows()) == map.n1, ErrorKind::InvalidInput,
            "physical field has " + std::to_string(physical.rows()) + " rows, index map expects " +
                std::to_string(map.n1));
    require(map.encoder.size() == map.n2 * static_cast<std::size_t>(map.k_enc), ErrorKind::InvalidInput,
            "encoder length does not match n2 * k_enc");
    return gather(physical, map.encoder, map.n2, map.k_enc, mode);
}

}  // namespace otgeo

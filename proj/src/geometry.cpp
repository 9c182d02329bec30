#include "otgeo/geometry.hpp"

#include "otgeo/error.hpp"
#include "otgeo/spatial_index.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace otgeo {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void PointCloud::validate() const
{
    const auto n = points.rows();
    require(n >= 1, ErrorKind::InvalidInput, "point cloud '" + tag + "' is empty");
    require(points.allFinite(), ErrorKind::InvalidInput, "point cloud '" + tag + "' has NaN/Inf coordinates");
    require(weights.size() == n, ErrorKind::InvalidInput, "weights length does not match point count");
    require((weights.array() >= 0.0).all(), ErrorKind::InvalidInput, "negative weight");
    require(std::abs(weights.sum() - 1.0) <= 1e-12, ErrorKind::InvalidInput, "weights do not sum to 1");
    if (normals) {
        require(normals->rows() == n, ErrorKind::InvalidInput, "normals length does not match point count");
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool flagged = !degenerate.empty() && degenerate[static_cast<std::size_t>(i)];
            const double len = normals->row(i).norm();
            if (flagged) continue;
            require(std::abs(len - 1.0) <= 1e-9, ErrorKind::InvalidInput,
                    "normal " + std::to_string(i) + " is not unit length");
        }
    }
}

Eigen::VectorXd uniform_weights(std::size_t n)
{
    require(n >= 1, ErrorKind::InvalidInput, "uniform_weights needs n >= 1");
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
}

PointCloud make_cloud(Points points, std::optional<Points> normals, std::string tag)
{
    PointCloud cloud;
    cloud.points = std::move(points);
    cloud.normals = std::move(normals);
    cloud.tag = std::move(tag);
    require(cloud.points.rows() >= 1, ErrorKind::InvalidInput, "point cloud '" + cloud.tag + "' is empty");
    cloud.weights = uniform_weights(cloud.size());
    cloud.validate();
    return cloud;
}

// ---------------------------------------------------------------------------
// Readers

CloudFormat parse_cloud_format(const std::string& name)
{
    if (name == "obj") return CloudFormat::Obj;
    if (name == "ply" || name == "ply-ascii") return CloudFormat::PlyAscii;
    if (name == "csv") return CloudFormat::Csv;
    if (name == "raw" || name == "raw-f64" || name == "otg") return CloudFormat::RawF64;
    fail(ErrorKind::InvalidInput, "unknown point cloud format '" + name + "'");
}

CloudFormat cloud_format_from_extension(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") return CloudFormat::Obj;
    if (ext == ".ply") return CloudFormat::PlyAscii;
    if (ext == ".csv" || ext == ".txt") return CloudFormat::Csv;
    if (ext == ".otg" || ext == ".bin" || ext == ".f64") return CloudFormat::RawF64;
    fail(ErrorKind::InvalidInput, "cannot infer point cloud format from '" + path.string() + "'");
}

namespace {

[[noreturn]] void format_error(const std::filesystem::path& path, std::size_t line, const std::string& what)
{
    fail(ErrorKind::Format, path.string() + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_text(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open '" + path.string() + "'");
    return in;
}

Points to_points(const std::vector<double>& xyz)
{
    Points p(static_cast<Eigen::Index>(xyz.size() / 3), 3);
    std::memcpy(p.data(), xyz.data(), xyz.size() * sizeof(double));
    return p;
}

std::optional<Points> normalized(const std::vector<double>& nxyz, std::size_t n)
{
    if (nxyz.empty() || nxyz.size() != 3 * n) return std::nullopt;
    Points normals = to_points(nxyz);
    for (Eigen::Index i = 0; i < normals.rows(); ++i) {
        const double len = normals.row(i).norm();
        if (len > 0.0) normals.row(i) /= len;
    }
    return normals;
}

bool parse_doubles(const std::string& text, char sep, std::vector<double>& out)
{
    out.clear();
    std::string token;
    std::istringstream ss(text);
    while (std::getline(ss, token, sep)) {
        const auto first = token.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = token.find_last_not_of(" \t\r");
        token = token.substr(first, last - first + 1);
        std::size_t used = 0;
        try {
            out.push_back(std::stod(token, &used));
        } catch (...) {
            return false;
        }
        if (used != token.size()) return false;
    }
    return true;
}

PointCloud read_obj(const std::filesystem::path& path)
{
    auto in = open_text(path);
    std::vector<double> xyz, nxyz;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string kind;
        if (!(ss >> kind) || kind[0] == '#') continue;
        if (kind == "v" || kind == "vn") {
            double a, b, c;
            if (!(ss >> a >> b >> c)) format_error(path, lineno, "expected three coordinates after '" + kind + "'");
            auto& dst = kind == "v" ? xyz : nxyz;
            dst.insert(dst.end(), {a, b, c});
        }
    }
    require(!xyz.empty(), ErrorKind::InvalidInput, "'" + path.string() + "' contains no vertices");
    const std::size_t n = xyz.size() / 3;
    return make_cloud(to_points(xyz), normalized(nxyz, n), path.stem().string());
}

PointCloud read_ply(const std::filesystem::path& path)
{
    auto in = open_text(path);
    std::string line;
    std::size_t lineno = 0;
    auto next = [&](std::string& out) {
        if (!std::getline(in, out)) return false;
        ++lineno;
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return true;
    };

    if (!next(line) || line != "ply") format_error(path, 1, "missing 'ply' magic");
    std::size_t vertex_count = 0;
    bool in_vertex = false;
    bool header_done = false;
    bool seen_vertex = false;
    std::vector<std::string> props;
    while (next(line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii") format_error(path, lineno, "only ASCII PLY is supported (got '" + fmt + "')");
        } else if (word == "element") {
            std::string name;
            std::size_t count = 0;
            if (!(ss >> name >> count)) format_error(path, lineno, "malformed element line");
            in_vertex = name == "vertex";
            if (in_vertex) {
                vertex_count = count;
                seen_vertex = true;
            }
        } else if (word == "property") {
            if (!in_vertex) continue;
            std::string type, name;
            ss >> type;
            if (type == "list") format_error(path, lineno, "list properties on vertices are not supported");
            if (!(ss >> name)) format_error(path, lineno, "malformed property line");
            props.push_back(name);
        } else if (word == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) format_error(path, lineno, "truncated header (no end_header)");
    if (!seen_vertex) format_error(path, lineno, "header declares no vertex element");

    auto find = [&](const std::string& name) -> int {
        const auto it = std::find(props.begin(), props.end(), name);
        return it == props.end() ? -1 : static_cast<int>(it - props.begin());
    };
    const int ix = find("x"), iy = find("y"), iz = find("z");
    const int inx = find("nx"), iny = find("ny"), inz = find("nz");
    if (ix < 0 || iy < 0 || iz < 0) format_error(path, lineno, "vertex element lacks x/y/z");
    const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;

    std::vector<double> xyz, nxyz, values;
    xyz.reserve(3 * vertex_count);
    for (std::size_t v = 0; v < vertex_count; ++v) {
        if (!next(line)) format_error(path, lineno, "file ends after " + std::to_string(v) + " of " +
                                                        std::to_string(vertex_count) + " vertices");
        std::istringstream ss(line);
        values.clear();
        double x;
        while (ss >> x) values.push_back(x);
        if (values.size() < props.size()) format_error(path, lineno, "vertex row has too few values");
        xyz.insert(xyz.end(), {values[ix], values[iy], values[iz]});
        if (has_normals) nxyz.insert(nxyz.end(), {values[inx], values[iny], values[inz]});
    }
    require(vertex_count > 0, ErrorKind::InvalidInput, "'" + path.string() + "' contains no vertices");
    return make_cloud(to_points(xyz), normalized(nxyz, vertex_count), path.stem().string());
}

PointCloud read_csv(const std::filesystem::path& path)
{
    auto in = open_text(path);
    std::vector<double> xyz, nxyz, row;
    std::string line;
    std::size_t lineno = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        if (!parse_doubles(line, ',', row)) {
            if (columns == 0 && xyz.empty() && std::isalpha(static_cast<unsigned char>(line[first]))) continue;
            format_error(path, lineno, "non-numeric value");
        }
        if (row.size() != 3 && row.size() != 6) format_error(path, lineno, "expected 3 or 6 columns");
        if (columns == 0) columns = row.size();
        if (row.size() != columns) format_error(path, lineno, "inconsistent column count");
        xyz.insert(xyz.end(), row.begin(), row.begin() + 3);
        if (columns == 6) nxyz.insert(nxyz.end(), row.begin() + 3, row.end());
    }
    require(!xyz.empty(), ErrorKind::InvalidInput, "'" + path.string() + "' contains no points");
    return make_cloud(to_points(xyz), normalized(nxyz, xyz.size() / 3), path.stem().string());
}

PointCloud read_raw(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open '" + path.string() + "'");
    char magic[4];
    std::uint32_t header[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || std::memcmp(magic, "OTG1", 4) != 0)
        fail(ErrorKind::Format, path.string() + ": offset 0: bad OTG1 header");
    const std::size_t n = header[0];
    const bool has_normals = (header[1] & 1u) != 0;
    require(n > 0, ErrorKind::InvalidInput, "'" + path.string() + "' contains no points");
    std::vector<double> xyz(3 * n), nxyz;
    in.read(reinterpret_cast<char*>(xyz.data()), static_cast<std::streamsize>(xyz.size() * sizeof(double)));
    if (!in) fail(ErrorKind::Format, path.string() + ": offset 16: truncated coordinate block");
    if (has_normals) {
        nxyz.resize(3 * n);
        in.read(reinterpret_cast<char*>(nxyz.data()), static_cast<std::streamsize>(nxyz.size() * sizeof(double)));
        if (!in)
            fail(ErrorKind::Format,
                 path.string() + ": offset " + std::to_string(16 + 24 * n) + ": truncated normal block");
    }
    return make_cloud(to_points(xyz), normalized(nxyz, n), path.stem().string());
}

}  // namespace

PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format)
{
    require(std::filesystem::exists(path), ErrorKind::Io, "no such file '" + path.string() + "'");
    switch (format) {
    case CloudFormat::Obj: return read_obj(path);
    case CloudFormat::PlyAscii: return read_ply(path);
    case CloudFormat::Csv: return read_csv(path);
    case CloudFormat::RawF64: return read_raw(path);
    }
    fail(ErrorKind::InvalidInput, "unhandled format");
}

void save_raw_f64(const std::filesystem::path& path, const Points& points, const Points* normals)
{
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
    const std::uint32_t header[3] = {static_cast<std::uint32_t>(points.rows()), normals ? 1u : 0u, 0u};
    out.write("OTG1", 4);
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(points.data()),
              static_cast<std::streamsize>(points.size() * sizeof(double)));
    if (normals) {
        require(normals->rows() == points.rows(), ErrorKind::InvalidInput, "normals/points length mismatch");
        out.write(reinterpret_cast<const char*>(normals->data()),
                  static_cast<std::streamsize>(normals->size() * sizeof(double)));
    }
    require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void save_csv(const std::filesystem::path& path, const PointCloud& cloud)
{
    std::ofstream out(path);
    require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
    out.precision(17);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        out << cloud.points(i, 0) << ',' << cloud.points(i, 1) << ',' << cloud.points(i, 2);
        if (cloud.normals)
            out << ',' << (*cloud.normals)(i, 0) << ',' << (*cloud.normals)(i, 1) << ',' << (*cloud.normals)(i, 2);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Voxels

namespace {

using VoxelKey = std::tuple<std::int64_t, std::int64_t, std::int64_t>;

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const noexcept
    {
        const auto [a, b, c] = k;
        std::uint64_t h = 1469598103934665603ull;
        for (std::int64_t v : {a, b, c}) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

std::int64_t cell(double x, double r) { return static_cast<std::int64_t>(std::floor(x / r)); }

// Keeps a reduced coordinate inside the voxel its members came from; rounding in
// the mean can otherwise land exactly on a neighbouring cell boundary.
double clamp_to_cell(double x, std::int64_t c, double r)
{
    for (int guard = 0; guard < 64 && cell(x, r) != c; ++guard)
        x = std::nextafter(x, cell(x, r) < c ? HUGE_VAL : -HUGE_VAL);
    return x;
}

}  // namespace

VoxelPartition voxel_partition(const Points& points, double voxel_size)
{
    require(voxel_size > 0.0 && std::isfinite(voxel_size), ErrorKind::InvalidConfig,
            "voxel_size must be positive");
    VoxelPartition part;
    std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const VoxelKey key{cell(points(i, 0), voxel_size), cell(points(i, 1), voxel_size),
                           cell(points(i, 2), voxel_size)};
        auto [it, inserted] = slot.try_emplace(key, part.groups.size());
        if (inserted) part.groups.emplace_back();
        part.groups[it->second].push_back(static_cast<std::size_t>(i));
    }
    return part;
}

Eigen::MatrixXd reduce_field(const VoxelPartition& partition, const Eigen::MatrixXd& values, VoxelRule rule)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(partition.groups.size()), values.cols());
    for (std::size_t g = 0; g < partition.groups.size(); ++g) {
        const auto& members = partition.groups[g];
        const auto row = static_cast<Eigen::Index>(g);
        if (rule == VoxelRule::FirstPoint) {
            out.row(row) = values.row(static_cast<Eigen::Index>(members.front()));
            continue;
        }
        out.row(row).setZero();
        for (std::size_t m : members) out.row(row) += values.row(static_cast<Eigen::Index>(m));
        out.row(row) /= static_cast<double>(members.size());
    }
    return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, const VoxelConfig& cfg)
{
    cloud.validate();
    const auto part = voxel_partition(cloud.points, cfg.voxel_size);
    const Eigen::MatrixXd pts = reduce_field(part, cloud.points, cfg.reduce_rule);

    PointCloud out;
    out.tag = cloud.tag;
    out.points = pts;
    if (cfg.reduce_rule == VoxelRule::Centroid) {
        for (std::size_t g = 0; g < part.groups.size(); ++g) {
            const auto& first = cloud.points.row(static_cast<Eigen::Index>(part.groups[g].front()));
            for (int a = 0; a < 3; ++a) {
                auto& x = out.points(static_cast<Eigen::Index>(g), a);
                x = clamp_to_cell(x, cell(first(a), cfg.voxel_size), cfg.voxel_size);
            }
        }
    }
    if (cloud.normals) {
        Points n = reduce_field(part, *cloud.normals, cfg.reduce_rule);
        out.degenerate.assign(part.groups.size(), 0);
        for (Eigen::Index i = 0; i < n.rows(); ++i) {
            const double len = n.row(i).norm();
            if (len > 1e-12) n.row(i) /= len;
            else {
                n.row(i).setZero();
                out.degenerate[static_cast<std::size_t>(i)] = 1;
            }
        }
        out.normals = std::move(n);
    }
    out.weights = uniform_weights(out.size());
    return out;
}

// ---------------------------------------------------------------------------
// Normals

PointCloud estimate_normals(const PointCloud& cloud, int k)
{
    cloud.validate();
    require(k >= 3, ErrorKind::InvalidConfig, "estimate_normals needs k >= 3");
    require(static_cast<std::size_t>(k) < cloud.size(), ErrorKind::InvalidConfig,
            "estimate_normals needs k < point count (k=" + std::to_string(k) +
                ", n=" + std::to_string(cloud.size()) + ")");

    const KdTree tree(cloud.points);
    const Vec3 centroid = cloud.points.colwise().mean().transpose();
    const double scale = std::max(1.0, bounding_box(cloud.points).diagonal());

    PointCloud out = cloud;
    Points normals(cloud.points.rows(), 3);
    out.degenerate.assign(cloud.size(), 0);

    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        // The point itself plus its k nearest others.
        const IndexList nbrs = tree.k_nearest(cloud.points.row(i).data(), static_cast<std::size_t>(k) + 1);
        Vec3 mean = Vec3::Zero();
        for (Index j : nbrs) mean += cloud.points.row(j).transpose();
        mean /= static_cast<double>(nbrs.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (Index j : nbrs) {
            const Vec3 d = cloud.points.row(j).transpose() - mean;
            cov += d * d.transpose();
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        const Vec3 lambda = eig.eigenvalues();  // ascending
        if (lambda(2) <= 0.0 || lambda(1) <= 1e-10 * lambda(2)) {
            normals.row(i).setZero();
            out.degenerate[static_cast<std::size_t>(i)] = 1;
            continue;
        }
        Vec3 n = eig.eigenvectors().col(0).normalized();
        const double side = n.dot(cloud.points.row(i).transpose() - centroid);
        if (std::abs(side) > 1e-12 * scale) {
            if (side < 0.0) n = -n;
        } else {
            for (int a = 0; a < 3; ++a) {
                if (std::abs(n(a)) > 1e-12) {
                    if (n(a) < 0.0) n = -n;
                    break;
                }
            }
        }
        normals.row(i) = n.transpose();
    }
    out.normals = std::move(normals);
    return out;
}

// ---------------------------------------------------------------------------

BoundingBox bounding_box(const Points& points)
{
    require(points.rows() > 0, ErrorKind::InvalidInput, "bounding box of an empty point set");
    return {points.colwise().minCoeff().transpose(), points.colwise().maxCoeff().transpose()};
}

Rescale rescale_to_unit_box(PointCloud& cloud)
{
    const BoundingBox box = bounding_box(cloud.points);
    const double half = 0.5 * box.extent().maxCoeff();
    Rescale r;
    r.offset = box.center();
    r.scale = half > 0.0 ? 1.0 / half : 1.0;
    cloud.points = ((cloud.points.rowwise() - r.offset.transpose()) * r.scale).eval();
    return r;
}

}  // namespace otgeo

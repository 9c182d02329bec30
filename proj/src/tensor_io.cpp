#include "otgeo/tensor_io.hpp"

#include "otgeo/error.hpp"

#include <cstring>
#include <fstream>

namespace otgeo {

namespace {

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open '" + path.string() + "'");
    return in;
}

template <class T>
void put(std::ofstream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path)
{
    T v{};
    const auto at = in.tellg();
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) fail(ErrorKind::Format, path.string() + ": offset " + std::to_string(static_cast<long long>(at)) +
                                         ": unexpected end of file");
    return v;
}

void check_magic(std::ifstream& in, const char* magic, const std::filesystem::path& path)
{
    char m[4] = {};
    in.read(m, 4);
    if (!in || std::memcmp(m, magic, 4) != 0)
        fail(ErrorKind::Format, path.string() + ": offset 0: expected magic '" + std::string(magic, 4) + "'");
}

}  // namespace

void save_indices(const std::filesystem::path& path, const IndexList& indices)
{
    auto out = open_out(path);
    out.write("OTIX", 4);
    put(out, static_cast<std::uint32_t>(indices.size()));
    out.write(reinterpret_cast<const char*>(indices.data()),
              static_cast<std::streamsize>(indices.size() * sizeof(Index)));
    require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

IndexList load_indices(const std::filesystem::path& path)
{
    auto in = open_in(path);
    check_magic(in, "OTIX", path);
    const auto n = get<std::uint32_t>(in, path);
    IndexList v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(Index)));
    if (!in) fail(ErrorKind::Format, path.string() + ": offset 8: truncated index payload");
    return v;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t)
{
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    require(count == t.values.size(), ErrorKind::InvalidInput, "tensor dims do not match the value count");
    auto out = open_out(path);
    out.write("OTT1", 4);
    put(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

Tensor load_tensor(const std::filesystem::path& path)
{
    auto in = open_in(path);
    check_magic(in, "OTT1", path);
    Tensor t;
    const auto rank = get<std::uint32_t>(in, path);
    require(rank <= 8, ErrorKind::Format, path.string() + ": implausible tensor rank " + std::to_string(rank));
    std::size_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
        t.dims.push_back(get<std::uint32_t>(in, path));
        count *= t.dims.back();
    }
    t.values.resize(count);
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) fail(ErrorKind::Format, path.string() + ": truncated tensor payload");
    return t;
}

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m)
{
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.values.resize(static_cast<std::size_t>(m.size()));
    Eigen::Map<RowMatrix>(t.values.data(), m.rows(), m.cols()) = m;
    save_tensor(path, t);
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path)
{
    const Tensor t = load_tensor(path);
    require(t.dims.size() == 2, ErrorKind::Format, path.string() + ": expected a rank-2 tensor");
    return Eigen::Map<const RowMatrix>(t.values.data(), t.dims[0], t.dims[1]);
}

}  // namespace otgeo

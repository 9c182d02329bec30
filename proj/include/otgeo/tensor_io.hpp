#pragma once

#include "otgeo/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace otgeo {

/// "OTIX", u32 length, then length little-endian u32 values.
void save_indices(const std::filesystem::path& path, const IndexList& indices);
IndexList load_indices(const std::filesystem::path& path);

/// "OTT1", u32 rank, rank u32 dims, then prod(dims) little-endian f64 values.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
};

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Matrix helpers: stored as rank-2 (rows, cols) in row-major order.
void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

}  // namespace otgeo

#pragma once

#include "otgeo/geometry.hpp"
#include "otgeo/latent_mesh.hpp"
#include "otgeo/types.hpp"

#include <string>

namespace otgeo {

/// Encoder: for each latent point, k_enc physical indices (nearest first).
/// Decoder: for each physical point, k_dec latent indices (nearest first).
/// Lists are flattened, entry t of point l at l * k + t.
struct IndexMap {
    IndexList encoder;
    IndexList decoder;
    int k_enc = 1;
    int k_dec = 1;
    std::size_t n1 = 0;  // physical count
    std::size_t n2 = 0;  // latent count

    /// Nearest physical index per latent point.
    IndexList encoder_first() const;
    void validate() const;
};

/// k nearest physical points per transported point (exact, ties to lowest index).
IndexList encoder_indices(const Points& transported, const PointCloud& cloud, int k = 1);

/// k nearest transported points per physical point.
IndexList decoder_indices(const Points& transported, const PointCloud& cloud, int k = 1);

IndexMap build_index_map(const Points& transported, const PointCloud& cloud, int k_enc = 1, int k_dec = 1);

// ---------------------------------------------------------------------------

enum class NormalFeatures { None, Car, Concat, Cross };

NormalFeatures parse_normal_features(const std::string& name);
std::string to_string(NormalFeatures mode);

/// none: [xi, x(E)] = 6; car: [xi, x(E), n(E)] = 9;
/// concat: [xi, x(E), h, n(E)] = 12; cross: [xi, x(E), h x n(E)] = 9.
int feature_channels(NormalFeatures mode);

/// n2 x C feature tensor, row k = latent point i*m + j.
struct LatentFeatures {
    Eigen::MatrixXd tensor;
    std::size_t side = 0;
    NormalFeatures mode = NormalFeatures::Cross;
};

/// `E` holds one physical index per latent point.
LatentFeatures assemble_features(const LatentGrid& grid, const PointCloud& cloud, const IndexList& E,
                                 NormalFeatures mode = NormalFeatures::Cross);

// ---------------------------------------------------------------------------

enum class TransferMode { Single, MultiMean };

TransferMode parse_transfer_mode(const std::string& name);
std::string to_string(TransferMode mode);

/// Latent (n2 x s) -> physical (n1 x s). Single picks the nearest latent value;
/// multi-mean averages the k_dec nearest.
Eigen::MatrixXd decode_solution(const Eigen::MatrixXd& latent, const IndexMap& map,
                                TransferMode mode = TransferMode::Single);

/// Physical (n1 x s) -> latent (n2 x s), dual of decode_solution.
Eigen::MatrixXd encode_function(const Eigen::MatrixXd& physical, const IndexMap& map,
                                TransferMode mode = TransferMode::Single);

}  // namespace otgeo

#pragma once

#include "otgeo/coupling.hpp"
#include "otgeo/geometry.hpp"
#include "otgeo/latent_mesh.hpp"
#include "otgeo/ot_map.hpp"
#include "otgeo/ot_plan.hpp"
#include "otgeo/spectral_operator.hpp"
#include "otgeo/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace otgeo {

enum class OtMethod { Plan, Map };

OtMethod parse_ot_method(const std::string& name);
std::string to_string(OtMethod m);

struct PipelineConfig {
    struct Latent {
        LatentShape shape = LatentShape::Torus;
        double alpha = 3.0;
        LatentParams params;
        bool fit_bbox = true;
    } latent;

    /// <= 0 disables downsampling.
    double voxel_size = 0.05;
    VoxelRule voxel_rule = VoxelRule::Centroid;
    /// Random fraction of the (downsampled) points kept per instance.
    double subsample_rate = 1.0;

    struct Normals {
        /// Estimate even when the geometry file carries normals.
        bool estimate = false;
        int k = 16;
    } normals;

    struct Ot {
        OtMethod method = OtMethod::Plan;
        SinkhornConfig sinkhorn;
        PlanStrategy strategy = PlanStrategy::Mean;
        int ppmm_iters = 0;  // 0 = sqrt-n rule
        DirectionRule ppmm_rule = DirectionRule::CovEig;
        double ppmm_tol = -1.0;
    } ot;

    struct Coupling {
        int k_enc = 1;
        int k_dec = 1;
        TransferMode encode_mode = TransferMode::Single;
        TransferMode decode_mode = TransferMode::Single;
        NormalFeatures normal_features = NormalFeatures::Cross;
    } coupling;

    OperatorConfig model;  // in_channels/out_channels are derived from data
    TrainConfig train;
    std::uint64_t seed = 0;
    int threads = 0;  // 0 = OTGEO_THREADS or hardware
};

/// Strict parse: unknown keys and wrong types raise InvalidConfig.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);
/// Hash over the sections that influence embedding artifacts only.
std::string embed_hash(const PipelineConfig& cfg);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ull);
std::string hex64(std::uint64_t v);

}  // namespace otgeo

#pragma once

#include "otgeo/config.hpp"
#include "otgeo/report.hpp"
#include "otgeo/synth.hpp"
#include "otgeo/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace otgeo {

// ---------------------------------------------------------------------------
// Manifests

struct ManifestEntry {
    std::string tag;
    std::filesystem::path geometry;  // absolute after load
    std::optional<std::filesystem::path> solution;
    std::optional<double> cd;
    std::string split;  // train | val | test
    // Per-instance overrides of the dataset-wide drag scalars.
    std::optional<double> speed;
    std::optional<double> frontal_area;
    std::optional<double> total_area;
    std::optional<Vec3> inlet;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::optional<double> speed;
    std::optional<double> frontal_area;
    std::optional<Vec3> inlet;

    std::vector<std::size_t> split(const std::string& name) const;
    /// Speed, frontal area and inlet resolved for one entry (globals as fallback).
    bool has_drag_scalars(const ManifestEntry& e) const;
    double speed_of(const ManifestEntry& e) const;
    double frontal_area_of(const ManifestEntry& e) const;
    Vec3 inlet_of(const ManifestEntry& e) const;
};

/// Layout: {"globals": {...}, "entries": [{"tag", "geometry", "solution" | "cd", "split", ...}]}.
/// Relative paths resolve against the manifest's directory; files must exist.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Per-point solution values: OTT1 matrix (.ott) or whitespace/comma separated text.
Eigen::MatrixXd load_solution(const std::filesystem::path& path);

struct SynthSplit {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    std::size_t total() const { return train + val + test; }
};

/// Generates a synthetic dataset into `dir` (geometry/, solution/, manifest.json).
DatasetManifest write_synth_dataset(const std::filesystem::path& dir, SynthKind kind, const SynthSplit& split,
                                    std::uint64_t seed, const SynthOptions& opts = {});

// ---------------------------------------------------------------------------
// Embedding

/// Cloud and per-point target after loading, voxel reduction, subsampling and
/// normal estimation.
struct PreparedInstance {
    PointCloud cloud;
    Eigen::MatrixXd target;  // empty when the entry has no solution
    std::size_t raw_points = 0;
    bool squared = false;  // subsampled to a perfect square for the map path
};

PreparedInstance prepare_instance(const ManifestEntry& entry, const PipelineConfig& cfg, double rate,
                                  bool square_for_map);

struct InstanceEmbed {
    std::string tag;
    bool ok = false;
    bool cached = false;
    std::string error;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    std::size_t side = 0;
    double ot_seconds = 0.0;
    double nn_seconds = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct EmbedSummary {
    std::string embed_hash;
    std::filesystem::path dir;
    std::vector<InstanceEmbed> instances;
    std::size_t failures() const;
    double ot_seconds() const;
    double nn_seconds() const;
};

std::filesystem::path embed_dir(const std::filesystem::path& out, const PipelineConfig& cfg);

/// Embeds every instance (instance-parallel). Artifacts whose fingerprint
/// matches are reused. Failures are recorded and do not stop the batch.
EmbedSummary cmd_embed(const DatasetManifest& manifest, const PipelineConfig& cfg, const std::filesystem::path& out);

/// Samples of one split from embed artifacts. With `full_resolution` the
/// target and decoder refer to the instance prepared at rate 1.
std::vector<Sample> load_samples(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                 const std::filesystem::path& out, const std::string& split,
                                 bool full_resolution = false);

// ---------------------------------------------------------------------------
// Training and evaluation

std::filesystem::path run_dir(const std::filesystem::path& out, const PipelineConfig& cfg);

/// Trains on the train split (validation on val) and writes model.otno,
/// report.csv and summary.json under run_dir.
RunReport cmd_train(const DatasetManifest& manifest, const PipelineConfig& cfg, const std::filesystem::path& out);

/// Evaluates the run's checkpoint (or `checkpoint`) on the test split.
RunReport cmd_eval(const DatasetManifest& manifest, const PipelineConfig& cfg, const std::filesystem::path& out,
                   const std::optional<std::filesystem::path>& checkpoint = std::nullopt,
                   bool full_resolution = false);

struct ExperimentResult {
    std::string config_hash;
    EmbedSummary embed;
    RunReport train;
    RunReport eval;
};

/// embed + train + eval. Throws when any instance fails to embed.
ExperimentResult run_experiment(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                const std::filesystem::path& out, bool full_resolution_eval = false);

// ---------------------------------------------------------------------------
// Studies

struct AblationRow {
    std::string normal_features;
    std::string strategy;
    std::string config_hash;
    bool ok = false;
    std::string error;
    double test_rel_l2 = 0.0;
    double test_mse = 0.0;
    double seconds = 0.0;
};

/// Every normal-feature mode crossed with every plan strategy; writes ablation.csv.
std::vector<AblationRow> ablation_sweep(const DatasetManifest& manifest, const PipelineConfig& base,
                                        const std::filesystem::path& out);

struct ConvergenceRow {
    double rate = 1.0;
    double n1 = 0.0;  // mean physical count
    double m = 0.0;   // mean latent side
    double error = 0.0;
    double seconds = 0.0;
    std::string config_hash;
    bool ok = false;
    std::string error_message;
};

struct ConvergenceResult {
    std::vector<ConvergenceRow> rows;
    /// Least-squares slope of log(error) against log(rate); empty with fewer
    /// than two usable rates.
    std::optional<double> slope;
};

/// Errors are measured on the full-resolution test points. Writes
/// convergence.csv and convergence.json.
ConvergenceResult convergence_study(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                    const std::vector<double>& rates, const std::filesystem::path& out);

std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace otgeo

#pragma once

#include "otgeo/coupling.hpp"
#include "otgeo/spectral_operator.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace otgeo {

enum class Optimizer { Adam, Sgd };
enum class LossKind { RelativeL2, Mse, CdLoss };
enum class LossSpace { Physical, Latent };

Optimizer parse_optimizer(const std::string& name);
LossKind parse_loss(const std::string& name);
LossSpace parse_loss_space(const std::string& name);
std::string to_string(Optimizer o);
std::string to_string(LossKind l);
std::string to_string(LossSpace s);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 4;
    double lr = 1e-3;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Adam;
    LossKind loss = LossKind::RelativeL2;
    LossSpace loss_space = LossSpace::Physical;
    /// Abort when a batch loss exceeds this multiple of the first batch loss.
    double divergence_factor = 1e6;
    /// Cosine decay of the learning rate to zero over the epochs.
    bool cosine_schedule = false;
    /// Evaluate samples of a batch on worker threads (results are reduced in
    /// sample order, so this does not change the numbers).
    bool parallel = true;
};

/// One training instance: latent features, the wiring back to its cloud and
/// the physical-space target (n1 x s). Cd-loss samples carry normals, the
/// inlet direction and a scalar target instead.
struct Sample {
    std::string tag;
    Eigen::MatrixXd features;
    std::size_t side = 0;
    IndexMap map;
    Eigen::MatrixXd target;
    Points normals;
    Vec3 inlet = Vec3::UnitX();
    double cd = 0.0;
};

struct Normalizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd std;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const;
    static Normalizer identity(Eigen::Index channels);
};

/// Operator plus the data normalisation it was trained with.
struct Model {
    SpectralOperator op;
    Normalizer input;
    Normalizer output;
    TransferMode decode_mode = TransferMode::Single;

    /// Physical-space prediction (n1 x s).
    Eigen::MatrixXd predict(const Sample& s) const;
    /// Latent-space prediction (n2 x s), denormalised.
    Eigen::MatrixXd predict_latent(const Sample& s) const;
};

Normalizer fit_input_normalizer(const std::vector<Sample>& data);
Normalizer fit_output_normalizer(const std::vector<Sample>& data, Eigen::Index channels);

// ---------------------------------------------------------------------------
// Metrics

/// ||pred - target|| / ||target||; throws InvalidInput on a zero target.
double relative_l2(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

/// Gradient of relative_l2 with respect to pred (zero at pred == target).
Eigen::MatrixXd relative_l2_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

struct Metrics {
    double relative_l2 = 0.0;
    double mse = 0.0;
    double cd_mse = 0.0;  // only for cd targets
};

Metrics evaluate(const Model& model, const std::vector<Sample>& data, LossKind loss);

// ---------------------------------------------------------------------------

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double train_rel_l2 = 0.0;
    double val_rel_l2 = 0.0;
    double val_mse = 0.0;
    double seconds = 0.0;
};

/// Loss of one sample and the gradient with respect to the flat parameters
/// (accumulated into grad).
double sample_loss_and_gradient(const Model& model, const Sample& s, const TrainConfig& cfg,
                                std::vector<double>* grad);

/// Trains in place. Deterministic given cfg.seed.
std::vector<EpochRow> train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                            const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints: "OTNO", u32 version, u32 block count, then per block
// u32 name length + bytes, u32 rank + u32 dims, f64 payload.

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace otgeo

#include "otgeo/training.hpp"

#include "otgeo/drag.hpp"
#include "otgeo/error.hpp"
#include "otgeo/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace otgeo {

Optimizer parse_optimizer(const std::string& name)
{
    if (name == "adam") return Optimizer::Adam;
    if (name == "sgd") return Optimizer::Sgd;
    fail(ErrorKind::InvalidConfig, "unknown optimizer '" + name + "'");
}

LossKind parse_loss(const std::string& name)
{
    if (name == "relative-l2") return LossKind::RelativeL2;
    if (name == "mse") return LossKind::Mse;
    if (name == "cd-loss") return LossKind::CdLoss;
    fail(ErrorKind::InvalidConfig, "unknown loss '" + name + "'");
}

LossSpace parse_loss_space(const std::string& name)
{
    if (name == "physical") return LossSpace::Physical;
    if (name == "latent") return LossSpace::Latent;
    fail(ErrorKind::InvalidConfig, "unknown loss space '" + name + "'");
}

std::string to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

std::string to_string(LossKind l)
{
    switch (l) {
    case LossKind::RelativeL2: return "relative-l2";
    case LossKind::Mse: return "mse";
    case LossKind::CdLoss: return "cd-loss";
    }
    return "?";
}

std::string to_string(LossSpace s) { return s == LossSpace::Physical ? "physical" : "latent"; }

// ---------------------------------------------------------------------------

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& x) const
{
    require(x.cols() == mean.size(), ErrorKind::Shape, "normalizer channel mismatch");
    return (x.rowwise() - mean).array().rowwise() / std.array();
}

Eigen::MatrixXd Normalizer::invert(const Eigen::MatrixXd& x) const
{
    require(x.cols() == mean.size(), ErrorKind::Shape, "normalizer channel mismatch");
    Eigen::MatrixXd y = x.array().rowwise() * std.array();
    y.rowwise() += mean;
    return y;
}

Normalizer Normalizer::identity(Eigen::Index channels)
{
    return {Eigen::RowVectorXd::Zero(channels), Eigen::RowVectorXd::Ones(channels)};
}

namespace {

Normalizer fit_rows(const std::vector<const Eigen::MatrixXd*>& mats, Eigen::Index channels)
{
    Normalizer n = Normalizer::identity(channels);
    double count = 0.0;
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(channels);
    for (const auto* m : mats) {
        sum += m->colwise().sum();
        count += static_cast<double>(m->rows());
    }
    if (count == 0.0) return n;
    n.mean = sum / count;
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(channels);
    for (const auto* m : mats) sq += (m->rowwise() - n.mean).array().square().colwise().sum().matrix();
    for (Eigen::Index c = 0; c < channels; ++c) {
        const double s = std::sqrt(sq(c) / count);
        n.std(c) = s > 1e-12 ? s : 1.0;
    }
    return n;
}

}  // namespace

Normalizer fit_input_normalizer(const std::vector<Sample>& data)
{
    require(!data.empty(), ErrorKind::InvalidInput, "cannot fit a normalizer on an empty dataset");
    std::vector<const Eigen::MatrixXd*> mats;
    for (const auto& s : data) mats.push_back(&s.features);
    return fit_rows(mats, data.front().features.cols());
}

Normalizer fit_output_normalizer(const std::vector<Sample>& data, Eigen::Index channels)
{
    std::vector<const Eigen::MatrixXd*> mats;
    for (const auto& s : data)
        if (s.target.size() > 0) {
            require(s.target.cols() == channels, ErrorKind::Shape, "target channel count mismatch");
            mats.push_back(&s.target);
        }
    return fit_rows(mats, channels);
}

Eigen::MatrixXd Model::predict_latent(const Sample& s) const
{
    return output.invert(op.forward(input.apply(s.features), s.side));
}

Eigen::MatrixXd Model::predict(const Sample& s) const
{
    return decode_solution(predict_latent(s), s.map, decode_mode);
}

// ---------------------------------------------------------------------------

double relative_l2(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::Shape,
            "relative_l2 needs equal shapes");
    const double tn = target.norm();
    require(tn > 0.0, ErrorKind::InvalidInput, "relative_l2 with a zero-norm target is undefined");
    return (pred - target).norm() / tn;
}

double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::Shape, "mse needs equal shapes");
    require(pred.size() > 0, ErrorKind::InvalidInput, "mse of empty arrays");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Eigen::MatrixXd relative_l2_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target)
{
    const double tn = target.norm();
    require(tn > 0.0, ErrorKind::InvalidInput, "relative_l2 with a zero-norm target is undefined");
    const Eigen::MatrixXd diff = pred - target;
    const double dn = diff.norm();
    if (dn == 0.0) return Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
    return diff / (tn * dn);
}

Metrics evaluate(const Model& model, const std::vector<Sample>& data, LossKind loss)
{
    Metrics m;
    if (data.empty()) return m;
    std::vector<Metrics> per(data.size());
    parallel_for(0, data.size(), [&](std::size_t i) {
        const Eigen::MatrixXd pred = model.predict(data[i]);
        if (loss == LossKind::CdLoss) {
            const double d = drag_sum(pred.col(0), data[i].normals, data[i].inlet) - data[i].cd;
            per[i].cd_mse = d * d;
        }
        if (data[i].target.size() > 0) {
            per[i].relative_l2 = relative_l2(pred, data[i].target);
            per[i].mse = mse(pred, data[i].target);
        }
    });
    for (const auto& p : per) {
        m.relative_l2 += p.relative_l2;
        m.mse += p.mse;
        m.cd_mse += p.cd_mse;
    }
    const double n = static_cast<double>(data.size());
    m.relative_l2 /= n;
    m.mse /= n;
    m.cd_mse /= n;
    return m;
}

// ---------------------------------------------------------------------------

double sample_loss_and_gradient(const Model& model, const Sample& s, const TrainConfig& cfg,
                                std::vector<double>* grad)
{
    SpectralOperator::Cache cache;
    const Eigen::MatrixXd z = model.op.forward(model.input.apply(s.features), s.side, grad ? &cache : nullptr);
    const Eigen::MatrixXd latent = model.output.invert(z);

    double loss = 0.0;
    Eigen::MatrixXd g_latent;
    if (cfg.loss_space == LossSpace::Latent) {
        require(cfg.loss != LossKind::CdLoss, ErrorKind::InvalidConfig, "cd-loss is only defined in physical space");
        const Eigen::MatrixXd target = encode_function(s.target, s.map, TransferMode::Single);
        if (cfg.loss == LossKind::RelativeL2) {
            loss = relative_l2(latent, target);
            if (grad) g_latent = relative_l2_gradient(latent, target);
        } else {
            loss = mse(latent, target);
            if (grad) g_latent = 2.0 * (latent - target) / static_cast<double>(latent.size());
        }
    } else {
        const Eigen::MatrixXd pred = decode_solution(latent, s.map, model.decode_mode);
        Eigen::MatrixXd g_pred;
        switch (cfg.loss) {
        case LossKind::RelativeL2:
            loss = relative_l2(pred, s.target);
            if (grad) g_pred = relative_l2_gradient(pred, s.target);
            break;
        case LossKind::Mse:
            loss = mse(pred, s.target);
            if (grad) g_pred = 2.0 * (pred - s.target) / static_cast<double>(pred.size());
            break;
        case LossKind::CdLoss: {
            const Eigen::VectorXd p = pred.col(0);
            loss = cd_loss(p, s.normals, s.inlet, s.cd);
            if (grad) {
                g_pred = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
                g_pred.col(0) = cd_loss_gradient(p, s.normals, s.inlet, s.cd);
            }
            break;
        }
        }
        if (grad) {
            // Adjoint of decode_solution: scatter-add back onto the latent grid.
            g_latent = Eigen::MatrixXd::Zero(latent.rows(), latent.cols());
            const auto k = static_cast<std::size_t>(s.map.k_dec);
            const std::size_t used = model.decode_mode == TransferMode::Single ? 1 : k;
            for (std::size_t p = 0; p < s.map.n1; ++p)
                for (std::size_t t = 0; t < used; ++t)
                    g_latent.row(s.map.decoder[p * k + t]) += g_pred.row(static_cast<Eigen::Index>(p)) / static_cast<double>(used);
        }
    }
    require(std::isfinite(loss), ErrorKind::Numeric, "non-finite loss on sample '" + s.tag + "'");
    if (grad) {
        const Eigen::MatrixXd gz = g_latent.array().rowwise() * model.output.std.array();
        model.op.backward(cache, gz, *grad);
    }
    return loss;
}

std::vector<EpochRow> train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                            const TrainConfig& cfg)
{
    require(!train_set.empty(), ErrorKind::InvalidInput, "training set is empty");
    require(cfg.epochs >= 0 && cfg.batch_size >= 1, ErrorKind::InvalidConfig, "epochs >= 0 and batch_size >= 1 required");
    require(cfg.lr >= 0.0 && cfg.weight_decay >= 0.0, ErrorKind::InvalidConfig, "lr and weight_decay must be >= 0");

    std::vector<double>& params = model.op.params();
    const std::size_t P = params.size();
    std::vector<double> m1(P, 0.0), m2(P, 0.0), grad(P, 0.0);
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    long long step = 0;
    double first_loss = -1.0;

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<EpochRow> rows;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.cosine_schedule
                              ? 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * (epoch - 1) / cfg.epochs))
                              : cfg.lr;
        double loss_sum = 0.0;
        double rel_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t bs = end - start;
            std::vector<std::vector<double>> grads(bs, std::vector<double>(P, 0.0));
            std::vector<double> losses(bs, 0.0);
            auto work = [&](std::size_t b) {
                losses[b] = sample_loss_and_gradient(model, train_set[order[start + b]], cfg, &grads[b]);
            };
            if (cfg.parallel) parallel_for(0, bs, work);
            else
                for (std::size_t b = 0; b < bs; ++b) work(b);

            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < bs; ++b) {
                batch_loss += losses[b];
                for (std::size_t k = 0; k < P; ++k) grad[k] += grads[b][k];
            }
            const double inv = 1.0 / static_cast<double>(bs);
            batch_loss *= inv;
            for (double& g : grad) g *= inv;
            if (cfg.loss == LossKind::RelativeL2) rel_sum += batch_loss * static_cast<double>(bs);
            loss_sum += batch_loss * static_cast<double>(bs);

            if (first_loss < 0.0) first_loss = batch_loss;
            require(std::isfinite(batch_loss), ErrorKind::Numeric,
                    "non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at sample '" +
                        train_set[order[start]].tag + "'");
            if (first_loss > 0.0 && batch_loss > cfg.divergence_factor * first_loss)
                fail(ErrorKind::Numeric, "training diverged at epoch " + std::to_string(epoch) + ": batch loss " +
                                             std::to_string(batch_loss) + " vs initial " + std::to_string(first_loss) +
                                             " (lower the learning rate)");

            ++step;
            if (cfg.optimizer == Optimizer::Adam) {
                const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
                for (std::size_t k = 0; k < P; ++k) {
                    m1[k] = b1 * m1[k] + (1.0 - b1) * grad[k];
                    m2[k] = b2 * m2[k] + (1.0 - b2) * grad[k] * grad[k];
                    const double upd = (m1[k] / c1) / (std::sqrt(m2[k] / c2) + adam_eps) + cfg.weight_decay * params[k];
                    params[k] -= lr * upd;
                }
            } else {
                for (std::size_t k = 0; k < P; ++k) params[k] -= lr * (grad[k] + cfg.weight_decay * params[k]);
            }
        }
        EpochRow row;
        row.epoch = epoch;
        const double n = static_cast<double>(train_set.size());
        row.train_loss = loss_sum / n;
        row.train_rel_l2 = cfg.loss == LossKind::RelativeL2 ? rel_sum / n : std::nan("");
        if (!val_set.empty()) {
            const Metrics vm = evaluate(model, val_set, cfg.loss);
            row.val_rel_l2 = vm.relative_l2;
            row.val_mse = cfg.loss == LossKind::CdLoss ? vm.cd_mse : vm.mse;
        } else {
            row.val_rel_l2 = row.val_mse = std::nan("");
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Block {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
};

template <class T>
void put(std::ofstream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path)
{
    T v{};
    const auto at = static_cast<long long>(in.tellg());
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) fail(ErrorKind::Format, path.string() + ": offset " + std::to_string(at) + ": truncated checkpoint");
    return v;
}

Block vector_block(const std::string& name, const Eigen::RowVectorXd& v)
{
    return {name, {static_cast<std::uint32_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

Eigen::RowVectorXd block_vector(const Block& b)
{
    return Eigen::Map<const Eigen::RowVectorXd>(b.values.data(), static_cast<Eigen::Index>(b.values.size()));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model)
{
    const OperatorConfig& c = model.op.config();
    std::vector<Block> blocks;
    blocks.push_back({"config",
                      {8},
                      {double(c.in_channels), double(c.width), double(c.layers), double(c.modes1), double(c.modes2),
                       double(c.out_channels), c.activation == Activation::Gelu ? 0.0 : 1.0,
                       model.decode_mode == TransferMode::Single ? 0.0 : 1.0}});
    for (const auto& b : model.op.blocks())
        blocks.push_back({b.name, b.dims,
                          std::vector<double>(model.op.params().begin() + static_cast<std::ptrdiff_t>(b.offset),
                                              model.op.params().begin() + static_cast<std::ptrdiff_t>(b.offset + b.size))});
    blocks.push_back(vector_block("normalizer.input.mean", model.input.mean));
    blocks.push_back(vector_block("normalizer.input.std", model.input.std));
    blocks.push_back(vector_block("normalizer.output.mean", model.output.mean));
    blocks.push_back(vector_block("normalizer.output.std", model.output.std));

    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
    out.write("OTNO", 4);
    put(out, kCheckpointVersion);
    put(out, static_cast<std::uint32_t>(blocks.size()));
    for (const auto& b : blocks) {
        put(out, static_cast<std::uint32_t>(b.name.size()));
        out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        put(out, static_cast<std::uint32_t>(b.dims.size()));
        for (auto d : b.dims) put(out, d);
        out.write(reinterpret_cast<const char*>(b.values.data()),
                  static_cast<std::streamsize>(b.values.size() * sizeof(double)));
    }
    require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::MissingArtifact, "checkpoint '" + path.string() + "' not found; run train first");
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "OTNO", 4) != 0)
        fail(ErrorKind::Format, path.string() + ": offset 0: not an OTNO checkpoint");
    const auto version = get<std::uint32_t>(in, path);
    require(version == kCheckpointVersion, ErrorKind::Format,
            path.string() + ": unsupported checkpoint version " + std::to_string(version));
    const auto count = get<std::uint32_t>(in, path);
    std::vector<Block> blocks;
    for (std::uint32_t k = 0; k < count; ++k) {
        Block b;
        const auto len = get<std::uint32_t>(in, path);
        require(len < 4096, ErrorKind::Format, path.string() + ": implausible block name length");
        b.name.resize(len);
        in.read(b.name.data(), len);
        const auto rank = get<std::uint32_t>(in, path);
        require(rank <= 8, ErrorKind::Format, path.string() + ": implausible block rank");
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            b.dims.push_back(get<std::uint32_t>(in, path));
            n *= b.dims.back();
        }
        b.values.resize(n);
        in.read(reinterpret_cast<char*>(b.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) fail(ErrorKind::Format, path.string() + ": truncated block '" + b.name + "'");
        blocks.push_back(std::move(b));
    }
    auto find = [&](const std::string& name) -> const Block& {
        for (const auto& b : blocks)
            if (b.name == name) return b;
        fail(ErrorKind::Format, path.string() + ": missing block '" + name + "'");
    };
    const Block& cb = find("config");
    require(cb.values.size() == 8, ErrorKind::Format, path.string() + ": malformed config block");
    OperatorConfig c;
    c.in_channels = static_cast<int>(cb.values[0]);
    c.width = static_cast<int>(cb.values[1]);
    c.layers = static_cast<int>(cb.values[2]);
    c.modes1 = static_cast<int>(cb.values[3]);
    c.modes2 = static_cast<int>(cb.values[4]);
    c.out_channels = static_cast<int>(cb.values[5]);
    c.activation = cb.values[6] == 0.0 ? Activation::Gelu : Activation::Identity;

    Model model;
    model.op = SpectralOperator(c, 0);
    model.decode_mode = cb.values[7] == 0.0 ? TransferMode::Single : TransferMode::MultiMean;
    for (const auto& pb : model.op.blocks()) {
        const Block& b = find(pb.name);
        require(b.values.size() == pb.size, ErrorKind::Format, path.string() + ": block '" + pb.name + "' has the wrong size");
        std::copy(b.values.begin(), b.values.end(), model.op.params().begin() + static_cast<std::ptrdiff_t>(pb.offset));
    }
    model.input = {block_vector(find("normalizer.input.mean")), block_vector(find("normalizer.input.std"))};
    model.output = {block_vector(find("normalizer.output.mean")), block_vector(find("normalizer.output.std"))};
    return model;
}

}  // namespace otgeo

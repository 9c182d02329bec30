#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace otgeo {

enum class Activation { Gelu, Identity };

struct OperatorConfig {
    int in_channels = 9;
    int width = 32;
    int layers = 4;
    int modes1 = 16;
    int modes2 = 16;
    int out_channels = 1;
    Activation activation = Activation::Gelu;
};

/// Named slice of the flat parameter vector. Dims are the logical shape; the
/// spectral block is (2*modes1, modes2, width_in, width_out, 2) with the last
/// axis holding (re, im). Affine weights are (in, out), row-major.
struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::vector<std::uint32_t> dims;
};

/// Truncated spectral convolution on an m x m grid (row-major, index i*m + j).
/// H is (m*m) x width, one channel per column. Kept frequencies are
/// k1 in [0, e1) U [m - e1, m) and k2 in [0, e2) with e = min(modes, m/2);
/// frequency k1 maps to weight row k1 (k1 >= 0) or 2*modes1 + k1 (k1 < 0, signed).
/// Output is Re(IDFT2(Z)) where Z holds the mixed kept modes and zeros elsewhere.
Eigen::MatrixXd spectral_conv(const Eigen::MatrixXd& H, std::size_t side, const double* weights, int width,
                              int modes1, int modes2);

class SpectralOperator {
public:
    struct Cache {
        std::size_t side = 0;
        Eigen::MatrixXd input;
        std::vector<Eigen::MatrixXd> hidden;  // layers + 1 entries, hidden[0] = lift output
        std::vector<Eigen::MatrixXd> pre;     // pre-activation per layer
        std::vector<std::vector<std::complex<double>>> spectra;  // r2c of hidden[l]
    };

    SpectralOperator() = default;
    SpectralOperator(const OperatorConfig& cfg, std::uint64_t seed);

    const OperatorConfig& config() const noexcept { return cfg_; }
    std::vector<double>& params() noexcept { return params_; }
    const std::vector<double>& params() const noexcept { return params_; }
    const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
    const ParamBlock& block(const std::string& name) const;
    std::size_t parameter_count() const noexcept { return params_.size(); }

    /// features: (m*m) x in_channels. Returns (m*m) x out_channels.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& features, std::size_t side, Cache* cache = nullptr) const;

    /// Accumulates dLoss/dparams into grad (same layout as params()). Returns
    /// dLoss/dfeatures.
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_out, std::vector<double>& grad) const;

private:
    void layout();
    std::size_t add_block(const std::string& name, std::vector<std::uint32_t> dims);

    OperatorConfig cfg_;
    std::vector<double> params_;
    std::vector<ParamBlock> blocks_;
};

double gelu(double x);
double gelu_derivative(double x);

}  // namespace otgeo

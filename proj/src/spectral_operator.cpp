#include "otgeo/spectral_operator.hpp"

#include "otgeo/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <tuple>

namespace otgeo {

using cd = std::complex<double>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double gelu(double x)
{
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_derivative(double x)
{
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * pdf;
}

namespace {

// ---------------------------------------------------------------------------
// FFTW plans, cached per (m, channels, direction). Planning is not thread
// safe in FFTW, execution with the new-array interface is.

enum class Dir { Forward, Backward };

fftw_plan get_plan(int m, int howmany, Dir dir)
{
    static std::mutex mu;
    static std::map<std::tuple<int, int, Dir>, fftw_plan> plans;
    std::lock_guard<std::mutex> lock(mu);
    const auto key = std::make_tuple(m, howmany, dir);
    if (auto it = plans.find(key); it != plans.end()) return it->second;

    const int n[2] = {m, m};
    const int mh = m / 2 + 1;
    std::vector<double> real(static_cast<std::size_t>(m * m * howmany));
    std::vector<cd> spec(static_cast<std::size_t>(m * mh * howmany));
    auto* c = reinterpret_cast<fftw_complex*>(spec.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan p = dir == Dir::Forward
                      ? fftw_plan_many_dft_r2c(2, n, howmany, real.data(), nullptr, 1, m * m, c, nullptr, 1, m * mh,
                                               flags)
                      : fftw_plan_many_dft_c2r(2, n, howmany, c, nullptr, 1, m * mh, real.data(), nullptr, 1, m * m,
                                               flags);
    require(p != nullptr, ErrorKind::Numeric, "FFTW planning failed for m=" + std::to_string(m));
    plans.emplace(key, p);
    return p;
}

struct Geom {
    int m = 0;
    int mh = 0;
    int e1 = 0;
    int e2 = 0;
    int N = 0;
    int w = 0;
    int m1 = 0;
    int m2 = 0;

    Geom(std::size_t side, int width, int modes1, int modes2)
        : m(static_cast<int>(side)), mh(static_cast<int>(side) / 2 + 1), e1(std::min(modes1, static_cast<int>(side) / 2)),
          e2(std::min(modes2, static_cast<int>(side) / 2)), N(static_cast<int>(side * side)), w(width), m1(modes1),
          m2(modes2)
    {
    }

    std::size_t spec(int c, int k1, int k2) const
    {
        return static_cast<std::size_t>((c * m + k1) * mh + k2);
    }
    std::size_t weight(int row, int k2, int i, int o) const
    {
        return static_cast<std::size_t>((((row * m2 + k2) * w + i) * w + o) * 2);
    }
};

std::vector<cd> forward_fft(const Eigen::MatrixXd& H, const Geom& g)
{
    std::vector<cd> out(static_cast<std::size_t>(g.w * g.m * g.mh));
    fftw_execute_dft_r2c(get_plan(g.m, g.w, Dir::Forward), const_cast<double*>(H.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

// Hermitian completion: replaces Z by (Z + conj(Z(-k))) / 2 in the half
// spectrum, so the c2r transform returns Re(IDFT(Z)).
void complete(std::vector<cd>& Z, const Geom& g)
{
    std::vector<cd> col(static_cast<std::size_t>(g.m));
    for (int c = 0; c < g.w; ++c) {
        for (int k1 = 0; k1 < g.m; ++k1) col[static_cast<std::size_t>(k1)] = Z[g.spec(c, k1, 0)];
        for (int k1 = 0; k1 < g.m; ++k1)
            Z[g.spec(c, k1, 0)] =
                0.5 * (col[static_cast<std::size_t>(k1)] + std::conj(col[static_cast<std::size_t>((g.m - k1) % g.m)]));
        for (int k1 = 0; k1 < g.m; ++k1)
            for (int k2 = 1; k2 < g.mh; ++k2) Z[g.spec(c, k1, k2)] *= 0.5;
    }
}

Eigen::MatrixXd inverse_fft(std::vector<cd>& Z, const Geom& g, double scale)
{
    Eigen::MatrixXd out(g.N, g.w);
    fftw_execute_dft_c2r(get_plan(g.m, g.w, Dir::Backward), reinterpret_cast<fftw_complex*>(Z.data()), out.data());
    if (scale != 1.0) out *= scale;
    return out;
}

template <class Fn>
void for_kept(const Geom& g, Fn fn)
{
    for (int s1 = -g.e1; s1 < g.e1; ++s1) {
        const int k1 = (s1 + g.m) % g.m;
        const int row = s1 >= 0 ? s1 : 2 * g.m1 + s1;
        for (int k2 = 0; k2 < g.e2; ++k2) fn(k1, row, k2);
    }
}

std::vector<cd> mix(const std::vector<cd>& X, const double* W, const Geom& g)
{
    std::vector<cd> Z(X.size(), cd(0.0, 0.0));
    for_kept(g, [&](int k1, int row, int k2) {
        for (int i = 0; i < g.w; ++i) {
            const cd x = X[g.spec(i, k1, k2)];
            const double* wp = W + g.weight(row, k2, i, 0);
            for (int o = 0; o < g.w; ++o) Z[g.spec(o, k1, k2)] += cd(wp[2 * o], wp[2 * o + 1]) * x;
        }
    });
    return Z;
}

Eigen::MatrixXd spectral_from_spectrum(const std::vector<cd>& X, const double* W, const Geom& g)
{
    std::vector<cd> Z = mix(X, W, g);
    complete(Z, g);
    return inverse_fft(Z, g, 1.0 / g.N);
}

Eigen::MatrixXd spectral_backward(const std::vector<cd>& X, const double* W, const Eigen::MatrixXd& G, const Geom& g,
                                  double* dW)
{
    const std::vector<cd> GZ = forward_fft(G, g);
    const double inv = 1.0 / g.N;
    std::vector<cd> dX(X.size(), cd(0.0, 0.0));
    for_kept(g, [&](int k1, int row, int k2) {
        for (int i = 0; i < g.w; ++i) {
            const cd xc = std::conj(X[g.spec(i, k1, k2)]);
            const double* wp = W + g.weight(row, k2, i, 0);
            double* dwp = dW + g.weight(row, k2, i, 0);
            cd acc(0.0, 0.0);
            for (int o = 0; o < g.w; ++o) {
                const cd gz = GZ[g.spec(o, k1, k2)] * inv;
                const cd dw = gz * xc;
                dwp[2 * o] += dw.real();
                dwp[2 * o + 1] += dw.imag();
                acc += gz * cd(wp[2 * o], -wp[2 * o + 1]);
            }
            dX[g.spec(i, k1, k2)] = acc;
        }
    });
    complete(dX, g);
    return inverse_fft(dX, g, 1.0);
}

void check_grid(const Eigen::MatrixXd& H, std::size_t side, int width)
{
    require(side >= 2, ErrorKind::Shape, "latent grid side must be >= 2");
    require(H.rows() == static_cast<Eigen::Index>(side * side), ErrorKind::Shape,
            "field has " + std::to_string(H.rows()) + " rows, grid needs " + std::to_string(side * side));
    require(H.cols() == width, ErrorKind::Shape,
            "field has " + std::to_string(H.cols()) + " channels, expected " + std::to_string(width));
}

}  // namespace

Eigen::MatrixXd spectral_conv(const Eigen::MatrixXd& H, std::size_t side, const double* weights, int width,
                              int modes1, int modes2)
{
    check_grid(H, side, width);
    const Geom g(side, width, modes1, modes2);
    return spectral_from_spectrum(forward_fft(H, g), weights, g);
}

// ---------------------------------------------------------------------------

SpectralOperator::SpectralOperator(const OperatorConfig& cfg, std::uint64_t seed) : cfg_(cfg)
{
    require(cfg.in_channels >= 1 && cfg.width >= 1 && cfg.layers >= 1 && cfg.out_channels >= 1, ErrorKind::InvalidConfig,
            "operator channel counts and depth must be >= 1");
    require(cfg.modes1 >= 1 && cfg.modes2 >= 1, ErrorKind::InvalidConfig, "operator modes must be >= 1");
    layout();

    std::mt19937_64 rng(seed);
    auto fill = [&](const std::string& name, double lo, double hi) {
        const ParamBlock& b = block(name);
        std::uniform_real_distribution<double> U(lo, hi);
        for (std::size_t k = 0; k < b.size; ++k) params_[b.offset + k] = U(rng);
    };
    const double w = cfg.width;
    const double a_in = 1.0 / std::sqrt(static_cast<double>(cfg.in_channels));
    const double a_w = 1.0 / std::sqrt(w);
    fill("lift.weight", -a_in, a_in);
    fill("lift.bias", -a_in, a_in);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        fill(p + ".spectral", 0.0, 1.0 / (w * w));
        fill(p + ".skip.weight", -a_w, a_w);
        fill(p + ".skip.bias", -a_w, a_w);
    }
    fill("project.weight", -a_w, a_w);
    fill("project.bias", -a_w, a_w);
}

std::size_t SpectralOperator::add_block(const std::string& name, std::vector<std::uint32_t> dims)
{
    ParamBlock b;
    b.name = name;
    b.offset = params_.size();
    b.size = 1;
    for (auto d : dims) b.size *= d;
    b.dims = std::move(dims);
    params_.resize(params_.size() + b.size, 0.0);
    blocks_.push_back(b);
    return b.offset;
}

void SpectralOperator::layout()
{
    const auto cin = static_cast<std::uint32_t>(cfg_.in_channels);
    const auto w = static_cast<std::uint32_t>(cfg_.width);
    const auto s = static_cast<std::uint32_t>(cfg_.out_channels);
    add_block("lift.weight", {cin, w});
    add_block("lift.bias", {w});
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        add_block(p + ".spectral",
                  {2u * static_cast<std::uint32_t>(cfg_.modes1), static_cast<std::uint32_t>(cfg_.modes2), w, w, 2u});
        add_block(p + ".skip.weight", {w, w});
        add_block(p + ".skip.bias", {w});
    }
    add_block("project.weight", {w, s});
    add_block("project.bias", {s});
}

const ParamBlock& SpectralOperator::block(const std::string& name) const
{
    for (const auto& b : blocks_)
        if (b.name == name) return b;
    fail(ErrorKind::InvalidInput, "no parameter block named '" + name + "'");
}

Eigen::MatrixXd SpectralOperator::forward(const Eigen::MatrixXd& features, std::size_t side, Cache* cache) const
{
    require(!params_.empty(), ErrorKind::InvalidInput, "operator has no parameters");
    check_grid(features, side, cfg_.in_channels);
    const int w = cfg_.width;
    const Geom g(side, w, cfg_.modes1, cfg_.modes2);
    auto mat = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
        return Eigen::Map<const RowMat>(params_.data() + block(name).offset, r, c);
    };
    auto vec = [&](const std::string& name, Eigen::Index n) {
        return Eigen::Map<const Eigen::RowVectorXd>(params_.data() + block(name).offset, n);
    };

    Eigen::MatrixXd H = features * mat("lift.weight", cfg_.in_channels, w);
    H.rowwise() += vec("lift.bias", w);
    if (cache) {
        cache->side = side;
        cache->input = features;
        cache->hidden.assign(1, H);
        cache->pre.clear();
        cache->spectra.clear();
    }
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        std::vector<cd> X = forward_fft(H, g);
        Eigen::MatrixXd pre = spectral_from_spectrum(X, params_.data() + block(p + ".spectral").offset, g);
        pre.noalias() += H * mat(p + ".skip.weight", w, w);
        pre.rowwise() += vec(p + ".skip.bias", w);
        const bool last = l + 1 == cfg_.layers;
        if (last || cfg_.activation == Activation::Identity) H = pre;
        else H = pre.unaryExpr([](double x) { return gelu(x); });
        if (cache) {
            cache->spectra.push_back(std::move(X));
            cache->pre.push_back(std::move(pre));
            cache->hidden.push_back(H);
        }
    }
    Eigen::MatrixXd out = H * mat("project.weight", w, cfg_.out_channels);
    out.rowwise() += vec("project.bias", cfg_.out_channels);
    return out;
}

Eigen::MatrixXd SpectralOperator::backward(const Cache& cache, const Eigen::MatrixXd& d_out,
                                           std::vector<double>& grad) const
{
    require(grad.size() == params_.size(), ErrorKind::Shape, "gradient buffer has the wrong size");
    require(cache.hidden.size() == static_cast<std::size_t>(cfg_.layers) + 1, ErrorKind::InvalidInput,
            "backward needs a cache filled by forward");
    const int w = cfg_.width;
    const Geom g(cache.side, w, cfg_.modes1, cfg_.modes2);
    require(d_out.rows() == g.N && d_out.cols() == cfg_.out_channels, ErrorKind::Shape,
            "output gradient has the wrong shape");

    auto mat = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
        return Eigen::Map<const RowMat>(params_.data() + block(name).offset, r, c);
    };
    auto gmat = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
        return Eigen::Map<RowMat>(grad.data() + block(name).offset, r, c);
    };
    auto gvec = [&](const std::string& name, Eigen::Index n) {
        return Eigen::Map<Eigen::RowVectorXd>(grad.data() + block(name).offset, n);
    };

    const Eigen::MatrixXd& HL = cache.hidden.back();
    gmat("project.weight", w, cfg_.out_channels).noalias() += HL.transpose() * d_out;
    gvec("project.bias", cfg_.out_channels) += d_out.colwise().sum();
    Eigen::MatrixXd dH = d_out * mat("project.weight", w, cfg_.out_channels).transpose();

    for (int l = cfg_.layers - 1; l >= 0; --l) {
        const std::string p = "layer" + std::to_string(l);
        const auto ul = static_cast<std::size_t>(l);
        const bool last = l + 1 == cfg_.layers;
        Eigen::MatrixXd dpre = dH;
        if (!last && cfg_.activation == Activation::Gelu)
            dpre.array() *= cache.pre[ul].unaryExpr([](double x) { return gelu_derivative(x); }).array();
        const Eigen::MatrixXd& Hin = cache.hidden[ul];
        gmat(p + ".skip.weight", w, w).noalias() += Hin.transpose() * dpre;
        gvec(p + ".skip.bias", w) += dpre.colwise().sum();
        const std::size_t off = block(p + ".spectral").offset;
        dH = spectral_backward(cache.spectra[ul], params_.data() + off, dpre, g, grad.data() + off);
        dH.noalias() += dpre * mat(p + ".skip.weight", w, w).transpose();
    }

    gmat("lift.weight", cfg_.in_channels, w).noalias() += cache.input.transpose() * dH;
    gvec("lift.bias", w) += dH.colwise().sum();
    return dH * mat("lift.weight", cfg_.in_channels, w).transpose();
}

}  // namespace otgeo

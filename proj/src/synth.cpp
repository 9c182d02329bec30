#include "otgeo/synth.hpp"

#include "otgeo/drag.hpp"
#include "otgeo/error.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <random>

namespace otgeo {

namespace {

constexpr double kPi = std::numbers::pi;

std::mt19937_64 instance_rng(std::uint64_t seed, std::size_t index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

std::string make_tag(const char* prefix, std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%04zu", prefix, i);
    return buf;
}

}  // namespace

SynthKind parse_synth_kind(const std::string& name)
{
    if (name == "star-2d") return SynthKind::Star2d;
    if (name == "bumpy-sphere-3d") return SynthKind::BumpySphere3d;
    fail(ErrorKind::InvalidConfig, "unknown synthetic dataset kind '" + name + "'");
}

std::string to_string(SynthKind k) { return k == SynthKind::Star2d ? "star-2d" : "bumpy-sphere-3d"; }

SynthTarget parse_synth_target(const std::string& name)
{
    if (name == "pressure") return SynthTarget::Pressure;
    if (name == "curvature") return SynthTarget::Curvature;
    fail(ErrorKind::InvalidConfig, "unknown synthetic target '" + name + "'");
}

std::string to_string(SynthTarget t) { return t == SynthTarget::Pressure ? "pressure" : "curvature"; }

// ---------------------------------------------------------------------------
// Star curves

double StarCurve::r(double t) const
{
    double v = 1.0;
    for (std::size_t k = 2; k < a.size(); ++k) v += a[k] * std::cos(static_cast<double>(k) * t + phase[k]);
    return v;
}

double StarCurve::dr(double t) const
{
    double v = 0.0;
    for (std::size_t k = 2; k < a.size(); ++k) {
        const double kk = static_cast<double>(k);
        v -= a[k] * kk * std::sin(kk * t + phase[k]);
    }
    return v;
}

double StarCurve::ddr(double t) const
{
    double v = 0.0;
    for (std::size_t k = 2; k < a.size(); ++k) {
        const double kk = static_cast<double>(k);
        v -= a[k] * kk * kk * std::cos(kk * t + phase[k]);
    }
    return v;
}

Eigen::Vector2d StarCurve::point(double t) const
{
    const double rr = r(t);
    return {rr * std::cos(t), rr * std::sin(t)};
}

Eigen::Vector2d StarCurve::tangent(double t) const
{
    const double rr = r(t), d = dr(t), c = std::cos(t), s = std::sin(t);
    return {d * c - rr * s, d * s + rr * c};
}

Eigen::Vector2d StarCurve::outward_normal(double t) const
{
    const Eigen::Vector2d x1 = tangent(t);
    return Eigen::Vector2d(x1.y(), -x1.x()) / x1.norm();
}

double StarCurve::curvature(double t) const
{
    const double rr = r(t), d = dr(t), dd = ddr(t);
    return (rr * rr + 2.0 * d * d - rr * dd) / std::pow(rr * rr + d * d, 1.5);
}

namespace {

// 8-point Gauss-Legendre on [lo, hi] of |x'(t)|.
double arc_segment(const StarCurve& c, double lo, double hi)
{
    static const double x[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363};
    static const double w[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    double s = 0.0;
    for (int k = 0; k < 4; ++k)
        s += w[k] * (c.tangent(mid - half * x[k]).norm() + c.tangent(mid + half * x[k]).norm());
    return s * half;
}

constexpr std::size_t kArcCells = 2048;

}  // namespace

double StarCurve::length() const
{
    double s = 0.0;
    for (std::size_t k = 0; k < kArcCells; ++k)
        s += arc_segment(*this, 2.0 * kPi * static_cast<double>(k) / kArcCells,
                         2.0 * kPi * static_cast<double>(k + 1) / kArcCells);
    return s;
}

std::vector<double> StarCurve::arclength_parameters(std::size_t n) const
{
    std::vector<double> cum(kArcCells + 1, 0.0);
    const double dt = 2.0 * kPi / kArcCells;
    for (std::size_t k = 0; k < kArcCells; ++k)
        cum[k + 1] = cum[k] + arc_segment(*this, dt * static_cast<double>(k), dt * static_cast<double>(k + 1));
    const double L = cum.back();
    std::vector<double> ts(n);
    std::size_t cell = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = L * static_cast<double>(i) / static_cast<double>(n);
        while (cell + 1 < kArcCells && cum[cell + 1] <= s) ++cell;
        const double t0 = dt * static_cast<double>(cell);
        double t = t0 + dt * (s - cum[cell]) / (cum[cell + 1] - cum[cell]);
        for (int it = 0; it < 30; ++it) {
            const double f = cum[cell] + arc_segment(*this, t0, t) - s;
            const double step = f / tangent(t).norm();
            t -= step;
            if (std::abs(step) < 1e-15) break;
        }
        ts[i] = t;
    }
    return ts;
}

Eigen::VectorXd star_pressure(const StarCurve& c, const std::vector<double>& ts, std::size_t nodes)
{
    require(nodes >= 16 && nodes % 2 == 0, ErrorKind::InvalidConfig, "Nystrom node count must be even and >= 16");
    const auto N = static_cast<Eigen::Index>(nodes);
    const double h = 2.0 * kPi / static_cast<double>(N);
    std::vector<Eigen::Vector2d> x(nodes), x1(nodes), nrm(nodes);
    std::vector<double> speed(nodes), kappa(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
        const double t = h * static_cast<double>(j);
        x[j] = c.point(t);
        x1[j] = c.tangent(t);
        speed[j] = x1[j].norm();
        nrm[j] = c.outward_normal(t);
        kappa[j] = c.curvature(t);
    }

    // Kress weights for the periodic log kernel log|2 sin((t - tau) / 2)|.
    std::vector<double> R(nodes);
    for (std::size_t d = 0; d < nodes; ++d) {
        const double delta = h * static_cast<double>(d);
        double s = 0.0;
        for (std::size_t m = 1; m < nodes / 2; ++m) s += std::cos(static_cast<double>(m) * delta) / static_cast<double>(m);
        s += std::cos(static_cast<double>(nodes / 2) * delta) / static_cast<double>(N);
        R[d] = -h * s;
    }

    Eigen::MatrixXd A(N, N);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        double log_sum = 0.0;
        for (Eigen::Index j = 0; j < N; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            const double f = nrm[uj].x() * speed[uj];
            double kern, smooth_log;
            if (i == j) {
                kern = 0.5 * kappa[ui];
                smooth_log = std::log(speed[ui]);
            } else {
                const Eigen::Vector2d dxy = x[uj] - x[ui];
                kern = dxy.dot(nrm[uj]) / dxy.squaredNorm();
                const double tdiff = h * static_cast<double>(i - j);
                smooth_log = std::log(dxy.norm()) - std::log(std::abs(2.0 * std::sin(0.5 * tdiff)));
            }
            A(i, j) = (i == j ? 0.5 : 0.0) + kern * speed[uj] * h / (2.0 * kPi);
            log_sum += (R[(ui + nodes - uj) % nodes] + h * smooth_log) * f;
        }
        rhs(i) = -log_sum / (2.0 * kPi);
    }
    const Eigen::VectorXd phi = A.partialPivLu().solve(rhs);

    // Trigonometric interpolation of the disturbance potential.
    const std::size_t half = nodes / 2;
    std::vector<std::complex<double>> coef(half + 1);
    for (std::size_t m = 0; m <= half; ++m) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < nodes; ++j)
            acc += phi(static_cast<Eigen::Index>(j)) *
                   std::polar(1.0, -static_cast<double>(m) * h * static_cast<double>(j));
        coef[m] = acc / static_cast<double>(N);
    }
    Eigen::VectorXd cp(static_cast<Eigen::Index>(ts.size()));
    for (std::size_t q = 0; q < ts.size(); ++q) {
        const double t = ts[q];
        double dphi = 0.0;
        for (std::size_t m = 1; m < half; ++m) {
            const std::complex<double> e = std::polar(1.0, static_cast<double>(m) * t);
            dphi += 2.0 * (std::complex<double>(0.0, static_cast<double>(m)) * coef[m] * e).real();
        }
        const Eigen::Vector2d tan = c.tangent(t);
        const double ut = tan.x() / tan.norm() + dphi / tan.norm();
        cp(static_cast<Eigen::Index>(q)) = 1.0 - ut * ut;
    }
    return cp;
}

// ---------------------------------------------------------------------------
// Bumpy spheres

double BumpySphere::r(const Vec3& u) const
{
    double v = 1.0;
    for (std::size_t j = 0; j < dirs.size(); ++j) v += amps[j] * std::exp(sharpness * (dirs[j].dot(u) - 1.0));
    return v;
}

double BumpySphere::implicit(const Vec3& x) const
{
    const double n = x.norm();
    return n - r(x / n);
}

Vec3 BumpySphere::gradient(const Vec3& x) const
{
    const double n = x.norm();
    const Vec3 u = x / n;
    Vec3 g = Vec3::Zero();
    for (std::size_t j = 0; j < dirs.size(); ++j)
        g += amps[j] * sharpness * std::exp(sharpness * (dirs[j].dot(u) - 1.0)) * dirs[j];
    return u - (g - u * u.dot(g)) / n;
}

double BumpySphere::mean_curvature(const Vec3& x, double h) const
{
    Eigen::Matrix3d H;
    for (int b = 0; b < 3; ++b) {
        Vec3 e = Vec3::Zero();
        e(b) = h;
        H.col(b) = (-gradient(x + 2.0 * e) + 8.0 * gradient(x + e) - 8.0 * gradient(x - e) + gradient(x - 2.0 * e)) /
                   (12.0 * h);
    }
    H = 0.5 * (H + H.transpose()).eval();
    const Vec3 g = gradient(x);
    const double gn = g.norm();
    return 0.5 * (H.trace() / gn - g.dot(H * g) / (gn * gn * gn));
}

Points fibonacci_sphere(std::size_t n)
{
    require(n >= 1, ErrorKind::InvalidInput, "fibonacci_sphere needs n >= 1");
    Points p(static_cast<Eigen::Index>(n), 3);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * static_cast<double>(i);
        p.row(static_cast<Eigen::Index>(i)) << rho * std::cos(phi), rho * std::sin(phi), z;
    }
    return p;
}

// ---------------------------------------------------------------------------

namespace {

SynthInstance make_star(std::size_t index, std::uint64_t seed, const SynthOptions& o)
{
    auto rng = instance_rng(seed, index);
    std::uniform_real_distribution<double> U(-1.0, 1.0), P(0.0, 2.0 * kPi);
    StarCurve c;
    c.a.assign(static_cast<std::size_t>(std::max(o.max_harmonic, 1)) + 1, 0.0);
    c.phase.assign(c.a.size(), 0.0);
    for (std::size_t k = 2; k < c.a.size(); ++k) {
        c.a[k] = o.amplitude / static_cast<double>(k) * U(rng);
        c.phase[k] = P(rng);
    }

    SynthInstance inst;
    inst.tag = make_tag("star", index);
    const auto ts = c.arclength_parameters(o.points);
    const auto n = static_cast<Eigen::Index>(o.points);
    Points pts(n, 3), nrm(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = ts[static_cast<std::size_t>(i)];
        const Eigen::Vector2d x = c.point(t), nn = c.outward_normal(t);
        pts.row(i) << x.x(), x.y(), 0.0;
        nrm.row(i) << nn.x(), nn.y(), 0.0;
    }
    inst.cloud = make_cloud(pts, nrm, inst.tag);
    inst.total_area = c.length();
    inst.frontal_area = pts.col(1).maxCoeff() - pts.col(1).minCoeff();

    inst.target.resize(n, 1);
    if (o.target == SynthTarget::Curvature) {
        for (Eigen::Index i = 0; i < n; ++i) inst.target(i, 0) = c.curvature(ts[static_cast<std::size_t>(i)]);
    } else {
        std::size_t nodes = o.quadrature_nodes;
        for (;;) {
            const Eigen::VectorXd coarse = star_pressure(c, ts, nodes);
            const Eigen::VectorXd fine = star_pressure(c, ts, 2 * nodes);
            inst.refinement_delta = (coarse - fine).cwiseAbs().maxCoeff();
            inst.target.col(0) = fine;
            if (inst.refinement_delta < 1e-6 || nodes >= 2048) break;
            nodes *= 2;
        }
    }
    inst.cd = drag_coefficient(inst.target.col(0), nrm, nullptr, 1.0, inst.frontal_area, Vec3::UnitX(),
                               inst.total_area);
    return inst;
}

SynthInstance make_bumpy(std::size_t index, std::uint64_t seed, const SynthOptions& o)
{
    auto rng = instance_rng(seed, index);
    std::normal_distribution<double> G(0.0, 1.0);
    std::uniform_real_distribution<double> A(-0.15, 0.3);
    BumpySphere s;
    s.sharpness = o.bump_sharpness;
    for (int j = 0; j < o.bumps; ++j) {
        Vec3 d(G(rng), G(rng), G(rng));
        s.dirs.push_back(d.normalized());
        s.amps.push_back(A(rng));
    }

    SynthInstance inst;
    inst.tag = make_tag("bumpy", index);
    const Points dirs = fibonacci_sphere(o.points);
    const auto n = dirs.rows();
    Points pts(n, 3), nrm(n, 3);
    Eigen::VectorXd measure(n);
    inst.target.resize(n, 1);
    double delta = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 u = dirs.row(i).transpose();
        const double rr = s.r(u);
        const Vec3 x = rr * u;
        const Vec3 nn = s.gradient(x).normalized();
        pts.row(i) = x.transpose();
        nrm.row(i) = nn.transpose();
        measure(i) = 4.0 * kPi / static_cast<double>(n) * rr * rr / nn.dot(u);
        const double H = s.mean_curvature(x, 1e-3);
        delta = std::max(delta, 0.25 * std::abs(H - s.mean_curvature(x, 2e-3)));
        inst.target(i, 0) = nn.x() + 0.25 * H;
    }
    inst.cloud = make_cloud(pts, nrm, inst.tag);
    inst.refinement_delta = delta;
    inst.total_area = measure.sum();
    double ryz = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ryz = std::max(ryz, std::hypot(pts(i, 1), pts(i, 2)));
    inst.frontal_area = kPi * ryz * ryz;
    inst.cd = drag_coefficient(inst.target.col(0), nrm, &measure, 1.0, inst.frontal_area, Vec3::UnitX());
    return inst;
}

}  // namespace

std::vector<SynthInstance> synth_dataset(SynthKind kind, std::size_t count, std::uint64_t seed,
                                         const SynthOptions& opts)
{
    require(count >= 1, ErrorKind::InvalidInput, "synthetic dataset needs count >= 1");
    require(opts.points >= 4, ErrorKind::InvalidConfig, "synthetic instances need at least 4 points");
    std::vector<SynthInstance> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(kind == SynthKind::Star2d ? make_star(i, seed, opts) : make_bumpy(i, seed, opts));
    return out;
}

}  // namespace otgeo

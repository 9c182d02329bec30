#pragma once

#include "otgeo/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace otgeo {

enum class SynthKind { Star2d, BumpySphere3d };
enum class SynthTarget { Pressure, Curvature };

SynthKind parse_synth_kind(const std::string& name);
std::string to_string(SynthKind k);
SynthTarget parse_synth_target(const std::string& name);
std::string to_string(SynthTarget t);

struct SynthOptions {
    std::size_t points = 1000;
    SynthTarget target = SynthTarget::Pressure;
    /// star-2d: harmonics k = 2..max_harmonic with amplitude ~ amplitude / k.
    int max_harmonic = 5;
    double amplitude = 0.25;
    /// star-2d pressure solve resolution (doubled for the self-check).
    std::size_t quadrature_nodes = 256;
    /// bumpy-sphere: bump count and sharpness.
    int bumps = 6;
    double bump_sharpness = 4.0;
};

struct SynthInstance {
    std::string tag;
    PointCloud cloud;           // with analytic unit normals
    Eigen::MatrixXd target;     // n x 1
    double cd = 0.0;            // drag coefficient of the target field
    double frontal_area = 1.0;  // A used for cd
    double total_area = 1.0;    // surface measure (arc length in 2D)
    /// max |target(N) - target(2N)| from the self-check at generation time.
    double refinement_delta = 0.0;
};

/// Deterministic in (kind, count, seed, options).
std::vector<SynthInstance> synth_dataset(SynthKind kind, std::size_t count, std::uint64_t seed,
                                         const SynthOptions& opts = {});

// ---------------------------------------------------------------------------
// Building blocks, exposed for verification.

/// Closed star curve r(t) = 1 + sum_k a_k cos(k t + phase_k) in the z = 0 plane.
struct StarCurve {
    std::vector<double> a;      // a[k] for k = 0..K (a[0], a[1] unused)
    std::vector<double> phase;  // same indexing

    double r(double t) const;
    double dr(double t) const;
    double ddr(double t) const;
    Eigen::Vector2d point(double t) const;
    Eigen::Vector2d tangent(double t) const;  // derivative w.r.t. t (not unit)
    Eigen::Vector2d outward_normal(double t) const;
    double curvature(double t) const;
    double length() const;
    /// n parameters equally spaced in arc length, starting at t = 0.
    std::vector<double> arclength_parameters(std::size_t n) const;
};

/// Pressure coefficient 1 - |u_t|^2 of unit potential flow along +x past the
/// curve, evaluated at parameters `ts`, using `nodes` Nystrom nodes.
Eigen::VectorXd star_pressure(const StarCurve& c, const std::vector<double>& ts, std::size_t nodes);

/// Radially perturbed sphere r(u) = 1 + sum_j a_j exp(s (d_j . u - 1)).
struct BumpySphere {
    std::vector<Vec3> dirs;
    std::vector<double> amps;
    double sharpness = 4.0;

    double r(const Vec3& u) const;
    double implicit(const Vec3& x) const;  // |x| - r(x/|x|)
    Vec3 gradient(const Vec3& x) const;
    /// Mean curvature from finite differences of the implicit function (step h).
    double mean_curvature(const Vec3& x, double h) const;
};

/// n quasi-uniform unit directions (Fibonacci lattice).
Points fibonacci_sphere(std::size_t n);

}  // namespace otgeo

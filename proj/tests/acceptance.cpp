// One PASS/FAIL line per acceptance criterion. Exit status 0 only when all pass.

#include "oracles.hpp"

#include "otgeo/coupling.hpp"
#include "otgeo/drag.hpp"
#include "otgeo/error.hpp"
#include "otgeo/ot_map.hpp"
#include "otgeo/ot_plan.hpp"
#include "otgeo/pipeline.hpp"
#include "otgeo/spectral_operator.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace otgeo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::VectorXd uniform(Eigen::Index n) { return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

Outcome sinkhorn_vs_exact()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> size(2, 64);
    double worst_gap = 0.0, worst_res = 0.0;
    bool ok = true;
    for (int rep = 0; rep < 50; ++rep) {
        const int n1 = size(rng), n2 = size(rng);
        const CostMatrix M = cost_matrix(oracle::random_points(static_cast<std::size_t>(n1), rng),
                                         oracle::random_points(static_cast<std::size_t>(n2), rng));
        SinkhornConfig cfg;
        cfg.beta = 1e6;
        cfg.beta_relative = true;
        cfg.max_iters = 50000;
        const TransportPlan p = sinkhorn(M, uniform(n1), uniform(n2), cfg);
        const double exact = oracle::exact_uniform_transport_cost(M.entries);
        const double gap = (p.cost - exact) / exact;
        worst_gap = std::max(worst_gap, gap);
        worst_res = std::max({worst_res, p.row_residual, p.col_residual});
        ok = ok && p.cost >= exact * (1.0 - 1e-12) && gap < 1e-2 && p.row_residual < 1e-9 && p.col_residual < 1e-9;
    }
    const double t = seconds_since(t0);
    return {ok && t < 30.0, fmt("max gap %.3g, max residual %.3g, %.1f s", worst_gap, worst_res, t)};
}

Outcome exact_sparsity()
{
    std::mt19937_64 rng(102);
    std::uniform_int_distribution<int> size(2, 64);
    int worst_slack = 1 << 30;
    double worst_cost = 0.0;
    bool ok = true;
    for (int rep = 0; rep < 50; ++rep) {
        const int n1 = size(rng), n2 = std::min(size(rng), 10000 / n1);
        const CostMatrix M = cost_matrix(oracle::random_points(static_cast<std::size_t>(n1), rng),
                                         oracle::random_points(static_cast<std::size_t>(n2), rng));
        const TransportPlan p = exact_plan_lp(M, uniform(n1), uniform(n2));
        const double ref = oracle::exact_uniform_transport_cost(M.entries);
        worst_cost = std::max(worst_cost, std::abs(p.cost - ref) / ref);
        const int slack = n1 + n2 - 1 - static_cast<int>(p.nonzeros());
        worst_slack = std::min(worst_slack, slack);
        ok = ok && slack >= 0;
    }
    return {ok && worst_cost < 1e-9,
            fmt("min (n1+n2-1 - nnz) = %.0f, max cost deviation from oracle %.3g", worst_slack, worst_cost)};
}

Outcome ot_1d_brute_force()
{
    std::mt19937_64 rng(103);
    std::uniform_int_distribution<int> len(1, 7);
    std::normal_distribution<double> g;
    int mismatches = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = len(rng);
        std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
        for (auto& v : x) v = g(rng);
        for (auto& v : y) v = g(rng);
        const auto ref = oracle::brute_force_assignment(x, y);
        const Eigen::VectorXd out =
            ot_1d(Eigen::Map<Eigen::VectorXd>(x.data(), n), Eigen::Map<Eigen::VectorXd>(y.data(), n));
        for (int i = 0; i < n; ++i) mismatches += out(i) != ref[static_cast<std::size_t>(i)];
    }
    return {mismatches == 0, fmt("%.0f mismatched entries over 100 instances", mismatches)};
}

Outcome ppmm_steps()
{
    std::mt19937_64 rng(104);
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        const Points X = oracle::random_points(256, rng);
        Points Y = oracle::random_points(256, rng, 0.7);
        Y.col(rep % 3).array() += 1.5;
        // Replaying the prefix of length k reproduces the state after step k.
        const auto sorted = [](Eigen::VectorXd v) {
            std::sort(v.data(), v.data() + v.size());
            return v;
        };
        for (int k = 1; k <= 50; ++k) {
            PpmmConfig cfg;
            cfg.max_iters = k;
            cfg.tol = 0.0;
            cfg.seed = static_cast<std::uint64_t>(rep);
            const MongeMapResult r = ppmm(X, Y, cfg);
            if (r.iterations != k) return {false, fmt("instance %.0f stopped at %.0f of %.0f", rep, r.iterations, k)};
            const Vec3 e = r.directions.back();
            worst = std::max(worst, (sorted(r.transported * e) - sorted(Y * e)).cwiseAbs().maxCoeff());
        }
    }
    return {worst <= 1e-12, fmt("max sorted-projection difference %.3g", worst)};
}

Outcome ppmm_gaussian()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(105);
    const Eigen::Index n = 2048;
    const Points X = oracle::random_points(n, rng);
    Points Y = oracle::random_points(n, rng);
    Y.col(0).array() += 3.0;
    Y.col(1) *= 2.0;
    Y.col(2) *= 0.5;
    PpmmConfig cfg;
    cfg.max_iters = 300;
    cfg.tol = 0.0;
    const MongeMapResult r = ppmm(X, Y, cfg);
    const double t = seconds_since(t0);
    const Eigen::RowVector3d mx = r.transported.colwise().mean(), my = Y.colwise().mean();
    const Eigen::Matrix3d cx = (r.transported.rowwise() - mx).transpose() * (r.transported.rowwise() - mx) / double(n);
    const Eigen::Matrix3d cy = (Y.rowwise() - my).transpose() * (Y.rowwise() - my) / double(n);
    const double dm = (mx - my).norm(), dc = (cx - cy).norm();
    return {dm < 0.05 && dc < 0.1 && t < 60.0, fmt("mean error %.3g, covariance error %.3g, %.1f s", dm, dc, t)};
}

Outcome nn_exactness()
{
    std::mt19937_64 rng(106);
    std::size_t mismatches = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const PointCloud cloud = make_cloud(oracle::random_points(500, rng));
        const Points transported = oracle::random_points(700, rng);
        const IndexMap map = build_index_map(transported, cloud);
        for (Eigen::Index l = 0; l < 700; ++l)
            mismatches += map.encoder[static_cast<std::size_t>(l)] != oracle::nearest(cloud.points, transported, l);
        for (Eigen::Index p = 0; p < 500; ++p)
            mismatches += map.decoder[static_cast<std::size_t>(p)] != oracle::nearest(transported, cloud.points, p);
    }
    return {mismatches == 0, fmt("%.0f mismatched indices over 20 instances", static_cast<double>(mismatches))};
}

Outcome round_trip()
{
    std::mt19937_64 rng(107);
    const Points x = oracle::random_points(400, rng);
    const IndexMap map = build_index_map(x, make_cloud(x));
    int exact = 0;
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::MatrixXd a = random_matrix(400, 1 + rep % 3, rng);
        exact += decode_solution(encode_function(a, map), map) == a;
    }
    return {exact == 10, fmt("%.0f of 10 fields reproduced bit-exactly", exact)};
}

Outcome gradient_check()
{
    double worst = 0.0;
    const std::size_t side = 8;
    for (std::uint64_t seed : {1, 2, 3}) {
        std::mt19937_64 rng(200 + seed);
        OperatorConfig cfg;
        cfg.in_channels = 5;
        cfg.width = 4;
        cfg.layers = 2;
        cfg.modes1 = cfg.modes2 = 4;
        cfg.out_channels = 1;
        SpectralOperator op(cfg, seed);
        const Eigen::MatrixXd F = random_matrix(64, 5, rng);
        const Eigen::MatrixXd T = random_matrix(64, 1, rng);
        const auto loss = [&] { return 0.5 * (op.forward(F, side) - T).squaredNorm(); };
        SpectralOperator::Cache cache;
        const Eigen::MatrixXd out = op.forward(F, side, &cache);
        std::vector<double> grad(op.parameter_count(), 0.0);
        op.backward(cache, out - T, grad);
        for (const auto& b : op.blocks()) {
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < b.size; ++k) {
                double& p = op.params()[b.offset + k];
                const double keep = p;
                p = keep + 1e-5;
                const double lp = loss();
                p = keep - 1e-5;
                const double lm = loss();
                p = keep;
                const double fd = (lp - lm) / 2e-5;
                num += (fd - grad[b.offset + k]) * (fd - grad[b.offset + k]);
                den += fd * fd;
            }
            worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
        }
    }
    return {worst < 1e-4, fmt("max blockwise relative error %.3g", worst)};
}

Outcome forward_oracle()
{
    std::mt19937_64 rng(108);
    double worst = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        const int m = 8, w = 4, modes = 2 + rep % 3;
        const Eigen::MatrixXd H = random_matrix(m * m, w, rng);
        std::vector<double> W(static_cast<std::size_t>(2 * modes * modes * w * w * 2));
        std::normal_distribution<double> g;
        for (auto& v : W) v = g(rng);
        const Eigen::MatrixXd fast = spectral_conv(H, m, W.data(), w, modes, modes);
        const Eigen::MatrixXd slow = oracle::naive_spectral_conv(H, m, W.data(), w, modes, modes);
        worst = std::max(worst, (fast - slow).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-8, fmt("max deviation from the direct DFT %.3g", worst)};
}

Outcome drag()
{
    const auto q = oracle::sphere_quadrature(200, 400);
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(q.weights.size(), 2.5);
    const double cd_const = drag_coefficient(p, q.nodes, &q.weights, 1.0, M_PI, Vec3::UnitX());
    // Quadrature oracle for p = n_x: (2 / A) * sum_k n_x^2 w_k.
    double ref = 0.0;
    for (Eigen::Index k = 0; k < q.weights.size(); ++k) ref += q.nodes(k, 0) * q.nodes(k, 0) * q.weights(k);
    ref *= 2.0 / M_PI;
    const std::size_t n = 10000;
    const Points u = fibonacci_sphere(n);
    const double cd_x = drag_coefficient(u.col(0), u, nullptr, 1.0, M_PI, Vec3::UnitX(), 4.0 * M_PI);
    const double rel = std::abs(cd_x - ref) / ref;
    return {std::abs(cd_const) < 1e-8 && rel < 0.01,
            fmt("|Cd| constant %.3g; p = n_x: %.6f vs oracle %.6f", std::abs(cd_const), cd_x, ref)};
}

PipelineConfig e2e_config()
{
    return config_from_json(nlohmann::json::parse(R"({
        "voxel_size": 0,
        "latent": {"shape": "torus", "alpha": 3},
        "ot": {"method": "plan", "beta": 30, "beta_relative": true, "anneal": false, "tol": 1e-3, "strategy": "mean"},
        "coupling": {"normal_features": "cross"},
        "model": {"width": 16, "layers": 3, "modes": [8, 8]},
        "train": {"epochs": 30, "batch_size": 4, "lr": 0.003, "lr_schedule": "cosine"}
    })"));
}

Outcome end_to_end(const fs::path& work)
{
    const fs::path root = work / "e2e";
    fs::remove_all(root);
    const PipelineConfig cfg = e2e_config();
    SynthOptions so;
    so.points = 1000;

    std::vector<RunReport> evals;
    std::vector<RunReport> trains;
    double first_seconds = 0.0;
    for (const char* name : {"first", "second"}) {
        const auto t0 = std::chrono::steady_clock::now();
        const DatasetManifest m = write_synth_dataset(root / name / "data", SynthKind::Star2d, {200, 0, 50}, 11, so);
        const ExperimentResult r = run_experiment(m, cfg, root / name / "out");
        if (evals.empty()) first_seconds = seconds_since(t0);
        trains.push_back(r.train);
        evals.push_back(r.eval);
    }
    const double err = evals[0].metric("test_rel_l2");
    const bool identical = evals[0].metrics == evals[1].metrics && trains[0].metrics == trains[1].metrics;
    return {err < 0.10 && first_seconds < 900.0 && identical,
            fmt("test rel-L2 %.4f, first run %.0f s, ", err, first_seconds) +
                (identical ? "rerun bit-identical" : "rerun metrics differ")};
}

Outcome ablations(const fs::path& work)
{
    const fs::path root = work / "ablation";
    fs::remove_all(root);
    SynthOptions so;
    so.points = 300;
    const DatasetManifest m = write_synth_dataset(root / "data", SynthKind::Star2d, {12, 0, 4}, 12, so);
    PipelineConfig cfg = e2e_config();
    cfg.model.width = 8;
    cfg.model.layers = 2;
    cfg.model.modes1 = cfg.model.modes2 = 4;
    cfg.train.epochs = 5;
    const auto rows = ablation_sweep(m, cfg, root / "out");
    std::set<std::string> hashes;
    std::size_t ok = 0;
    for (const auto& r : rows) {
        hashes.insert(r.config_hash);
        ok += r.ok && std::isfinite(r.test_rel_l2) && std::isfinite(r.test_mse);
    }
    std::size_t csv_rows = 0;
    {
        std::ifstream in(root / "out" / "ablation.csv");
        for (std::string line; std::getline(in, line);) csv_rows += !line.empty();
    }
    const bool pass = rows.size() == 12 && ok == 12 && hashes.size() == 12 && csv_rows == 13;
    return {pass, fmt("%.0f runs succeeded, %.0f distinct hashes, %.0f csv rows", static_cast<double>(ok),
                      static_cast<double>(hashes.size()), static_cast<double>(csv_rows ? csv_rows - 1 : 0))};
}

Outcome convergence(const fs::path& work)
{
    const fs::path root = work / "convergence";
    fs::remove_all(root);
    SynthOptions so;
    so.points = 1000;
    const DatasetManifest m = write_synth_dataset(root / "data", SynthKind::Star2d, {40, 0, 10}, 13, so);
    const ConvergenceResult r = convergence_study(m, e2e_config(), {0.25, 0.5, 1.0}, root / "out");
    bool ok = r.rows.size() == 3;
    std::ostringstream detail;
    detail << "errors";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        ok = ok && r.rows[i].ok;
        if (i > 0) ok = ok && r.rows[i].error <= r.rows[i - 1].error;
        detail << ' ' << fmt("%.4f", r.rows[i].error);
    }
    ok = ok && r.slope.has_value();
    detail << ", slope " << (r.slope ? fmt("%.3f", *r.slope) : std::string("undefined"));
    return {ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks"};
    std::string work = "acceptance_work";
    std::vector<int> only;
    app.add_option("--work", work, "scratch directory");
    app.add_option("--only", only, "run a subset of criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"sinkhorn vs exact transport", sinkhorn_vs_exact},
        {"exact plan sparsity", exact_sparsity},
        {"1D transport vs brute force", ot_1d_brute_force},
        {"PPMM per-step exactness", ppmm_steps},
        {"PPMM Gaussian transport", ppmm_gaussian},
        {"nearest-neighbour indices", nn_exactness},
        {"encode/decode round trip", round_trip},
        {"operator gradient check", gradient_check},
        {"spectral forward vs direct DFT", forward_oracle},
        {"drag coefficient", drag},
        {"end-to-end learnability", [&] { return end_to_end(work); }},
        {"ablation plumbing", [&] { return ablations(work); }},
        {"convergence harness", [&] { return convergence(work); }},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << "  " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}

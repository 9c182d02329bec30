// otgeo command line: preprocessing, OT solves, embedding, training and studies.

#include "otgeo/config.hpp"
#include "otgeo/coupling.hpp"
#include "otgeo/error.hpp"
#include "otgeo/geometry.hpp"
#include "otgeo/latent_mesh.hpp"
#include "otgeo/ot_plan.hpp"
#include "otgeo/parallel.hpp"
#include "otgeo/pipeline.hpp"
#include "otgeo/report.hpp"
#include "otgeo/synth.hpp"
#include "otgeo/tensor_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace otgeo;

namespace {

struct Common {
    std::string config;
    std::string manifest;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    int threads = 0;
};

void add_common(CLI::App* app, Common& c, bool needs_manifest)
{
    app->add_option("--config", c.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
    auto* m = app->add_option("--manifest", c.manifest, "Dataset manifest (JSON)")->check(CLI::ExistingFile);
    if (needs_manifest) m->required();
    app->add_option("--out", c.out, "Output directory");
    app->add_option("--seed", c.seed, "Seed override (config seed and train seed)");
    app->add_option("--threads", c.threads, "Worker cap (also OTGEO_THREADS)")->check(CLI::NonNegativeNumber);
}

PipelineConfig resolve_config(const Common& c)
{
    PipelineConfig cfg = c.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(c.config);
    if (c.seed) {
        cfg.seed = *c.seed;
        cfg.train.seed = *c.seed;
    }
    if (c.threads > 0) cfg.threads = c.threads;
    if (cfg.threads > 0) set_worker_limit(static_cast<std::size_t>(cfg.threads));
    return cfg;
}

void print_metrics(const RunReport& r)
{
    for (const auto& [k, v] : r.metrics) std::printf("%s=%s\n", k.c_str(), format_double(v).c_str());
}

PointCloud load_any(const std::string& path) { return load_point_cloud(path, cloud_format_from_extension(path)); }

void save_any(const fs::path& path, const PointCloud& c)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (path.extension() == ".csv") save_csv(path, c);
    else
        save_raw_f64(path, c.points, c.normals ? &*c.normals : nullptr);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"otgeo: optimal-transport latent embedding and spectral operator learning for surface data"};
    app.require_subcommand(1);

    // downsample
    auto* ds = app.add_subcommand("downsample", "Voxel-downsample a point cloud");
    std::string ds_in, ds_out, ds_rule = "centroid";
    double ds_voxel = 0.05;
    int ds_normals = 0;
    ds->add_option("input", ds_in, "Input cloud (.obj, .ply, .csv, .otg)")->required()->check(CLI::ExistingFile);
    ds->add_option("--voxel-size", ds_voxel, "Voxel edge length")->check(CLI::PositiveNumber);
    ds->add_option("--rule", ds_rule, "centroid | first-point");
    ds->add_option("--estimate-normals", ds_normals, "Estimate normals with k neighbours (0 = off)");
    ds->add_option("--out", ds_out, "Output file (.otg or .csv)")->required();

    // mesh-gen
    auto* mg = app.add_subcommand("mesh-gen", "Generate a latent grid");
    std::string mg_shape = "torus", mg_out = "latent";
    std::size_t mg_side = 0, mg_n1 = 0;
    double mg_alpha = 3.0;
    LatentParams mg_params;
    mg->add_option("--shape", mg_shape, "torus | sphere | plane | hemisphere");
    mg->add_option("--side", mg_side, "Grid side m");
    mg->add_option("--n1", mg_n1, "Physical point count (m from alpha)");
    mg->add_option("--alpha", mg_alpha, "Latent/physical count ratio");
    mg->add_option("--torus-R", mg_params.torus_R);
    mg->add_option("--torus-r", mg_params.torus_r);
    mg->add_option("--sphere-radius", mg_params.sphere_radius);
    mg->add_option("--plane-extent", mg_params.plane_extent);
    mg->add_option("--out", mg_out, "Output directory");

    // ot-solve
    auto* os = app.add_subcommand("ot-solve", "Solve the entropic plan between a latent grid and a cloud");
    std::string os_phys, os_latent, os_shape = "torus", os_strategy = "mean", os_out = "ot";
    double os_alpha = 3.0;
    bool os_oracle = false, os_fit = true;
    SinkhornConfig os_cfg;
    os->add_option("physical", os_phys, "Physical cloud")->required()->check(CLI::ExistingFile);
    os->add_option("--latent", os_latent, "Latent points file (default: generated grid)")->check(CLI::ExistingFile);
    os->add_option("--shape", os_shape, "Latent shape when generating");
    os->add_option("--alpha", os_alpha, "Latent/physical count ratio when generating");
    os->add_option("--fit-bbox", os_fit, "Fit the generated grid to the cloud's bounding box");
    os->add_option("--beta", os_cfg.beta, "Inverse temperature");
    os->add_flag("--beta-relative", os_cfg.beta_relative, "Interpret beta relative to 1/median(M)");
    os->add_option("--max-iters", os_cfg.max_iters);
    os->add_option("--tol", os_cfg.marginal_tol, "Marginal L1 tolerance");
    bool os_no_anneal = false;
    os->add_flag("--no-anneal", os_no_anneal, "Solve directly at the target temperature");
    os->add_option("--strategy", os_strategy, "matrix | max | mean");
    os->add_flag("--oracle", os_oracle, "Also solve the exact LP (small instances) and print the cost gap");
    os->add_option("--out", os_out, "Output directory");

    // synth
    auto* sy = app.add_subcommand("synth", "Write a synthetic dataset and its manifest");
    std::string sy_kind = "star-2d", sy_target = "pressure", sy_out = "data";
    SynthSplit sy_split{8, 0, 2};
    std::uint64_t sy_seed = 0;
    SynthOptions sy_opts;
    sy->add_option("--kind", sy_kind, "star-2d | bumpy-sphere-3d");
    sy->add_option("--target", sy_target, "pressure | curvature");
    sy->add_option("--train", sy_split.train);
    sy->add_option("--val", sy_split.val);
    sy->add_option("--test", sy_split.test);
    sy->add_option("--points", sy_opts.points, "Points per instance");
    sy->add_option("--seed", sy_seed);
    sy->add_option("--out", sy_out, "Output directory");

    Common ec, tc, vc, sc;
    auto* em = app.add_subcommand("embed", "Embed every manifest instance into its latent grid");
    add_common(em, ec, true);
    auto* tr = app.add_subcommand("train", "Train the latent operator on embedded data");
    add_common(tr, tc, true);
    auto* ev = app.add_subcommand("eval", "Evaluate a trained model on the test split");
    add_common(ev, vc, true);
    std::string ev_ckpt;
    bool ev_full = false;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint (default: the run directory's model)");
    ev->add_flag("--full-resolution", ev_full, "Evaluate on the points before subsampling");
    auto* sw = app.add_subcommand("sweep", "Run an ablation or convergence study");
    add_common(sw, sc, true);
    std::string sw_kind = "ablation";
    std::vector<double> sw_rates{0.25, 0.5, 1.0};
    sw->add_option("--kind", sw_kind, "ablation | convergence")->check(CLI::IsMember({"ablation", "convergence"}));
    sw->add_option("--rates", sw_rates, "Sampling rates for the convergence study")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (ds->parsed()) {
            PointCloud c = load_any(ds_in);
            VoxelConfig vcfg{ds_voxel, ds_rule == "first-point" ? VoxelRule::FirstPoint : VoxelRule::Centroid};
            require(ds_rule == "centroid" || ds_rule == "first-point", ErrorKind::InvalidConfig,
                    "unknown rule '" + ds_rule + "'");
            PointCloud d = voxel_downsample(c, vcfg);
            if (ds_normals > 0) d = estimate_normals(d, ds_normals);
            save_any(ds_out, d);
            std::printf("points_in=%zu points_out=%zu\n", c.size(), d.size());
        } else if (mg->parsed()) {
            require(mg_side > 0 || mg_n1 > 0, ErrorKind::InvalidConfig, "give --side or --n1");
            const std::size_t m = mg_side > 0 ? mg_side : grid_size_for(mg_n1, mg_alpha);
            const LatentShape shape = parse_latent_shape(mg_shape);
            const LatentGrid g = generate_grid(shape, m, mg_params);
            fs::create_directories(mg_out);
            save_raw_f64(fs::path(mg_out) / "grid.otg", g.points, &g.normals);
            nlohmann::json meta{{"shape", to_string(shape)},
                                {"m", m},
                                {"torus_R", mg_params.torus_R},
                                {"torus_r", mg_params.torus_r},
                                {"sphere_radius", mg_params.sphere_radius},
                                {"plane_extent", mg_params.plane_extent},
                                {"periodic", {g.periodic[0], g.periodic[1]}}};
            write_json(fs::path(mg_out) / "grid.json", meta);
            std::printf("m=%zu points=%zu\n", m, g.size());
        } else if (os->parsed()) {
            const PointCloud phys = load_any(os_phys);
            Points latent;
            if (!os_latent.empty()) {
                latent = load_any(os_latent).points;
            } else {
                LatentGrid g = generate_grid(parse_latent_shape(os_shape), grid_size_for(phys.size(), os_alpha));
                if (os_fit) fit_to_box(g, bounding_box(phys.points));
                latent = g.points;
            }
            const PlanStrategy strategy = parse_plan_strategy(os_strategy);
            os_cfg.anneal = !os_no_anneal;
            const CostMatrix M = cost_matrix(latent, phys.points);
            const Eigen::VectorXd a = uniform_weights(static_cast<std::size_t>(latent.rows()));
            Stopwatch clock;
            const TransportPlan plan = sinkhorn(M, a, phys.weights, os_cfg);
            const double seconds = clock.seconds();
            const StrategyResult sr = plan_strategy(plan, phys, strategy);
            const IndexList idx = strategy == PlanStrategy::Matrix ? encoder_indices(sr.points, phys, 1) : sr.provenance;
            fs::create_directories(os_out);
            save_indices(fs::path(os_out) / "indices.otix", idx);
            save_raw_f64(fs::path(os_out) / "transported.otg", sr.points);

            std::vector<std::string> header{"n2",        "n1",           "beta",         "beta_effective", "cost",
                                            "iterations", "row_residual", "col_residual", "converged",      "seconds"};
            std::vector<std::string> row{std::to_string(latent.rows()), std::to_string(phys.size()),
                                         format_double(plan.beta), format_double(plan.beta_effective),
                                         format_double(plan.cost), std::to_string(plan.iterations),
                                         format_double(plan.row_residual), format_double(plan.col_residual),
                                         plan.converged ? "1" : "0", format_double(seconds)};
            if (os_oracle) {
                const TransportPlan exact = exact_plan_lp(M, a, phys.weights);
                header.insert(header.end(), {"exact_cost", "relative_gap"});
                row.push_back(format_double(exact.cost));
                row.push_back(format_double((plan.cost - exact.cost) / std::abs(exact.cost)));
            }
            write_csv(fs::path(os_out) / "summary.csv", header, {row});
            for (std::size_t i = 0; i < header.size(); ++i)
                std::printf("%s%s", i ? "," : "", header[i].c_str());
            std::printf("\n");
            for (std::size_t i = 0; i < row.size(); ++i) std::printf("%s%s", i ? "," : "", row[i].c_str());
            std::printf("\n");
            if (!plan.converged) return 1;
        } else if (sy->parsed()) {
            sy_opts.target = parse_synth_target(sy_target);
            const DatasetManifest m = write_synth_dataset(sy_out, parse_synth_kind(sy_kind), sy_split, sy_seed, sy_opts);
            std::printf("manifest=%s entries=%zu\n", (fs::path(sy_out) / "manifest.json").string().c_str(),
                        m.entries.size());
        } else if (em->parsed()) {
            const PipelineConfig cfg = resolve_config(ec);
            const DatasetManifest m = load_manifest(ec.manifest);
            const EmbedSummary s = cmd_embed(m, cfg, ec.out);
            std::size_t cached = 0;
            for (const auto& i : s.instances) {
                cached += i.cached ? 1 : 0;
                if (!i.ok) std::fprintf(stderr, "embed failed: %s: %s\n", i.tag.c_str(), i.error.c_str());
            }
            std::printf("embed_hash=%s instances=%zu cached=%zu failed=%zu dir=%s\n", s.embed_hash.c_str(),
                        s.instances.size(), cached, s.failures(), s.dir.string().c_str());
            return s.failures() == 0 ? 0 : 1;
        } else if (tr->parsed()) {
            const PipelineConfig cfg = resolve_config(tc);
            const RunReport r = cmd_train(load_manifest(tc.manifest), cfg, tc.out);
            std::printf("config_hash=%s run=%s\n", r.config_hash.c_str(), run_dir(tc.out, cfg).string().c_str());
            print_metrics(r);
        } else if (ev->parsed()) {
            const PipelineConfig cfg = resolve_config(vc);
            std::optional<fs::path> ckpt;
            if (!ev_ckpt.empty()) ckpt = ev_ckpt;
            const RunReport r = cmd_eval(load_manifest(vc.manifest), cfg, vc.out, ckpt, ev_full);
            std::printf("config_hash=%s\n", r.config_hash.c_str());
            print_metrics(r);
        } else if (sw->parsed()) {
            const PipelineConfig cfg = resolve_config(sc);
            const DatasetManifest m = load_manifest(sc.manifest);
            bool ok = true;
            if (sw_kind == "ablation") {
                for (const auto& r : ablation_sweep(m, cfg, sc.out)) {
                    std::printf("%s,%s,%s,%s,%s\n", r.normal_features.c_str(), r.strategy.c_str(),
                                r.config_hash.c_str(), r.ok ? "ok" : "failed", format_double(r.test_rel_l2).c_str());
                    ok = ok && r.ok;
                }
            } else {
                const ConvergenceResult res = convergence_study(m, cfg, sw_rates, sc.out);
                for (const auto& r : res.rows) {
                    std::printf("rate=%s n1=%s m=%s error=%s %s\n", format_double(r.rate).c_str(),
                                format_double(r.n1).c_str(), format_double(r.m).c_str(),
                                format_double(r.error).c_str(), r.ok ? "ok" : r.error_message.c_str());
                    ok = ok && r.ok;
                }
                std::printf("slope=%s\n", res.slope ? format_double(*res.slope).c_str() : "undefined");
            }
            return ok ? 0 : 1;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

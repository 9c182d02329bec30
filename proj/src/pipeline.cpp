#include "otgeo/pipeline.hpp"

#include "otgeo/coupling.hpp"
#include "otgeo/drag.hpp"
#include "otgeo/error.hpp"
#include "otgeo/latent_mesh.hpp"
#include "otgeo/ot_map.hpp"
#include "otgeo/ot_plan.hpp"
#include "otgeo/parallel.hpp"
#include "otgeo/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace otgeo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open '" + path.string() + "'");
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

std::string read_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::uint64_t hash_string(const std::string& s, std::uint64_t h = 1469598103934665603ull)
{
    return fnv1a64(s.data(), s.size(), h);
}

Vec3 vec3_from_json(const json& j, const std::string& what)
{
    require(j.is_array() && j.size() == 3, ErrorKind::Format, what + " must be an array of 3 numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        require(j[i].is_number(), ErrorKind::Format, what + " must be an array of 3 numbers");
        v[i] = j[i].get<double>();
    }
    return v;
}

template <class T>
std::optional<T> optional_field(const json& j, const char* key, const std::string& where)
{
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::Format, where + ": wrong type for '" + key + "'");
    }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, _] : j.items())
        require(ok.count(k) > 0, ErrorKind::Format, where + ": unknown key '" + k + "'");
}

/// Sorted random subset of size k, deterministic in the seed.
std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, std::uint64_t seed)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

void take_rows(PreparedInstance& p, const std::vector<std::size_t>& keep)
{
    const auto k = static_cast<Eigen::Index>(keep.size());
    Points pts(k, 3);
    std::optional<Points> nrm;
    if (p.cloud.normals) nrm = Points(k, 3);
    Eigen::MatrixXd tgt(p.target.size() > 0 ? k : 0, p.target.cols());
    std::vector<std::uint8_t> deg;
    for (Eigen::Index r = 0; r < k; ++r) {
        const auto src = static_cast<Eigen::Index>(keep[static_cast<std::size_t>(r)]);
        pts.row(r) = p.cloud.points.row(src);
        if (nrm) nrm->row(r) = p.cloud.normals->row(src);
        if (tgt.rows() > 0) tgt.row(r) = p.target.row(src);
        if (!p.cloud.degenerate.empty()) deg.push_back(p.cloud.degenerate[static_cast<std::size_t>(src)]);
    }
    PointCloud c = make_cloud(std::move(pts), std::move(nrm), p.cloud.tag);
    if (!deg.empty()) c.degenerate = std::move(deg);
    p.cloud = std::move(c);
    p.target = std::move(tgt);
}

std::uint64_t instance_seed(const std::string& tag, std::uint64_t seed, std::uint64_t salt)
{
    std::uint64_t h = hash_string(tag);
    h = fnv1a64(&seed, sizeof(seed), h);
    return fnv1a64(&salt, sizeof(salt), h);
}

std::string artifact(const fs::path& dir, const std::string& tag, const char* suffix)
{
    return (dir / (tag + suffix)).string();
}

constexpr const char* kArtifactSuffixes[] = {".features.ott", ".enc.otix", ".dec.otix", ".transported.otg",
                                             ".cloud.otg", ".meta.json"};

std::string instance_fingerprint(const ManifestEntry& e, const std::string& embed_hash)
{
    std::uint64_t h = hash_string(embed_hash);
    h = hash_string(e.tag, h);
    h = hash_string(read_bytes(e.geometry), h);
    if (e.solution) h = hash_string(read_bytes(*e.solution), h);
    return hex64(h);
}

void require_artifacts(const fs::path& dir, const std::string& tag)
{
    for (const char* s : kArtifactSuffixes)
        require(fs::exists(artifact(dir, tag, s)), ErrorKind::MissingArtifact,
                "missing embed artifact '" + artifact(dir, tag, s) + "'; run `otgeo embed` with this config first");
}

std::string cell(double v) { return format_double(v); }

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

std::vector<std::size_t> DatasetManifest::split(const std::string& name) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == name) out.push_back(i);
    return out;
}

bool DatasetManifest::has_drag_scalars(const ManifestEntry& e) const
{
    return (e.speed || speed) && (e.frontal_area || frontal_area) && (e.inlet || inlet);
}

double DatasetManifest::speed_of(const ManifestEntry& e) const
{
    require(e.speed || speed, ErrorKind::InvalidConfig, "no inlet speed for '" + e.tag + "'");
    return e.speed ? *e.speed : *speed;
}

double DatasetManifest::frontal_area_of(const ManifestEntry& e) const
{
    require(e.frontal_area || frontal_area, ErrorKind::InvalidConfig, "no frontal area for '" + e.tag + "'");
    return e.frontal_area ? *e.frontal_area : *frontal_area;
}

Vec3 DatasetManifest::inlet_of(const ManifestEntry& e) const
{
    require(e.inlet || inlet, ErrorKind::InvalidConfig, "no inlet direction for '" + e.tag + "'");
    return e.inlet ? *e.inlet : *inlet;
}

DatasetManifest load_manifest(const fs::path& path)
{
    const json j = read_json(path);
    const std::string where = path.string();
    require(j.is_object(), ErrorKind::Format, where + ": manifest must be an object");
    check_keys(j, {"globals", "entries"}, where);

    DatasetManifest m;
    m.root = fs::absolute(path).parent_path();
    if (j.contains("globals")) {
        const json& g = j["globals"];
        require(g.is_object(), ErrorKind::Format, where + ": globals must be an object");
        check_keys(g, {"speed", "frontal_area", "inlet"}, where + ": globals");
        m.speed = optional_field<double>(g, "speed", where);
        m.frontal_area = optional_field<double>(g, "frontal_area", where);
        if (g.contains("inlet")) m.inlet = vec3_from_json(g["inlet"], where + ": globals.inlet");
    }
    require(j.contains("entries") && j["entries"].is_array(), ErrorKind::Format, where + ": 'entries' array required");

    std::set<std::string> tags;
    for (std::size_t i = 0; i < j["entries"].size(); ++i) {
        const json& ej = j["entries"][i];
        const std::string ew = where + ": entries[" + std::to_string(i) + "]";
        require(ej.is_object(), ErrorKind::Format, ew + " must be an object");
        check_keys(ej, {"tag", "geometry", "solution", "cd", "split", "speed", "frontal_area", "total_area", "inlet"}, ew);
        ManifestEntry e;
        const auto tag = optional_field<std::string>(ej, "tag", ew);
        const auto geom = optional_field<std::string>(ej, "geometry", ew);
        const auto split = optional_field<std::string>(ej, "split", ew);
        require(tag && !tag->empty(), ErrorKind::Format, ew + ": 'tag' required");
        require(geom.has_value(), ErrorKind::Format, ew + ": 'geometry' required");
        require(split.has_value(), ErrorKind::Format, ew + ": 'split' required");
        require(*split == "train" || *split == "val" || *split == "test", ErrorKind::Format,
                ew + ": split must be train, val or test");
        require(tags.insert(*tag).second, ErrorKind::Format, ew + ": duplicate tag '" + *tag + "'");
        require(tag->find('/') == std::string::npos, ErrorKind::Format, ew + ": tag must not contain '/'");
        e.tag = *tag;
        e.split = *split;
        e.geometry = fs::absolute(m.root / *geom);
        require(fs::exists(e.geometry), ErrorKind::Io, ew + ": geometry '" + e.geometry.string() + "' not found");
        if (const auto sol = optional_field<std::string>(ej, "solution", ew)) {
            e.solution = fs::absolute(m.root / *sol);
            require(fs::exists(*e.solution), ErrorKind::Io,
                    ew + ": solution '" + e.solution->string() + "' not found");
        }
        e.cd = optional_field<double>(ej, "cd", ew);
        require(e.solution || e.cd, ErrorKind::Format, ew + ": needs 'solution' or 'cd'");
        e.speed = optional_field<double>(ej, "speed", ew);
        e.frontal_area = optional_field<double>(ej, "frontal_area", ew);
        e.total_area = optional_field<double>(ej, "total_area", ew);
        if (ej.contains("inlet")) e.inlet = vec3_from_json(ej["inlet"], ew + ".inlet");
        m.entries.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& m)
{
    const fs::path base = fs::absolute(path).parent_path();
    json j;
    json g = json::object();
    if (m.speed) g["speed"] = *m.speed;
    if (m.frontal_area) g["frontal_area"] = *m.frontal_area;
    if (m.inlet) g["inlet"] = {(*m.inlet)[0], (*m.inlet)[1], (*m.inlet)[2]};
    j["globals"] = g;
    j["entries"] = json::array();
    for (const auto& e : m.entries) {
        json ej;
        ej["tag"] = e.tag;
        ej["geometry"] = fs::relative(e.geometry, base).generic_string();
        if (e.solution) ej["solution"] = fs::relative(*e.solution, base).generic_string();
        if (e.cd) ej["cd"] = *e.cd;
        ej["split"] = e.split;
        if (e.speed) ej["speed"] = *e.speed;
        if (e.frontal_area) ej["frontal_area"] = *e.frontal_area;
        if (e.total_area) ej["total_area"] = *e.total_area;
        if (e.inlet) ej["inlet"] = {(*e.inlet)[0], (*e.inlet)[1], (*e.inlet)[2]};
        j["entries"].push_back(ej);
    }
    write_json(path, j);
}

Eigen::MatrixXd load_solution(const fs::path& path)
{
    if (path.extension() == ".ott") return load_matrix(path);
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        std::vector<double> row;
        std::string tok;
        while (ss >> tok) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                require(used == tok.size(), ErrorKind::Format, "");
            } catch (...) {
                if (rows.empty() && row.empty()) {
                    row.clear();
                    break;  // header line
                }
                fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
            }
        }
        if (row.empty()) continue;
        require(rows.empty() || rows.front().size() == row.size(), ErrorKind::Format,
                path.string() + ":" + std::to_string(lineno) + ": inconsistent column count");
        rows.push_back(std::move(row));
    }
    require(!rows.empty(), ErrorKind::Format, path.string() + ": no values");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return out;
}

DatasetManifest write_synth_dataset(const fs::path& dir, SynthKind kind, const SynthSplit& split, std::uint64_t seed,
                                    const SynthOptions& opts)
{
    require(split.total() >= 1, ErrorKind::InvalidInput, "synthetic dataset needs at least one instance");
    const auto data = synth_dataset(kind, split.total(), seed, opts);
    fs::create_directories(dir / "geometry");
    fs::create_directories(dir / "solution");

    DatasetManifest m;
    m.root = fs::absolute(dir);
    m.speed = 1.0;
    m.inlet = Vec3::UnitX();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const SynthInstance& s = data[i];
        ManifestEntry e;
        e.tag = s.tag;
        e.geometry = m.root / "geometry" / (s.tag + ".otg");
        e.solution = m.root / "solution" / (s.tag + ".ott");
        save_raw_f64(e.geometry, s.cloud.points, &*s.cloud.normals);
        save_matrix(*e.solution, s.target);
        e.cd = s.cd;
        e.frontal_area = s.frontal_area;
        e.total_area = s.total_area;
        e.split = i < split.train ? "train" : (i < split.train + split.val ? "val" : "test");
        m.entries.push_back(std::move(e));
    }
    save_manifest(dir / "manifest.json", m);
    return m;
}

// ---------------------------------------------------------------------------
// Embedding

PreparedInstance prepare_instance(const ManifestEntry& entry, const PipelineConfig& cfg, double rate,
                                  bool square_for_map)
{
    require(rate > 0.0 && rate <= 1.0, ErrorKind::InvalidConfig, "sampling rate must lie in (0, 1]");
    PreparedInstance p;
    p.cloud = load_point_cloud(entry.geometry, cloud_format_from_extension(entry.geometry));
    p.cloud.tag = entry.tag;
    p.raw_points = p.cloud.size();
    if (entry.solution) {
        p.target = load_solution(*entry.solution);
        require(static_cast<std::size_t>(p.target.rows()) == p.cloud.size(), ErrorKind::Shape,
                "solution of '" + entry.tag + "' has " + std::to_string(p.target.rows()) + " rows for " +
                    std::to_string(p.cloud.size()) + " points");
    }

    if (cfg.voxel_size > 0.0) {
        const VoxelPartition part = voxel_partition(p.cloud.points, cfg.voxel_size);
        if (p.target.size() > 0) p.target = reduce_field(part, p.target, cfg.voxel_rule);
        p.cloud = voxel_downsample(p.cloud, VoxelConfig{cfg.voxel_size, cfg.voxel_rule});
        p.cloud.tag = entry.tag;
    }
    if (rate < 1.0) {
        const auto k = std::max<std::size_t>(
            4, static_cast<std::size_t>(std::llround(rate * static_cast<double>(p.cloud.size()))));
        if (k < p.cloud.size()) take_rows(p, random_subset(p.cloud.size(), k, instance_seed(entry.tag, cfg.seed, 1)));
    }
    if (square_for_map) {
        const auto side = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p.cloud.size()))));
        if (side * side != p.cloud.size()) {
            take_rows(p, random_subset(p.cloud.size(), side * side, instance_seed(entry.tag, cfg.seed, 2)));
            p.squared = true;
        }
    }
    if (!p.cloud.has_normals() || cfg.normals.estimate) {
        const int k = std::min<int>(cfg.normals.k, static_cast<int>(p.cloud.size()) - 1);
        require(k >= 3, ErrorKind::InvalidInput, "too few points in '" + entry.tag + "' to estimate normals");
        p.cloud = estimate_normals(p.cloud, k);
    }
    p.cloud.validate();
    return p;
}

std::size_t EmbedSummary::failures() const
{
    return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(), [](const auto& i) { return !i.ok; }));
}

double EmbedSummary::ot_seconds() const
{
    double s = 0.0;
    for (const auto& i : instances) s += i.ot_seconds;
    return s;
}

double EmbedSummary::nn_seconds() const
{
    double s = 0.0;
    for (const auto& i : instances) s += i.nn_seconds;
    return s;
}

fs::path embed_dir(const fs::path& out, const PipelineConfig& cfg) { return out / "embed" / embed_hash(cfg); }

namespace {

InstanceEmbed embed_instance(const ManifestEntry& entry, const PipelineConfig& cfg, const fs::path& dir,
                             const std::string& ehash)
{
    InstanceEmbed r;
    r.tag = entry.tag;
    const std::string fp = instance_fingerprint(entry, ehash);
    const fs::path meta_path = artifact(dir, entry.tag, ".meta.json");

    if (fs::exists(meta_path)) {
        const json meta = read_json(meta_path);
        const bool complete = std::all_of(std::begin(kArtifactSuffixes), std::end(kArtifactSuffixes),
                                          [&](const char* s) { return fs::exists(artifact(dir, entry.tag, s)); });
        if (complete && meta.value("fingerprint", "") == fp) {
            r.ok = r.cached = true;
            r.n1 = meta.at("n1").get<std::size_t>();
            r.n2 = meta.at("n2").get<std::size_t>();
            r.side = meta.at("side").get<std::size_t>();
            r.iterations = meta.at("iterations").get<int>();
            r.converged = meta.at("converged").get<bool>();
            return r;
        }
    }

    const bool map = cfg.ot.method == OtMethod::Map;
    PreparedInstance p = prepare_instance(entry, cfg, cfg.subsample_rate, map);
    const PointCloud& cloud = p.cloud;
    const double alpha = map ? 1.0 : cfg.latent.alpha;
    const std::size_t m = grid_size_for(cloud.size(), alpha);
    LatentGrid grid = generate_grid(cfg.latent.shape, m, cfg.latent.params);
    BoxFit fit;
    if (cfg.latent.fit_bbox) fit = fit_to_box(grid, bounding_box(cloud.points));

    json meta;
    Stopwatch ot_clock;
    Points transported;
    if (map) {
        require(grid.size() == cloud.size(), ErrorKind::Size, "map path needs equal latent and physical counts");
        PpmmConfig pc;
        pc.max_iters = cfg.ot.ppmm_iters;
        pc.rule = cfg.ot.ppmm_rule;
        pc.tol = cfg.ot.ppmm_tol;
        pc.seed = instance_seed(entry.tag, cfg.seed, 3);
        const MongeMapResult res = ppmm(grid.points, cloud.points, pc);
        transported = res.transported;
        r.iterations = res.iterations;
        r.converged = res.converged;
        meta["ppmm_fallbacks"] = res.fallbacks;
        meta["ppmm_tol"] = res.tol;
        meta["ppmm_final_disc"] = res.per_iter_disc.empty() ? 0.0 : res.per_iter_disc.back();
    } else {
        const CostMatrix M = cost_matrix(grid.points, cloud.points);
        const SinkhornPotentials pot = sinkhorn_potentials(M, grid.weights, cloud.weights, cfg.ot.sinkhorn);
        StrategyResult sr = plan_strategy_streamed(grid.points, cloud, pot, cfg.ot.strategy);
        transported = std::move(sr.points);
        r.iterations = pot.iterations;
        r.converged = pot.converged;
        meta["beta_requested"] = pot.beta_requested;
        meta["beta_effective"] = pot.beta_effective;
        meta["median_cost"] = pot.median_cost;
        meta["anneal_stages"] = pot.stages;
    }
    r.ot_seconds = ot_clock.seconds();

    Stopwatch nn_clock;
    const IndexMap map_idx = build_index_map(transported, cloud, cfg.coupling.k_enc, cfg.coupling.k_dec);
    r.nn_seconds = nn_clock.seconds();
    const LatentFeatures feats = assemble_features(grid, cloud, map_idx.encoder_first(), cfg.coupling.normal_features);

    save_matrix(artifact(dir, entry.tag, ".features.ott"), feats.tensor);
    save_indices(artifact(dir, entry.tag, ".enc.otix"), map_idx.encoder);
    save_indices(artifact(dir, entry.tag, ".dec.otix"), map_idx.decoder);
    save_raw_f64(artifact(dir, entry.tag, ".transported.otg"), transported);
    save_raw_f64(artifact(dir, entry.tag, ".cloud.otg"), cloud.points, &*cloud.normals);
    if (p.target.size() > 0) save_matrix(artifact(dir, entry.tag, ".target.ott"), p.target);

    r.n1 = cloud.size();
    r.n2 = grid.size();
    r.side = m;
    r.ok = true;
    meta["tag"] = entry.tag;
    meta["fingerprint"] = fp;
    meta["n1"] = r.n1;
    meta["n2"] = r.n2;
    meta["side"] = r.side;
    meta["raw_points"] = p.raw_points;
    meta["alpha"] = alpha;
    meta["squared_subsample"] = p.squared;
    meta["iterations"] = r.iterations;
    meta["converged"] = r.converged;
    meta["ot_seconds"] = r.ot_seconds;
    meta["nn_seconds"] = r.nn_seconds;
    meta["latent_fit_scale"] = {fit.scale[0], fit.scale[1], fit.scale[2]};
    meta["latent_fit_offset"] = {fit.offset[0], fit.offset[1], fit.offset[2]};
    meta["has_target"] = p.target.size() > 0;
    write_json(meta_path, meta);
    return r;
}

}  // namespace

EmbedSummary cmd_embed(const DatasetManifest& manifest, const PipelineConfig& cfg, const fs::path& out)
{
    if (cfg.threads > 0) set_worker_limit(static_cast<std::size_t>(cfg.threads));
    EmbedSummary s;
    s.embed_hash = embed_hash(cfg);
    s.dir = embed_dir(out, cfg);
    fs::create_directories(s.dir);
    write_json(s.dir / "config.json", config_to_json(cfg));

    s.instances.resize(manifest.entries.size());
    parallel_for(0, manifest.entries.size(), [&](std::size_t i) {
        const ManifestEntry& e = manifest.entries[i];
        try {
            s.instances[i] = embed_instance(e, cfg, s.dir, s.embed_hash);
        } catch (const std::exception& ex) {
            s.instances[i].tag = e.tag;
            s.instances[i].ok = false;
            s.instances[i].error = ex.what();
        }
    });

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : s.instances)
        rows.push_back({r.tag, r.ok ? "ok" : "failed", r.cached ? "1" : "0", std::to_string(r.n1), std::to_string(r.n2),
                        std::to_string(r.side), std::to_string(r.iterations), r.converged ? "1" : "0",
                        cell(r.ot_seconds), cell(r.nn_seconds), json(r.error).dump()});
    write_csv(s.dir / "embed.csv",
              {"tag", "status", "cached", "n1", "n2", "side", "iterations", "converged", "ot_seconds", "nn_seconds",
               "error"},
              rows);
    return s;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, const PipelineConfig& cfg, const fs::path& out,
                                 const std::string& split, bool full_resolution)
{
    const fs::path dir = embed_dir(out, cfg);
    const std::string ehash = embed_hash(cfg);
    const bool cd_loss = cfg.train.loss == LossKind::CdLoss;
    const auto idx = manifest.split(split);
    std::vector<Sample> samples(idx.size());

    parallel_for(0, idx.size(), [&](std::size_t t) {
        const ManifestEntry& e = manifest.entries[idx[t]];
        require_artifacts(dir, e.tag);
        const json meta = read_json(artifact(dir, e.tag, ".meta.json"));
        require(meta.value("fingerprint", "") == instance_fingerprint(e, ehash), ErrorKind::MissingArtifact,
                "embed artifacts for '" + e.tag + "' are stale; rerun `otgeo embed` with this config");

        Sample& s = samples[t];
        s.tag = e.tag;
        s.side = meta.at("side").get<std::size_t>();
        s.features = load_matrix(artifact(dir, e.tag, ".features.ott"));
        s.map.k_enc = cfg.coupling.k_enc;
        s.map.k_dec = cfg.coupling.k_dec;
        s.map.n2 = meta.at("n2").get<std::size_t>();
        s.map.encoder = load_indices(artifact(dir, e.tag, ".enc.otix"));

        if (full_resolution) {
            const PreparedInstance p = prepare_instance(e, cfg, 1.0, false);
            const PointCloud transported =
                load_point_cloud(artifact(dir, e.tag, ".transported.otg"), CloudFormat::RawF64);
            s.map.n1 = p.cloud.size();
            s.map.decoder = decoder_indices(transported.points, p.cloud, cfg.coupling.k_dec);
            s.target = p.target;
            s.normals = *p.cloud.normals;
        } else {
            const PointCloud cloud = load_point_cloud(artifact(dir, e.tag, ".cloud.otg"), CloudFormat::RawF64);
            s.map.n1 = meta.at("n1").get<std::size_t>();
            s.map.decoder = load_indices(artifact(dir, e.tag, ".dec.otix"));
            if (meta.value("has_target", false)) s.target = load_matrix(artifact(dir, e.tag, ".target.ott"));
            require(cloud.has_normals(), ErrorKind::Format, "cached cloud of '" + e.tag + "' has no normals");
            s.normals = *cloud.normals;
        }
        s.map.validate();

        if (cd_loss) {
            require(manifest.has_drag_scalars(e), ErrorKind::InvalidConfig,
                    "loss 'cd' needs speed, frontal_area and inlet in the manifest (missing for '" + e.tag + "')");
            require(e.cd.has_value(), ErrorKind::InvalidConfig, "loss 'cd' needs a cd value for '" + e.tag + "'");
            s.cd = *e.cd;
            s.inlet = manifest.inlet_of(e);
        } else {
            require(s.target.size() > 0, ErrorKind::InvalidConfig,
                    "entry '" + e.tag + "' has no solution field; use loss 'cd' or add a solution");
            if (manifest.has_drag_scalars(e)) s.inlet = manifest.inlet_of(e);
            if (e.cd) s.cd = *e.cd;
        }
    });
    return samples;
}

// ---------------------------------------------------------------------------
// Training and evaluation

fs::path run_dir(const fs::path& out, const PipelineConfig& cfg) { return out / "runs" / config_hash(cfg); }

RunReport cmd_train(const DatasetManifest& manifest, const PipelineConfig& cfg, const fs::path& out)
{
    if (cfg.threads > 0) set_worker_limit(static_cast<std::size_t>(cfg.threads));
    Stopwatch load_clock;
    const std::vector<Sample> train_set = load_samples(manifest, cfg, out, "train");
    const std::vector<Sample> val_set = load_samples(manifest, cfg, out, "val");
    require(!train_set.empty(), ErrorKind::InvalidInput, "manifest has no training entries");
    const double load_seconds = load_clock.seconds();

    const bool cd_loss = cfg.train.loss == LossKind::CdLoss;
    OperatorConfig oc = cfg.model;
    oc.in_channels = static_cast<int>(train_set.front().features.cols());
    oc.out_channels = cd_loss ? 1 : static_cast<int>(train_set.front().target.cols());
    Model model{SpectralOperator(oc, cfg.seed), fit_input_normalizer(train_set),
                cd_loss ? Normalizer::identity(oc.out_channels) : fit_output_normalizer(train_set, oc.out_channels),
                cfg.coupling.decode_mode};

    Stopwatch train_clock;
    RunReport rep;
    rep.command = "train";
    rep.config_hash = config_hash(cfg);
    rep.epochs = train(model, train_set, val_set, cfg.train);
    rep.add_timing("load", load_seconds);
    rep.add_timing("train", train_clock.seconds());

    const Metrics tm = evaluate(model, train_set, cfg.train.loss);
    rep.add_metric("train_rel_l2", cd_loss ? std::nan("") : tm.relative_l2);
    rep.add_metric("train_mse", cd_loss ? tm.cd_mse : tm.mse);
    if (!val_set.empty()) {
        const Metrics vm = evaluate(model, val_set, cfg.train.loss);
        rep.add_metric("val_rel_l2", cd_loss ? std::nan("") : vm.relative_l2);
        rep.add_metric("val_mse", cd_loss ? vm.cd_mse : vm.mse);
    }
    rep.extra["parameters"] = model.op.parameter_count();
    rep.extra["train_instances"] = train_set.size();
    rep.extra["val_instances"] = val_set.size();
    rep.extra["embed_hash"] = embed_hash(cfg);
    rep.extra["config"] = config_to_json(cfg);

    const fs::path dir = run_dir(out, cfg);
    fs::create_directories(dir);
    save_checkpoint(dir / "model.otno", model);
    rep.peak_memory = peak_memory_bytes();
    write_run_report(dir, rep);
    return rep;
}

RunReport cmd_eval(const DatasetManifest& manifest, const PipelineConfig& cfg, const fs::path& out,
                   const std::optional<fs::path>& checkpoint, bool full_resolution)
{
    if (cfg.threads > 0) set_worker_limit(static_cast<std::size_t>(cfg.threads));
    const fs::path dir = run_dir(out, cfg);
    const fs::path ckpt = checkpoint ? *checkpoint : dir / "model.otno";
    require(fs::exists(ckpt), ErrorKind::MissingArtifact,
            "checkpoint '" + ckpt.string() + "' not found; run `otgeo train` with this config first");

    Stopwatch clock;
    const Model model = load_checkpoint(ckpt);
    const std::vector<Sample> test = load_samples(manifest, cfg, out, "test", full_resolution);
    require(!test.empty(), ErrorKind::InvalidInput, "manifest has no test entries");
    const bool cd_loss = cfg.train.loss == LossKind::CdLoss;

    struct Row {
        double rel = std::nan(""), err = std::nan(""), cd_pred = std::nan(""), cd_raw = std::nan("");
    };
    const auto idx = manifest.split("test");
    std::vector<Row> rows(test.size());
    parallel_for(0, test.size(), [&](std::size_t i) {
        const Sample& s = test[i];
        const ManifestEntry& e = manifest.entries[idx[i]];
        const Eigen::MatrixXd pred = model.predict(s);
        if (s.target.size() > 0) {
            rows[i].rel = relative_l2(pred, s.target);
            rows[i].err = mse(pred, s.target);
        }
        if (e.cd && manifest.has_drag_scalars(e)) {
            const Vec3 inlet = manifest.inlet_of(e);
            rows[i].cd_raw = drag_sum(pred.col(0), s.normals, inlet);
            rows[i].cd_pred = drag_coefficient(pred.col(0), s.normals, nullptr, manifest.speed_of(e),
                                               manifest.frontal_area_of(e), inlet, e.total_area.value_or(0.0));
        }
    });

    RunReport rep;
    rep.command = full_resolution ? "eval-full-resolution" : "eval";
    rep.config_hash = config_hash(cfg);
    double rel = 0.0, err = 0.0, cd_mse = 0.0, cd_raw_mse = 0.0;
    std::size_t n_cd = 0;
    std::vector<std::vector<std::string>> csv;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const ManifestEntry& e = manifest.entries[idx[i]];
        rel += rows[i].rel;
        err += rows[i].err;
        if (std::isfinite(rows[i].cd_pred)) {
            cd_mse += std::pow(rows[i].cd_pred - *e.cd, 2);
            cd_raw_mse += std::pow(rows[i].cd_raw - *e.cd, 2);
            ++n_cd;
        }
        csv.push_back({e.tag, cell(rows[i].rel), cell(rows[i].err), cell(rows[i].cd_pred),
                       e.cd ? cell(*e.cd) : "nan", cell(rows[i].cd_raw)});
    }
    const double n = static_cast<double>(test.size());
    if (!cd_loss || test.front().target.size() > 0) {
        rep.add_metric("test_rel_l2", rel / n);
        rep.add_metric("test_mse", err / n);
    }
    if (n_cd > 0) {
        rep.add_metric("test_cd_mse", cd_mse / static_cast<double>(n_cd));
        rep.add_metric("test_cd_raw_mse", cd_raw_mse / static_cast<double>(n_cd));
    }
    rep.add_timing("eval", clock.seconds());
    rep.extra["checkpoint"] = ckpt.string();
    rep.extra["test_instances"] = test.size();
    rep.peak_memory = peak_memory_bytes();

    const fs::path eval_out = dir / (full_resolution ? "eval-full" : "eval");
    write_csv(eval_out / "instances.csv", {"tag", "rel_l2", "mse", "cd_pred", "cd_target", "cd_raw_sum"}, csv);
    write_json(eval_out / "summary.json", rep.summary());
    return rep;
}

ExperimentResult run_experiment(const DatasetManifest& manifest, const PipelineConfig& cfg, const fs::path& out,
                                bool full_resolution_eval)
{
    ExperimentResult r;
    r.config_hash = config_hash(cfg);
    r.embed = cmd_embed(manifest, cfg, out);
    if (r.embed.failures() > 0) {
        std::string msg = std::to_string(r.embed.failures()) + " instance(s) failed to embed";
        for (const auto& i : r.embed.instances)
            if (!i.ok) {
                msg += "; first: " + i.tag + ": " + i.error;
                break;
            }
        fail(ErrorKind::Numeric, msg);
    }
    r.train = cmd_train(manifest, cfg, out);
    r.eval = cmd_eval(manifest, cfg, out, std::nullopt, full_resolution_eval);
    return r;
}

// ---------------------------------------------------------------------------
// Studies

std::vector<AblationRow> ablation_sweep(const DatasetManifest& manifest, const PipelineConfig& base,
                                        const fs::path& out)
{
    std::vector<AblationRow> rows;
    for (const auto nf : {NormalFeatures::None, NormalFeatures::Car, NormalFeatures::Concat, NormalFeatures::Cross}) {
        for (const auto st : {PlanStrategy::Matrix, PlanStrategy::Max, PlanStrategy::Mean}) {
            PipelineConfig cfg = base;
            cfg.ot.method = OtMethod::Plan;
            cfg.coupling.normal_features = nf;
            cfg.ot.strategy = st;
            AblationRow row;
            row.normal_features = to_string(nf);
            row.strategy = to_string(st);
            row.config_hash = config_hash(cfg);
            Stopwatch clock;
            try {
                const ExperimentResult r = run_experiment(manifest, cfg, out);
                row.test_rel_l2 = r.eval.metric("test_rel_l2");
                row.test_mse = r.eval.metric("test_mse");
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            row.seconds = clock.seconds();
            rows.push_back(row);
        }
    }
    std::vector<std::vector<std::string>> csv;
    for (const auto& r : rows)
        csv.push_back({r.normal_features, r.strategy, r.config_hash, r.ok ? "ok" : "failed", cell(r.test_rel_l2),
                       cell(r.test_mse), cell(r.seconds), json(r.error).dump()});
    write_csv(out / "ablation.csv",
              {"normal_features", "strategy", "config_hash", "status", "test_rel_l2", "test_mse", "seconds", "error"},
              csv);
    return rows;
}

std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i)
        if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(x[i]) && std::isfinite(y[i]))
            pts.emplace_back(std::log(x[i]), std::log(y[i]));
    if (pts.size() < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (const auto& [a, b] : pts) {
        mx += a;
        my += b;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [a, b] : pts) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if (sxx == 0.0) return std::nullopt;
    return sxy / sxx;
}

ConvergenceResult convergence_study(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                    const std::vector<double>& rates, const fs::path& out)
{
    require(!rates.empty(), ErrorKind::InvalidConfig, "convergence study needs at least one rate");
    for (const double r : rates) require(r > 0.0 && r <= 1.0, ErrorKind::InvalidConfig, "rates must lie in (0, 1]");

    ConvergenceResult res;
    for (const double rate : rates) {
        PipelineConfig c = cfg;
        c.subsample_rate = rate;
        ConvergenceRow row;
        row.rate = rate;
        row.config_hash = config_hash(c);
        Stopwatch clock;
        try {
            const ExperimentResult r = run_experiment(manifest, c, out, true);
            double n1 = 0.0, m = 0.0;
            for (const auto& i : r.embed.instances) {
                n1 += static_cast<double>(i.n1);
                m += static_cast<double>(i.side);
            }
            row.n1 = n1 / static_cast<double>(r.embed.instances.size());
            row.m = m / static_cast<double>(r.embed.instances.size());
            row.error = r.eval.metric("test_rel_l2");
            row.ok = true;
        } catch (const std::exception& e) {
            row.error_message = e.what();
            row.error = std::nan("");
        }
        row.seconds = clock.seconds();
        res.rows.push_back(row);
    }

    std::vector<double> xs, ys;
    for (const auto& r : res.rows)
        if (r.ok) {
            xs.push_back(r.rate);
            ys.push_back(r.error);
        }
    res.slope = loglog_slope(xs, ys);

    std::vector<std::vector<std::string>> csv;
    for (const auto& r : res.rows)
        csv.push_back({cell(r.rate), cell(r.n1), cell(r.m), cell(r.error), cell(r.seconds), r.config_hash,
                       r.ok ? "ok" : "failed", json(r.error_message).dump()});
    write_csv(out / "convergence.csv", {"rate", "n1", "m", "error", "wallclock", "config_hash", "status", "message"},
              csv);
    json j;
    j["slope"] = res.slope ? json(*res.slope) : json(nullptr);
    j["slope_defined"] = res.slope.has_value();
    j["rates"] = rates;
    write_json(out / "convergence.json", j);
    return res;
}

}  // namespace otgeo

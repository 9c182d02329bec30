#include "otgeo/config.hpp"

#include "otgeo/error.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace otgeo {

using nlohmann::json;

OtMethod parse_ot_method(const std::string& name)
{
    if (name == "plan") return OtMethod::Plan;
    if (name == "map") return OtMethod::Map;
    fail(ErrorKind::InvalidConfig, "unknown OT method '" + name + "'");
}

std::string to_string(OtMethod m) { return m == OtMethod::Plan ? "plan" : "map"; }

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace {

// Walks one JSON object, rejecting keys that no reader asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        require(j.is_object(), ErrorKind::InvalidConfig, where() + " must be an object");
    }

    ~Section() noexcept(false)
    {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) fail(ErrorKind::InvalidConfig, "unknown key '" + path_ + "." + key + "'");
    }

    template <class T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            fail(ErrorKind::InvalidConfig, "wrong type for '" + path_ + "." + key + "'");
        }
    }

    template <class E, class Parse>
    void get_enum(const char* key, E& out, Parse parse)
    {
        std::string s;
        bool present = j_.contains(key);
        get(key, s);
        if (present) out = parse(s);
    }

    bool has(const char* key) const { return j_.contains(key); }

    Section sub(const char* key)
    {
        seen_.insert(key);
        static const json empty = json::object();
        const auto it = j_.find(key);
        return Section(it == j_.end() ? empty : *it, path_ + "." + key);
    }

private:
    std::string where() const { return "'" + path_ + "'"; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void check_positive(double v, const char* name)
{
    require(v > 0.0, ErrorKind::InvalidConfig, std::string(name) + " must be positive");
}

}  // namespace

PipelineConfig config_from_json(const json& j)
{
    PipelineConfig c;
    {
        Section root(j, "config");
        {
            Section s = root.sub("latent");
            s.get_enum("shape", c.latent.shape, parse_latent_shape);
            s.get("alpha", c.latent.alpha);
            s.get("torus_R", c.latent.params.torus_R);
            s.get("torus_r", c.latent.params.torus_r);
            s.get("sphere_radius", c.latent.params.sphere_radius);
            s.get("plane_extent", c.latent.params.plane_extent);
            s.get("fit_bbox", c.latent.fit_bbox);
        }
        root.get("voxel_size", c.voxel_size);
        root.get_enum("voxel_rule", c.voxel_rule, [](const std::string& s) {
            if (s == "centroid") return VoxelRule::Centroid;
            if (s == "first-point") return VoxelRule::FirstPoint;
            fail(ErrorKind::InvalidConfig, "unknown voxel_rule '" + s + "'");
        });
        root.get("subsample_rate", c.subsample_rate);
        {
            Section s = root.sub("normals");
            s.get("estimate", c.normals.estimate);
            s.get("k", c.normals.k);
        }
        {
            Section s = root.sub("ot");
            s.get_enum("method", c.ot.method, parse_ot_method);
            s.get("beta", c.ot.sinkhorn.beta);
            s.get("beta_relative", c.ot.sinkhorn.beta_relative);
            s.get("max_iters", c.ot.sinkhorn.max_iters);
            s.get("tol", c.ot.sinkhorn.marginal_tol);
            s.get("log_domain", c.ot.sinkhorn.log_domain);
            s.get("anneal", c.ot.sinkhorn.anneal);
            s.get("anneal_stage_iters", c.ot.sinkhorn.anneal_stage_iters);
            s.get_enum("strategy", c.ot.strategy, parse_plan_strategy);
            s.get("ppmm_iters", c.ot.ppmm_iters);
            s.get_enum("ppmm_rule", c.ot.ppmm_rule, parse_direction_rule);
            s.get("ppmm_tol", c.ot.ppmm_tol);
        }
        {
            Section s = root.sub("coupling");
            s.get("k_enc", c.coupling.k_enc);
            s.get("k_dec", c.coupling.k_dec);
            s.get_enum("encode_mode", c.coupling.encode_mode, parse_transfer_mode);
            s.get_enum("decode_mode", c.coupling.decode_mode, parse_transfer_mode);
            s.get_enum("normal_features", c.coupling.normal_features, parse_normal_features);
        }
        {
            Section s = root.sub("model");
            s.get("width", c.model.width);
            s.get("layers", c.model.layers);
            if (s.has("modes")) {
                std::vector<int> modes;
                s.get("modes", modes);
                require(modes.size() == 2, ErrorKind::InvalidConfig, "'config.model.modes' must be [m1, m2]");
                c.model.modes1 = modes[0];
                c.model.modes2 = modes[1];
            } else {
                s.get("modes", c.model.modes1);  // marks the key as known
            }
            s.get_enum("activation", c.model.activation, [](const std::string& a) {
                if (a == "gelu") return Activation::Gelu;
                if (a == "identity") return Activation::Identity;
                fail(ErrorKind::InvalidConfig, "unknown activation '" + a + "'");
            });
        }
        {
            Section s = root.sub("train");
            s.get("epochs", c.train.epochs);
            s.get("batch_size", c.train.batch_size);
            s.get("lr", c.train.lr);
            s.get("weight_decay", c.train.weight_decay);
            s.get_enum("optimizer", c.train.optimizer, parse_optimizer);
            s.get_enum("loss", c.train.loss, parse_loss);
            s.get_enum("loss_space", c.train.loss_space, parse_loss_space);
            s.get("seed", c.train.seed);
            s.get("divergence_factor", c.train.divergence_factor);
            std::string sched = c.train.cosine_schedule ? "cosine" : "constant";
            s.get("lr_schedule", sched);
            require(sched == "cosine" || sched == "constant", ErrorKind::InvalidConfig,
                    "train.lr_schedule must be 'constant' or 'cosine'");
            c.train.cosine_schedule = sched == "cosine";
        }
        root.get("seed", c.seed);
        root.get("threads", c.threads);
    }

    check_positive(c.latent.alpha, "latent.alpha");
    require(c.subsample_rate > 0.0 && c.subsample_rate <= 1.0, ErrorKind::InvalidConfig,
            "subsample_rate must lie in (0, 1]");
    require(c.normals.k >= 3, ErrorKind::InvalidConfig, "normals.k must be >= 3");
    check_positive(c.ot.sinkhorn.beta, "ot.beta");
    require(c.ot.sinkhorn.max_iters >= 1, ErrorKind::InvalidConfig, "ot.max_iters must be >= 1");
    check_positive(c.ot.sinkhorn.marginal_tol, "ot.tol");
    require(c.ot.ppmm_iters >= 0, ErrorKind::InvalidConfig, "ot.ppmm_iters must be >= 0");
    require(c.coupling.k_enc >= 1 && c.coupling.k_dec >= 1, ErrorKind::InvalidConfig, "k_enc and k_dec must be >= 1");
    require(c.model.width >= 1 && c.model.layers >= 1 && c.model.modes1 >= 1 && c.model.modes2 >= 1,
            ErrorKind::InvalidConfig, "model width, layers and modes must be >= 1");
    require(c.train.epochs >= 0 && c.train.batch_size >= 1, ErrorKind::InvalidConfig,
            "train.epochs >= 0 and train.batch_size >= 1 required");
    require(c.train.lr >= 0.0 && c.train.weight_decay >= 0.0, ErrorKind::InvalidConfig,
            "train.lr and train.weight_decay must be >= 0");
    require(c.threads >= 0, ErrorKind::InvalidConfig, "threads must be >= 0");
    return c;
}

json config_to_json(const PipelineConfig& c)
{
    json j;
    j["latent"] = {{"shape", to_string(c.latent.shape)},
                   {"alpha", c.latent.alpha},
                   {"torus_R", c.latent.params.torus_R},
                   {"torus_r", c.latent.params.torus_r},
                   {"sphere_radius", c.latent.params.sphere_radius},
                   {"plane_extent", c.latent.params.plane_extent},
                   {"fit_bbox", c.latent.fit_bbox}};
    j["voxel_size"] = c.voxel_size;
    j["voxel_rule"] = c.voxel_rule == VoxelRule::Centroid ? "centroid" : "first-point";
    j["subsample_rate"] = c.subsample_rate;
    j["normals"] = {{"estimate", c.normals.estimate}, {"k", c.normals.k}};
    j["ot"] = {{"method", to_string(c.ot.method)},
               {"beta", c.ot.sinkhorn.beta},
               {"beta_relative", c.ot.sinkhorn.beta_relative},
               {"max_iters", c.ot.sinkhorn.max_iters},
               {"tol", c.ot.sinkhorn.marginal_tol},
               {"log_domain", c.ot.sinkhorn.log_domain},
               {"anneal", c.ot.sinkhorn.anneal},
               {"anneal_stage_iters", c.ot.sinkhorn.anneal_stage_iters},
               {"strategy", to_string(c.ot.strategy)},
               {"ppmm_iters", c.ot.ppmm_iters},
               {"ppmm_rule", to_string(c.ot.ppmm_rule)},
               {"ppmm_tol", c.ot.ppmm_tol}};
    j["coupling"] = {{"k_enc", c.coupling.k_enc},
                     {"k_dec", c.coupling.k_dec},
                     {"encode_mode", to_string(c.coupling.encode_mode)},
                     {"decode_mode", to_string(c.coupling.decode_mode)},
                     {"normal_features", to_string(c.coupling.normal_features)}};
    j["model"] = {{"width", c.model.width},
                  {"layers", c.model.layers},
                  {"modes", {c.model.modes1, c.model.modes2}},
                  {"activation", c.model.activation == Activation::Gelu ? "gelu" : "identity"}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.lr},
                  {"weight_decay", c.train.weight_decay},
                  {"optimizer", to_string(c.train.optimizer)},
                  {"loss", to_string(c.train.loss)},
                  {"loss_space", to_string(c.train.loss_space)},
                  {"seed", c.train.seed},
                  {"divergence_factor", c.train.divergence_factor},
                  {"lr_schedule", c.train.cosine_schedule ? "cosine" : "constant"}};
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    return j;
}

PipelineConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Format, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const PipelineConfig& cfg)
{
    json j = config_to_json(cfg);
    j.erase("threads");
    const std::string s = j.dump();
    return hex64(fnv1a64(s.data(), s.size()));
}

std::string embed_hash(const PipelineConfig& cfg)
{
    json j = config_to_json(cfg);
    for (const char* k : {"model", "train", "threads"}) j.erase(k);
    j["coupling"].erase("decode_mode");
    const std::string s = j.dump();
    return hex64(fnv1a64(s.data(), s.size()));
}

}  // namespace otgeo

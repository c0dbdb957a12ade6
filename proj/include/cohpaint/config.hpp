#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "cohpaint/train.hpp"

namespace cohpaint {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One structured config drives every subcommand; unknown keys are rejected
// and the fully resolved config is written next to each run's outputs.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "runs/out";

    struct {
        std::string root;
        int crop = 0;
    } dataset;

    struct {
        int count = 100;
        int k = 4;
        int height = 64;
        int width = 64;
        std::string layout = "voronoi";
    } synth;

    MaskSpec mask;
    ModelConfig model;

    struct {
        int iterations = 2000;
        int batch_size = 8;
        double g_lr = 1e-4;
        double d_lr = 4e-4;
        double beta1 = 0.5;
        double beta2 = 0.999;
        int d_steps = 1;
        int checkpoint_interval = 500;
        int log_interval = 100;
        int check_finite_every = 50;
        int disc_base_channels = 32;
        double w_adv = 0.2;
        double w_xe = 1.0;
        double w_co = 0.1;
        int coherence_patch = 7;
        int coherence_stride = 4;
        bool coherence_literal = false;
        std::string resume;
    } train;

    struct {
        std::string checkpoint;
        bool composite = true;
        bool dump_attention = false;
    } infer;

    struct {
        std::string checkpoint;
        bool composite = true;
        bool grids = false;
        int limit = 0;
    } eval;
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{
        {"seed", c.seed},
        {"out_dir", c.out_dir},
        {"dataset", {{"root", c.dataset.root}, {"crop", c.dataset.crop}}},
        {"synth",
         {{"count", c.synth.count},
          {"k", c.synth.k},
          {"height", c.synth.height},
          {"width", c.synth.width},
          {"layout", c.synth.layout}}},
        {"mask", c.mask},
        {"model", c.model},
        {"train",
         {{"iterations", c.train.iterations},
          {"batch_size", c.train.batch_size},
          {"g_lr", c.train.g_lr},
          {"d_lr", c.train.d_lr},
          {"beta1", c.train.beta1},
          {"beta2", c.train.beta2},
          {"d_steps", c.train.d_steps},
          {"checkpoint_interval", c.train.checkpoint_interval},
          {"log_interval", c.train.log_interval},
          {"check_finite_every", c.train.check_finite_every},
          {"disc_base_channels", c.train.disc_base_channels},
          {"weights", {{"adv", c.train.w_adv}, {"xe", c.train.w_xe}, {"co", c.train.w_co}}},
          {"coherence",
           {{"patch_size", c.train.coherence_patch},
            {"stride", c.train.coherence_stride},
            {"literal", c.train.coherence_literal}}},
          {"resume", c.train.resume}}},
        {"infer",
         {{"checkpoint", c.infer.checkpoint},
          {"composite", c.infer.composite},
          {"dump_attention", c.infer.dump_attention}}},
        {"eval",
         {{"checkpoint", c.eval.checkpoint},
          {"composite", c.eval.composite},
          {"grids", c.eval.grids},
          {"limit", c.eval.limit}}}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
    auto get = [](const nlohmann::json& obj, const char* key, auto& dst) {
        if (obj.contains(key)) obj.at(key).get_to(dst);
    };
    get(j, "seed", c.seed);
    get(j, "out_dir", c.out_dir);
    if (j.contains("dataset")) {
        get(j["dataset"], "root", c.dataset.root);
        get(j["dataset"], "crop", c.dataset.crop);
    }
    if (j.contains("synth")) {
        get(j["synth"], "count", c.synth.count);
        get(j["synth"], "k", c.synth.k);
        get(j["synth"], "height", c.synth.height);
        get(j["synth"], "width", c.synth.width);
        get(j["synth"], "layout", c.synth.layout);
    }
    if (j.contains("mask")) {
        nlohmann::json m = nlohmann::json(c.mask);
        m.merge_patch(j["mask"]);
        c.mask = m.get<MaskSpec>();
    }
    if (j.contains("model")) {
        nlohmann::json m = nlohmann::json(c.model);
        m.merge_patch(j["model"]);
        c.model = m.get<ModelConfig>();
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        get(t, "iterations", c.train.iterations);
        get(t, "batch_size", c.train.batch_size);
        get(t, "g_lr", c.train.g_lr);
        get(t, "d_lr", c.train.d_lr);
        get(t, "beta1", c.train.beta1);
        get(t, "beta2", c.train.beta2);
        get(t, "d_steps", c.train.d_steps);
        get(t, "checkpoint_interval", c.train.checkpoint_interval);
        get(t, "log_interval", c.train.log_interval);
        get(t, "check_finite_every", c.train.check_finite_every);
        get(t, "disc_base_channels", c.train.disc_base_channels);
        if (t.contains("weights")) {
            get(t["weights"], "adv", c.train.w_adv);
            get(t["weights"], "xe", c.train.w_xe);
            get(t["weights"], "co", c.train.w_co);
        }
        if (t.contains("coherence")) {
            get(t["coherence"], "patch_size", c.train.coherence_patch);
            get(t["coherence"], "stride", c.train.coherence_stride);
            get(t["coherence"], "literal", c.train.coherence_literal);
        }
        get(t, "resume", c.train.resume);
    }
    if (j.contains("infer")) {
        get(j["infer"], "checkpoint", c.infer.checkpoint);
        get(j["infer"], "composite", c.infer.composite);
        get(j["infer"], "dump_attention", c.infer.dump_attention);
    }
    if (j.contains("eval")) {
        get(j["eval"], "checkpoint", c.eval.checkpoint);
        get(j["eval"], "composite", c.eval.composite);
        get(j["eval"], "grids", c.eval.grids);
        get(j["eval"], "limit", c.eval.limit);
    }
}

// Every key in `user` must exist in the default schema at the same path.
inline void reject_unknown_keys(const nlohmann::json& user, const nlohmann::json& schema,
                                const std::string& path = "") {
    if (!user.is_object()) return;
    for (const auto& [key, value] : user.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!schema.is_object() || !schema.contains(key))
            throw config_error("unknown config key: " + here);
        reject_unknown_keys(value, schema[key], here);
    }
}

// "a.b.c=value" overrides; values parse as JSON scalars, falling back to
// strings.
inline void apply_override(nlohmann::json& j, const std::string& assign) {
    const auto eq = assign.find('=');
    if (eq == std::string::npos) throw config_error("override needs key=value: " + assign);
    const std::string path = assign.substr(0, eq);
    const std::string value = assign.substr(eq + 1);

    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;
    }

    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw config_error("bad override path: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

inline RunConfig load_run_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides) {
    nlohmann::json merged = nlohmann::json(RunConfig{});
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw config_error("cannot read config file " + config_path);
        nlohmann::json user;
        try {
            f >> user;
        } catch (const nlohmann::json::exception& e) {
            throw config_error(std::string("config parse error: ") + e.what());
        }
        reject_unknown_keys(user, merged);
        merged.merge_patch(user);
    }
    for (const std::string& o : overrides) {
        nlohmann::json patch = nlohmann::json::object();
        apply_override(patch, o);
        reject_unknown_keys(patch, merged);
        merged.merge_patch(patch);
    }
    return merged.get<RunConfig>();
}

inline void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(std::filesystem::path(out_dir) / "config.resolved.json");
    f << nlohmann::json(cfg).dump(2) << "\n";
}

inline std::string config_schema_text() {
    return nlohmann::json(RunConfig{}).dump(2);
}

// RunConfig -> the train module's config
inline TrainConfig make_train_config(const RunConfig& c) {
    TrainConfig t;
    t.iterations = c.train.iterations;
    t.batch_size = c.train.batch_size;
    t.g_lr = c.train.g_lr;
    t.d_lr = c.train.d_lr;
    t.beta1 = c.train.beta1;
    t.beta2 = c.train.beta2;
    t.d_steps = c.train.d_steps;
    t.seed = c.seed;
    t.checkpoint_interval = c.train.checkpoint_interval;
    t.log_interval = c.train.log_interval;
    t.check_finite_every = c.train.check_finite_every;
    t.crop = c.dataset.crop;
    t.disc_base_channels = c.train.disc_base_channels;
    t.weights = LossWeights{c.train.w_adv, c.train.w_xe, c.train.w_co};
    t.model = c.model;
    t.mask = c.mask;
    t.coherence.patch_size = c.train.coherence_patch;
    t.coherence.stride = c.train.coherence_stride;
    t.coherence.literal = c.train.coherence_literal;
    t.data_root = c.dataset.root;
    t.out_dir = c.out_dir;
    return t;
}

} // namespace cohpaint

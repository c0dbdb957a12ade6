#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "cohpaint/dataset.hpp"
#include "cohpaint/losses.hpp"
#include "cohpaint/model.hpp"

namespace cohpaint {

struct checkpoint_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct train_abort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kCheckpointFormatVersion = 1;

struct TrainConfig {
    int iterations = 2000;
    int batch_size = 8;
    double g_lr = 1e-4;
    double d_lr = 4e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int d_steps = 1;
    std::uint64_t seed = 0;
    int checkpoint_interval = 500;
    int log_interval = 100;
    int check_finite_every = 50;
    int crop = 0;  // 0: native resolution
    int disc_base_channels = 32;
    LossWeights weights;
    ModelConfig model;
    MaskSpec mask;
    CoherenceConfig coherence;
    std::string data_root;
    std::string out_dir;

    void validate() const {
        if (iterations < 0 || batch_size < 1 || d_steps < 1) throw spec_error("bad train counts");
        if (checkpoint_interval < 1 || log_interval < 1) throw spec_error("bad train intervals");
        if (data_root.empty() || out_dir.empty()) throw spec_error("train needs data_root and out_dir");
        weights.validate();
        model.validate();
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
    j = nlohmann::json{{"k", m.k},
                       {"base_channels", m.base_channels},
                       {"cim_blocks", m.cim_blocks},
                       {"cim_dilations", m.cim_dilations},
                       {"patch_size", m.patch_size},
                       {"fusion_dilations", m.fusion_dilations},
                       {"softmax_temperature", m.softmax_temperature},
                       {"attention_mode",
                        m.attention_mode == AttentionMode::semantic ? "semantic" : "class_agnostic"}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
    j.at("k").get_to(m.k);
    j.at("base_channels").get_to(m.base_channels);
    j.at("cim_blocks").get_to(m.cim_blocks);
    j.at("cim_dilations").get_to(m.cim_dilations);
    j.at("patch_size").get_to(m.patch_size);
    j.at("fusion_dilations").get_to(m.fusion_dilations);
    j.at("softmax_temperature").get_to(m.softmax_temperature);
    m.attention_mode = j.at("attention_mode").get<std::string>() == "semantic"
                           ? AttentionMode::semantic
                           : AttentionMode::class_agnostic;
}

inline void to_json(nlohmann::json& j, const MaskSpec& m) {
    j = nlohmann::json{{"mode", m.mode == MaskMode::center ? "center" : "irregular"},
                       {"center_fraction", m.center_fraction},
                       {"stroke_count", m.stroke_count},
                       {"stroke_width_min", m.stroke_width_min},
                       {"stroke_width_max", m.stroke_width_max},
                       {"stroke_steps_min", m.stroke_steps_min},
                       {"stroke_steps_max", m.stroke_steps_max},
                       {"min_ratio", m.min_ratio},
                       {"max_ratio", m.max_ratio},
                       {"seed", m.seed}};
}

inline void from_json(const nlohmann::json& j, MaskSpec& m) {
    m.mode = j.at("mode").get<std::string>() == "center" ? MaskMode::center : MaskMode::irregular;
    j.at("center_fraction").get_to(m.center_fraction);
    j.at("stroke_count").get_to(m.stroke_count);
    j.at("stroke_width_min").get_to(m.stroke_width_min);
    j.at("stroke_width_max").get_to(m.stroke_width_max);
    j.at("stroke_steps_min").get_to(m.stroke_steps_min);
    j.at("stroke_steps_max").get_to(m.stroke_steps_max);
    j.at("min_ratio").get_to(m.min_ratio);
    j.at("max_ratio").get_to(m.max_ratio);
    j.at("seed").get_to(m.seed);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"iterations", c.iterations},
                       {"batch_size", c.batch_size},
                       {"g_lr", c.g_lr},
                       {"d_lr", c.d_lr},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"d_steps", c.d_steps},
                       {"seed", c.seed},
                       {"checkpoint_interval", c.checkpoint_interval},
                       {"log_interval", c.log_interval},
                       {"check_finite_every", c.check_finite_every},
                       {"crop", c.crop},
                       {"disc_base_channels", c.disc_base_channels},
                       {"weights", {{"adv", c.weights.adv}, {"xe", c.weights.xe}, {"co", c.weights.co}}},
                       {"model", c.model},
                       {"mask", c.mask},
                       {"coherence",
                        {{"patch_size", c.coherence.patch_size},
                         {"stride", c.coherence.stride},
                         {"literal", c.coherence.literal}}},
                       {"data_root", c.data_root},
                       {"out_dir", c.out_dir}};
}

// Covers everything that shapes the training trajectory. The iteration
// budget, logging cadence and output location may change between resumes.
inline std::uint64_t train_config_hash(const TrainConfig& c) {
    nlohmann::json j = c;
    j.erase("out_dir");
    j.erase("iterations");
    j.erase("checkpoint_interval");
    j.erase("log_interval");
    j.erase("check_finite_every");
    return hash_str(j.dump());
}

// ---------------------------------------------------------------------------
// Checkpoints: <out>/ckpt/<iter>/{manifest.json, weights.bin}. The blob holds
// parameter values and Adam moments for the generator and all three
// discriminators, in registration order.

namespace detail {

template <class T>
void append_store(std::vector<float>& blob, const ParamStore<T>& s) {
    for (int i = 0; i < s.size(); ++i) {
        const auto& e = s[i];
        for (long j = 0; j < e.value.numel(); ++j) blob.push_back(static_cast<float>(e.value[j]));
        for (long j = 0; j < e.m.numel(); ++j) blob.push_back(static_cast<float>(e.m[j]));
        for (long j = 0; j < e.v.numel(); ++j) blob.push_back(static_cast<float>(e.v[j]));
    }
}

template <class T>
void read_store(const std::vector<float>& blob, std::size_t& off, ParamStore<T>& s) {
    for (int i = 0; i < s.size(); ++i) {
        auto& e = s[i];
        if (off + 3 * static_cast<std::size_t>(e.value.numel()) > blob.size())
            throw checkpoint_error("corrupt checkpoint: blob too short");
        for (long j = 0; j < e.value.numel(); ++j) e.value[j] = static_cast<T>(blob[off++]);
        for (long j = 0; j < e.m.numel(); ++j) e.m[j] = static_cast<T>(blob[off++]);
        for (long j = 0; j < e.v.numel(); ++j) e.v[j] = static_cast<T>(blob[off++]);
    }
}

inline std::uint32_t blob_adler(const std::vector<float>& blob) {
    return static_cast<std::uint32_t>(
        adler32(adler32(0L, nullptr, 0), reinterpret_cast<const Bytef*>(blob.data()),
                static_cast<uInt>(blob.size() * sizeof(float))));
}

} // namespace detail

// label map -> color image for sample grids
inline Tensor<float> colorize_labels(const Tensor<int>& labels, int k) {
    Tensor<float> out({3, labels.dim(0), labels.dim(1)});
    const long plane = labels.numel();
    for (long p = 0; p < plane; ++p) {
        const auto rgb = detail::hsv_to_rgb(static_cast<double>(labels[p]) / std::max(k, 1), 0.85, 0.95);
        out[p] = rgb.r;
        out[plane + p] = rgb.g;
        out[2 * plane + p] = rgb.b;
    }
    return out;
}

// ---------------------------------------------------------------------------

class Trainer {
public:
    using T = float;

    explicit Trainer(TrainConfig cfg)
        : cfg_(std::move(cfg)),
          gen_(cfg_.model),
          d_("d", 3, cfg_.disc_base_channels),
          ds_("ds", 3 + cfg_.model.k, cfg_.disc_base_channels),
          dt_("dt", cfg_.model.k + 3, cfg_.disc_base_channels),
          dataset_(Dataset::open(cfg_.data_root, Split::train)) {
        cfg_.validate();
        if (!dataset_.has_labels())
            throw spec_error("training requires labels: coherence and segmentation losses need them");
        gen_.init_params(cfg_.seed);
        d_.init_params(derive_seed(cfg_.seed, "disc"));
        ds_.init_params(derive_seed(cfg_.seed, "disc_s"));
        dt_.init_params(derive_seed(cfg_.seed, "disc_t"));
    }

    const TrainConfig& config() const { return cfg_; }
    Generator<T>& generator() { return gen_; }
    const Dataset& dataset() const { return dataset_; }
    long iteration() const { return iter_; }
    long fallback_patches_total() const { return fallback_total_; }

    struct Batch {
        std::vector<Sample> samples;
        std::vector<Tensor<T>> masks;
        std::vector<int> ids;
    };

    Batch make_batch(long iter) const {
        Batch b;
        Rng pick(derive_seed(cfg_.seed, "batch", static_cast<std::uint64_t>(iter)));
        for (int s = 0; s < cfg_.batch_size; ++s) {
            const int i = pick.uniform_int(dataset_.size());
            Rng crop_rng(derive_seed(cfg_.seed, "crop",
                                     static_cast<std::uint64_t>(iter) * cfg_.batch_size + s));
            Sample sample = cfg_.crop > 0 ? dataset_.get_cropped(i, cfg_.crop, crop_rng)
                                          : dataset_.get(i);
            MaskSpec ms = cfg_.mask;
            ms.seed = derive_seed(cfg_.seed, "m",
                                  static_cast<std::uint64_t>(iter) * cfg_.batch_size + s);
            b.masks.push_back(generate_mask(ms, sample.image.dim(1), sample.image.dim(2)));
            b.samples.push_back(std::move(sample));
            b.ids.push_back(i);
        }
        return b;
    }

    // One optimisation step: discriminators first on detached generator
    // outputs, then the generator on the full objective.
    LossBreakdown step() {
        const Batch batch = make_batch(iter_);
        const int B = cfg_.batch_size;
        const T invB = T(1) / static_cast<T>(B);

        // generator forward (gradients on)
        Tape<T> t;
        auto g_leaves = gen_.bind(t, true);
        std::vector<FeatureState> states;
        states.reserve(static_cast<std::size_t>(B));
        for (int s = 0; s < B; ++s) {
            states.push_back(gen_.forward(t, g_leaves, batch.samples[static_cast<std::size_t>(s)].image.cast<T>(),
                                          batch.masks[static_cast<std::size_t>(s)]));
            fallback_total_ += states.back().fallback_patches;
        }

        LossBreakdown out;

        // ---- discriminator phase (detached fakes) ----
        for (int dstep = 0; dstep < cfg_.d_steps; ++dstep) {
            Tape<T> td;
            auto dl = d_.bind(td, true);
            auto dsl = ds_.bind(td, true);
            auto dtl = dt_.bind(td, true);
            auto apply_d = [&](Tape<T>& tt, VarId x) { return d_.forward(tt, dl, x); };
            auto apply_ds = [&](Tape<T>& tt, VarId x) { return ds_.forward(tt, dsl, x); };
            auto apply_dt = [&](Tape<T>& tt, VarId x) { return dt_.forward(tt, dtl, x); };
            VarId adv_acc{}, sco_acc{};
            for (int s = 0; s < B; ++s) {
                const Tensor<T> fake_img = t.val(states[static_cast<std::size_t>(s)].img[4]);
                const Tensor<T> fake_seg = t.val(states[static_cast<std::size_t>(s)].seg[4]);
                const Tensor<T> real = batch.samples[static_cast<std::size_t>(s)].image.cast<T>();
                const Tensor<T> onehot =
                    one_hot<T>(batch.samples[static_cast<std::size_t>(s)].labels, cfg_.model.k);
                VarId a = adversarial_d_loss(td, apply_d, real, fake_img);
                VarId c = structure_coherence_d_loss(td, apply_ds, apply_dt, real, onehot,
                                                     fake_img, fake_seg);
                adv_acc = s == 0 ? a : add(td, adv_acc, a);
                sco_acc = s == 0 ? c : add(td, sco_acc, c);
            }
            adv_acc = mul_scalar(td, adv_acc, invB);
            sco_acc = mul_scalar(td, sco_acc, invB);
            out.adv_d = td.val(adv_acc)[0];
            out.sco_d = td.val(sco_acc)[0];
            td.backward(add(td, adv_acc, sco_acc));
            const AdamConfig ac{cfg_.d_lr, cfg_.beta1, cfg_.beta2, 1e-8};
            adam_step(d_.params(), td, dl, ac, d_step_ + 1);
            adam_step(ds_.params(), td, dsl, ac, d_step_ + 1);
            adam_step(dt_.params(), td, dtl, ac, d_step_ + 1);
            ++d_step_;
        }

        // ---- generator phase (updated discriminators, no grads into them) ----
        auto dl = d_.bind(t, false);
        auto dsl = ds_.bind(t, false);
        auto dtl = dt_.bind(t, false);
        auto apply_d = [&](Tape<T>& tt, VarId x) { return d_.forward(tt, dl, x); };
        auto apply_ds = [&](Tape<T>& tt, VarId x) { return ds_.forward(tt, dsl, x); };
        auto apply_dt = [&](Tape<T>& tt, VarId x) { return dt_.forward(tt, dtl, x); };

        VarId l1{}, xe{}, adv{}, nlco{}, sco{};
        for (int s = 0; s < B; ++s) {
            const Sample& sample = batch.samples[static_cast<std::size_t>(s)];
            const FeatureState& fs = states[static_cast<std::size_t>(s)];
            const Tensor<T> image = sample.image.cast<T>();
            const Tensor<T> onehot = one_hot<T>(sample.labels, cfg_.model.k);

            std::vector<VarId> imgs(fs.img.begin(), fs.img.end());
            std::vector<VarId> segs(fs.seg.begin(), fs.seg.end());
            VarId a = reconstruction_loss(t, imgs, image);
            VarId b = cross_entropy_loss(t, segs, sample.labels);
            VarId c = adversarial_g_loss(t, apply_d, fs.img[4]);
            VarId e = structure_coherence_g_loss(t, apply_ds, apply_dt, image, onehot, fs.img[4],
                                                 fs.seg[4]);
            CoherenceConfig cc = cfg_.coherence;
            cc.seed = derive_seed(cfg_.seed, "nlco",
                                  static_cast<std::uint64_t>(iter_) * B + s);
            const Tensor<int> pred_labels = labels_from_probs(t.val(fs.seg[4]));
            VarId f = nonlocal_coherence_loss(t, fs.img[4], image, sample.labels, pred_labels,
                                              batch.masks[static_cast<std::size_t>(s)], cc);
            l1 = s == 0 ? a : add(t, l1, a);
            xe = s == 0 ? b : add(t, xe, b);
            adv = s == 0 ? c : add(t, adv, c);
            sco = s == 0 ? e : add(t, sco, e);
            nlco = s == 0 ? f : add(t, nlco, f);
        }
        l1 = mul_scalar(t, l1, invB);
        xe = mul_scalar(t, xe, invB);
        adv = mul_scalar(t, adv, invB);
        sco = mul_scalar(t, sco, invB);
        nlco = mul_scalar(t, nlco, invB);
        VarId total = total_loss(t, l1, adv, xe, nlco, sco, cfg_.weights);

        out.l1 = t.val(l1)[0];
        out.xe = t.val(xe)[0];
        out.adv_g = t.val(adv)[0];
        out.sco = t.val(sco)[0];
        out.nlco = t.val(nlco)[0];
        out.total = t.val(total)[0];

        if (!std::isfinite(out.total) || !std::isfinite(out.adv_d) || !std::isfinite(out.sco_d))
            abort_with_dump(batch, out);

        t.backward(total);
        adam_step(gen_.params(), t, g_leaves, AdamConfig{cfg_.g_lr, cfg_.beta1, cfg_.beta2, 1e-8},
                  g_step_ + 1);
        ++g_step_;
        ++iter_;
        return out;
    }

    // Generator objective on the batch of a given iteration, no updates.
    double evaluate_batch_loss(long iter) {
        const Batch batch = make_batch(iter);
        const int B = cfg_.batch_size;
        Tape<T> t;
        auto g_leaves = gen_.bind(t, false);
        auto dl = d_.bind(t, false);
        auto dsl = ds_.bind(t, false);
        auto dtl = dt_.bind(t, false);
        auto apply_d = [&](Tape<T>& tt, VarId x) { return d_.forward(tt, dl, x); };
        auto apply_ds = [&](Tape<T>& tt, VarId x) { return ds_.forward(tt, dsl, x); };
        auto apply_dt = [&](Tape<T>& tt, VarId x) { return dt_.forward(tt, dtl, x); };
        VarId total{};
        for (int s = 0; s < B; ++s) {
            const Sample& sample = batch.samples[static_cast<std::size_t>(s)];
            FeatureState fs = gen_.forward(t, g_leaves, sample.image.cast<T>(),
                                           batch.masks[static_cast<std::size_t>(s)]);
            const Tensor<T> image = sample.image.cast<T>();
            const Tensor<T> onehot = one_hot<T>(sample.labels, cfg_.model.k);
            std::vector<VarId> imgs(fs.img.begin(), fs.img.end());
            std::vector<VarId> segs(fs.seg.begin(), fs.seg.end());
            CoherenceConfig cc = cfg_.coherence;
            cc.seed = derive_seed(cfg_.seed, "nlco", static_cast<std::uint64_t>(iter) * B + s);
            const Tensor<int> pred_labels = labels_from_probs(t.val(fs.seg[4]));
            VarId v = total_loss(
                t, reconstruction_loss(t, imgs, image), adversarial_g_loss(t, apply_d, fs.img[4]),
                cross_entropy_loss(t, segs, sample.labels),
                nonlocal_coherence_loss(t, fs.img[4], image, sample.labels, pred_labels,
                                        batch.masks[static_cast<std::size_t>(s)], cc),
                structure_coherence_g_loss(t, apply_ds, apply_dt, image, onehot, fs.img[4],
                                           fs.seg[4]),
                cfg_.weights);
            total = s == 0 ? v : add(t, total, v);
        }
        return t.val(total)[0] / B;
    }

    // ---- checkpointing ----

    std::string save_checkpoint() const {
        namespace fs = std::filesystem;
        const fs::path dir = fs::path(cfg_.out_dir) / "ckpt";
        fs::create_directories(dir);
        const fs::path tmp = dir / (".tmp-" + std::to_string(iter_));
        const fs::path final_dir = dir / std::to_string(iter_);
        fs::remove_all(tmp);
        fs::create_directories(tmp);

        std::vector<float> blob;
        detail::append_store(blob, gen_.params());
        detail::append_store(blob, d_.params());
        detail::append_store(blob, ds_.params());
        detail::append_store(blob, dt_.params());

        nlohmann::json manifest;
        manifest["format_version"] = kCheckpointFormatVersion;
        manifest["iteration"] = iter_;
        manifest["g_step"] = g_step_;
        manifest["d_step"] = d_step_;
        manifest["model"] = cfg_.model;
        manifest["disc_base_channels"] = cfg_.disc_base_channels;
        manifest["train_config_hash"] = train_config_hash(cfg_);
        manifest["blob"] = "weights.bin";
        manifest["blob_floats"] = blob.size();
        manifest["blob_adler32"] = detail::blob_adler(blob);
        manifest["metrics"] = {{"l1", last_.l1},   {"adv_g", last_.adv_g}, {"adv_d", last_.adv_d},
                               {"xe", last_.xe},   {"nlco", last_.nlco},   {"sco", last_.sco},
                               {"total", last_.total}};

        {
            std::ofstream mf(tmp / "manifest.json");
            mf << manifest.dump(2) << "\n";
        }
        {
            std::ofstream bf(tmp / "weights.bin", std::ios::binary);
            bf.write(reinterpret_cast<const char*>(blob.data()),
                     static_cast<std::streamsize>(blob.size() * sizeof(float)));
            if (!bf) throw checkpoint_error("failed to write weight blob");
        }
        fs::remove_all(final_dir);
        fs::rename(tmp, final_dir);
        return final_dir.string();
    }

    void load_checkpoint(const std::string& ckpt_dir) {
        const nlohmann::json manifest = read_manifest(ckpt_dir);
        if (manifest.at("train_config_hash").get<std::uint64_t>() != train_config_hash(cfg_))
            throw checkpoint_error("config mismatch: checkpoint was written by a different train config");
        std::vector<float> blob = read_blob(ckpt_dir, manifest);
        std::size_t off = 0;
        detail::read_store(blob, off, gen_.params());
        detail::read_store(blob, off, d_.params());
        detail::read_store(blob, off, ds_.params());
        detail::read_store(blob, off, dt_.params());
        if (off != blob.size()) throw checkpoint_error("corrupt checkpoint: trailing blob data");
        iter_ = manifest.at("iteration").get<long>();
        g_step_ = manifest.at("g_step").get<long>();
        d_step_ = manifest.at("d_step").get<long>();
    }

    static nlohmann::json read_manifest(const std::string& ckpt_dir) {
        std::ifstream mf(std::filesystem::path(ckpt_dir) / "manifest.json");
        if (!mf) throw checkpoint_error("missing manifest.json under " + ckpt_dir);
        nlohmann::json manifest;
        try {
            mf >> manifest;
        } catch (const nlohmann::json::exception&) {
            throw checkpoint_error("corrupt checkpoint: unreadable manifest");
        }
        const int ver = manifest.at("format_version").get<int>();
        if (ver != kCheckpointFormatVersion)
            throw checkpoint_error("checkpoint format version mismatch: file has " +
                                   std::to_string(ver) + ", expected " +
                                   std::to_string(kCheckpointFormatVersion));
        return manifest;
    }

    static std::vector<float> read_blob(const std::string& ckpt_dir, const nlohmann::json& manifest) {
        namespace fs = std::filesystem;
        const fs::path p = fs::path(ckpt_dir) / manifest.at("blob").get<std::string>();
        std::ifstream bf(p, std::ios::binary);
        if (!bf) throw checkpoint_error("missing weight blob under " + ckpt_dir);
        const std::size_t count = manifest.at("blob_floats").get<std::size_t>();
        std::vector<float> blob(count);
        bf.read(reinterpret_cast<char*>(blob.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (static_cast<std::size_t>(bf.gcount()) != count * sizeof(float))
            throw checkpoint_error("corrupt checkpoint: truncated weight blob");
        if (detail::blob_adler(blob) != manifest.at("blob_adler32").get<std::uint32_t>())
            throw checkpoint_error("corrupt checkpoint: blob checksum mismatch");
        return blob;
    }

    // ---- the full loop ----

    struct FitResult {
        std::string final_checkpoint;
        std::vector<LossBreakdown> log;
    };

    FitResult fit(const std::optional<std::string>& resume_from = std::nullopt) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg_.out_dir);
        if (resume_from) load_checkpoint(*resume_from);

        const bool fresh = !resume_from;
        std::ofstream csv(fs::path(cfg_.out_dir) / "train_log.csv",
                          fresh ? std::ios::trunc : std::ios::app);
        if (fresh) csv << "iteration,l1,adv_g,adv_d,xe,nlco,sco,total\n";

        FitResult result;
        while (iter_ < cfg_.iterations) {
            const long it = iter_;
            last_ = step();
            result.log.push_back(last_);
            csv << it << ',' << last_.l1 << ',' << last_.adv_g << ',' << last_.adv_d << ','
                << last_.xe << ',' << last_.nlco << ',' << last_.sco << ',' << last_.total << '\n';
            csv.flush();
            if ((it + 1) % cfg_.log_interval == 0) write_sample_grid();
            if (cfg_.check_finite_every > 0 && (it + 1) % cfg_.check_finite_every == 0)
                if (!gen_.params().all_finite())
                    throw train_abort("non-finite generator parameter at iteration " +
                                      std::to_string(it + 1));
            if ((it + 1) % cfg_.checkpoint_interval == 0 && it + 1 != cfg_.iterations)
                save_checkpoint();
        }
        result.final_checkpoint = save_checkpoint();
        return result;
    }

    void write_sample_grid() const {
        namespace fs = std::filesystem;
        fs::create_directories(fs::path(cfg_.out_dir) / "samples");
        const Batch batch = make_batch(iter_ > 0 ? iter_ - 1 : 0);
        const int rows = std::min(4, cfg_.batch_size);
        const int h = batch.samples[0].image.dim(1), w = batch.samples[0].image.dim(2);
        Tensor<float> grid({3, rows * h, 4 * w});
        for (int r = 0; r < rows; ++r) {
            const Sample& s = batch.samples[static_cast<std::size_t>(r)];
            const Tensor<T>& mask = batch.masks[static_cast<std::size_t>(r)];
            auto pred = gen_.predict(s.image.cast<T>(), mask);
            const Tensor<float> masked = composite(Tensor<float>({3, h, w}, 0.0f), s.image, mask);
            const Tensor<float> seg_color =
                colorize_labels(labels_from_probs(pred.seg_probs), cfg_.model.k);
            auto paste = [&](const Tensor<float>& img, int col) {
                for (int c = 0; c < 3; ++c)
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x)
                            grid.at(c, r * h + y, col * w + x) = img.at(c, y, x);
            };
            paste(masked, 0);
            paste(pred.image, 1);
            paste(seg_color, 2);
            paste(s.image, 3);
        }
        char name[64];
        std::snprintf(name, sizeof(name), "iter_%06ld.png", iter_);
        save_image_png((fs::path(cfg_.out_dir) / "samples" / name).string(), grid);
    }

private:
    void abort_with_dump(const Batch& batch, const LossBreakdown& lb) const {
        namespace fs = std::filesystem;
        fs::create_directories(cfg_.out_dir);
        nlohmann::json dump;
        dump["iteration"] = iter_;
        dump["batch_ids"] = batch.ids;
        dump["losses"] = {{"l1", lb.l1}, {"adv_g", lb.adv_g}, {"adv_d", lb.adv_d},
                          {"xe", lb.xe}, {"nlco", lb.nlco},   {"sco", lb.sco}};
        std::ofstream f(fs::path(cfg_.out_dir) / "nan_dump.json");
        f << dump.dump(2) << "\n";
        throw train_abort("non-finite loss at iteration " + std::to_string(iter_) +
                          "; diagnostics in nan_dump.json");
    }

    TrainConfig cfg_;
    Generator<T> gen_;
    PatchDiscriminator<T> d_, ds_, dt_;
    Dataset dataset_;
    long iter_ = 0;
    long g_step_ = 0;
    long d_step_ = 0;
    long fallback_total_ = 0;
    LossBreakdown last_;
};

// Rebuilds just the generator from a checkpoint (for inference/evaluation).
inline Generator<float> load_generator(const std::string& ckpt_dir) {
    const nlohmann::json manifest = Trainer::read_manifest(ckpt_dir);
    ModelConfig mc = manifest.at("model").get<ModelConfig>();
    Generator<float> gen(mc);
    const std::vector<float> blob = Trainer::read_blob(ckpt_dir, manifest);
    std::size_t off = 0;
    detail::read_store(blob, off, gen.params());
    return gen;
}

} // namespace cohpaint

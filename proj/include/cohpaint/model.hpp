#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "cohpaint/image_ops.hpp"
#include "cohpaint/nn.hpp"
#include "cohpaint/swap.hpp"
#include "cohpaint/tensor.hpp"

namespace cohpaint {

struct ModelConfig {
    int k = 4;
    int base_channels = 32;
    int cim_blocks = 4;
    std::array<int, 4> cim_dilations{1, 2, 4, 8};
    int patch_size = 3;
    std::array<int, 4> fusion_dilations{1, 2, 4, 8};
    double softmax_temperature = 1.0;
    AttentionMode attention_mode = AttentionMode::semantic;

    // channel width at scale l in 1..5, coarse to fine, capped at 256
    int channels(int l) const { return std::min(256, base_channels << (5 - l)); }

    void validate() const {
        if (k < 2) throw spec_error("model k must be >= 2");
        if (base_channels < 4 || base_channels % 4 != 0)
            throw spec_error("base_channels must be a positive multiple of 4");
        if (patch_size % 2 == 0 || patch_size < 1) throw spec_error("patch_size must be odd");
        if (cim_blocks < 1) throw spec_error("cim_blocks must be positive");
    }

    bool operator==(const ModelConfig&) const = default;
};

// Per-image forward products on a tape: encoder features, decoder features,
// per-scale predictions and attention diagnostics.
struct FeatureState {
    std::array<VarId, kNumScales> enc{};
    std::array<VarId, kNumScales> dec{};
    std::array<VarId, kNumScales> img{};   // predictions in [0,1]
    std::array<VarId, kNumScales> seg{};   // channel-softmaxed probabilities
    std::array<std::shared_ptr<AttentionRecords>, kNumScales - 1> attention{};
    long fallback_patches = 0;
};

// Shared encoder, context inference at the coarsest scale, and the
// coarse-to-fine decoder with per-scale inpainting/segmentation heads wired
// through semantic-wise attention between scales.
template <class T>
class Generator {
public:
    explicit Generator(ModelConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        register_params();
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }

    void init_params(std::uint64_t seed) { store_.init_he_normal(derive_seed(seed, "generator")); }

    std::vector<VarId> bind(Tape<T>& t, bool needs_grad) const {
        return bind_params(t, store_, needs_grad);
    }

    // sample.image must already be valid; masking happens here.
    FeatureState forward(Tape<T>& t, const std::vector<VarId>& leaves, const Tensor<T>& image,
                         const Tensor<T>& mask, bool record_attention = false) const {
        const int h = image.dim(1), w = image.dim(2);
        if (h % 16 != 0 || w % 16 != 0)
            throw shape_error("generator: input size must be divisible by 16");
        if (mask.dim(0) != h || mask.dim(1) != w) throw shape_error("generator: mask size mismatch");

        // zero the missing region and stack the mask as a fourth channel
        Tensor<T> input({4, h, w});
        const long plane = static_cast<long>(h) * w;
        for (int c = 0; c < 3; ++c)
            for (long p = 0; p < plane; ++p)
                input[c * plane + p] = image[c * plane + p] * (T(1) - mask[p]);
        for (long p = 0; p < plane; ++p) input[3 * plane + p] = mask[p];

        const ScalePyramid<T> mask_pyr = build_pyramid(mask, PyramidKind::mask);

        FeatureState fs;
        VarId x = t.constant(std::move(input));

        // encoder: finest stage keeps resolution, then four stride-2 stages
        for (int l = kNumScales; l >= 1; --l) {
            x = gated_conv(t, x, leaves[idx("enc.s" + std::to_string(l) + ".w")],
                           leaves[idx("enc.s" + std::to_string(l) + ".b")],
                           {l == kNumScales ? 1 : 2, 1});
            fs.enc[static_cast<std::size_t>(l - 1)] = x;
        }

        // context inference at the coarsest scale
        fs.dec[0] = complete_context(t, leaves, fs.enc[0], mask_pyr.level(1));
        std::tie(fs.img[0], fs.seg[0]) = heads(t, leaves, fs.dec[0], 1);

        AttentionConfig attn;
        attn.patch_size = cfg_.patch_size;
        attn.temperature = cfg_.softmax_temperature;
        attn.mode = cfg_.attention_mode;
        attn.record = record_attention;

        for (int l = 1; l < kNumScales; ++l) {
            SwapWeights sw = swap_weights(t, leaves, l + 1);
            auto [phi, records] =
                swap_propagate(t, fs.dec[static_cast<std::size_t>(l - 1)],
                               fs.enc[static_cast<std::size_t>(l)], t.val(fs.seg[static_cast<std::size_t>(l - 1)]),
                               mask_pyr.level(l + 1), sw, attn);
            fs.dec[static_cast<std::size_t>(l)] = phi;
            fs.attention[static_cast<std::size_t>(l - 1)] = records;
            if (records)
                for (const AttentionRecord& r : *records)
                    if (r.fallback) ++fs.fallback_patches;
            std::tie(fs.img[static_cast<std::size_t>(l)], fs.seg[static_cast<std::size_t>(l)]) =
                heads(t, leaves, phi, l + 1);
        }
        return fs;
    }

    // Convenience: run inference on its own tape and return plain tensors.
    struct Prediction {
        Tensor<T> image;       // finest-scale prediction
        Tensor<T> seg_probs;   // finest-scale probabilities
        std::array<std::shared_ptr<AttentionRecords>, kNumScales - 1> attention;
        long fallback_patches = 0;
    };
    Prediction predict(const Tensor<T>& image, const Tensor<T>& mask,
                       bool record_attention = false) const {
        Tape<T> t;
        auto leaves = bind(t, false);
        FeatureState fs = forward(t, leaves, image, mask, record_attention);
        Prediction p;
        p.image = t.val(fs.img[kNumScales - 1]);
        p.seg_probs = t.val(fs.seg[kNumScales - 1]);
        p.attention = fs.attention;
        p.fallback_patches = fs.fallback_patches;
        return p;
    }

    int param_index(const std::string& name) const { return idx(name); }

private:
    void register_params() {
        auto conv = [this](const std::string& name, int cout, int cin, int ks) {
            index_[name + ".w"] = store_.add(name + ".w", {cout, cin, ks, ks});
            index_[name + ".b"] = store_.add(name + ".b", {cout});
        };
        // encoder (gated: double output channels, split in the activation)
        conv("enc.s5", 2 * cfg_.channels(5), 4, 3);
        for (int l = 4; l >= 1; --l) conv("enc.s" + std::to_string(l), 2 * cfg_.channels(l), cfg_.channels(l + 1), 3);
        // context inference module
        const int c1 = cfg_.channels(1);
        conv("cim.entry", c1, c1 + 1, 3);
        for (int b = 0; b < cfg_.cim_blocks; ++b) {
            conv("cim.b" + std::to_string(b) + ".c1", c1, c1, 3);
            conv("cim.b" + std::to_string(b) + ".c2", c1, c1, 3);
        }
        // per-transition context fusion + dilated fusion, per-scale heads
        for (int l = 2; l <= kNumScales; ++l) {
            const int cl = cfg_.channels(l);
            conv("ctx.l" + std::to_string(l), cl, cfg_.channels(l - 1) + cl, 3);
            for (int i = 0; i < 4; ++i)
                conv("fuse.l" + std::to_string(l) + ".br" + std::to_string(i), cl / 4, cl, 3);
            conv("fuse.l" + std::to_string(l) + ".proj", cl, cl, 1);
        }
        for (int l = 1; l <= kNumScales; ++l) {
            const int cl = cfg_.channels(l);
            const int mid = std::max(cl / 2, 8);
            conv("head.img" + std::to_string(l) + ".c1", mid, cl, 3);
            conv("head.img" + std::to_string(l) + ".c2", 3, mid, 3);
            conv("head.seg" + std::to_string(l) + ".c1", mid, cl, 3);
            conv("head.seg" + std::to_string(l) + ".c2", cfg_.k, mid, 3);
        }
    }

    int idx(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw shape_error("unknown parameter " + name);
        return it->second;
    }

    VarId complete_context(Tape<T>& t, const std::vector<VarId>& leaves, VarId phi1,
                           const Tensor<T>& mask_l1) const {
        Tensor<T> m({1, mask_l1.dim(0), mask_l1.dim(1)},
                    std::vector<T>(mask_l1.data(), mask_l1.data() + mask_l1.numel()));
        VarId x = concat_c(t, phi1, t.constant(std::move(m)));
        x = leaky_relu(t, conv2d(t, x, leaves[idx("cim.entry.w")], leaves[idx("cim.entry.b")]));
        for (int b = 0; b < cfg_.cim_blocks; ++b) {
            const std::string p = "cim.b" + std::to_string(b);
            VarId y = conv2d(t, x, leaves[idx(p + ".c1.w")], leaves[idx(p + ".c1.b")],
                             {1, cfg_.cim_dilations[static_cast<std::size_t>(b % 4)]});
            y = leaky_relu(t, y);
            y = conv2d(t, y, leaves[idx(p + ".c2.w")], leaves[idx(p + ".c2.b")]);
            x = add(t, x, y);
        }
        return x;
    }

    std::pair<VarId, VarId> heads(Tape<T>& t, const std::vector<VarId>& leaves, VarId phi,
                                  int l) const {
        const std::string li = std::to_string(l);
        VarId hi = leaky_relu(
            t, conv2d(t, phi, leaves[idx("head.img" + li + ".c1.w")], leaves[idx("head.img" + li + ".c1.b")]));
        hi = conv2d(t, hi, leaves[idx("head.img" + li + ".c2.w")], leaves[idx("head.img" + li + ".c2.b")]);
        // tanh range-mapped to [0,1]
        VarId img = mul_scalar(t, add_scalar(t, tanh_act(t, hi), T(1)), T(0.5));

        VarId si = leaky_relu(
            t, conv2d(t, phi, leaves[idx("head.seg" + li + ".c1.w")], leaves[idx("head.seg" + li + ".c1.b")]));
        si = conv2d(t, si, leaves[idx("head.seg" + li + ".c2.w")], leaves[idx("head.seg" + li + ".c2.b")]);
        return {img, softmax_c(t, si)};
    }

    SwapWeights swap_weights(Tape<T>& t, const std::vector<VarId>& leaves, int l) const {
        (void)t;
        SwapWeights sw;
        const std::string li = std::to_string(l);
        sw.ctx_w = leaves[idx("ctx.l" + li + ".w")];
        sw.ctx_b = leaves[idx("ctx.l" + li + ".b")];
        for (int i = 0; i < 4; ++i) {
            sw.fusion.branch_w[static_cast<std::size_t>(i)] =
                leaves[idx("fuse.l" + li + ".br" + std::to_string(i) + ".w")];
            sw.fusion.branch_b[static_cast<std::size_t>(i)] =
                leaves[idx("fuse.l" + li + ".br" + std::to_string(i) + ".b")];
        }
        sw.fusion.proj_w = leaves[idx("fuse.l" + li + ".proj.w")];
        sw.fusion.proj_b = leaves[idx("fuse.l" + li + ".proj.b")];
        sw.fusion.dilations = cfg_.fusion_dilations;
        return sw;
    }

    ModelConfig cfg_;
    ParamStore<T> store_;
    std::map<std::string, int> index_;
};

} // namespace cohpaint

#pragma once

#include <array>
#include <string>
#include <vector>

#include "cohpaint/image_ops.hpp"
#include "cohpaint/nn.hpp"
#include "cohpaint/rng.hpp"
#include "cohpaint/synth.hpp"

namespace cohpaint {

struct LossWeights {
    double adv = 0.2;  // lambda_alpha
    double xe = 1.0;   // lambda_xe
    double co = 0.1;   // lambda_co

    void validate() const {
        if (adv < 0 || xe < 0 || co < 0) throw spec_error("loss weights must be non-negative");
    }
};

struct LossBreakdown {
    double l1 = 0, adv_g = 0, adv_d = 0, xe = 0, nlco = 0, sco = 0, total = 0;
    double sco_d = 0;  // structure discriminators' own objective (not part of total)
};

constexpr double kDiscClampEps = 1e-7;
constexpr double kProbClampEps = 1e-8;

// ---------------------------------------------------------------------------
// 4-layer strided PatchGAN. The last conv maps to one sigmoid channel of
// per-patch real/fake scores.
template <class T>
class PatchDiscriminator {
public:
    PatchDiscriminator(std::string name, int in_channels, int base_channels = 32)
        : name_(std::move(name)), in_(in_channels), base_(base_channels) {
        auto conv = [this](const std::string& n, int cout, int cin) {
            store_.add(n + ".w", {cout, cin, 3, 3});
            store_.add(n + ".b", {cout});
        };
        conv(name_ + ".c1", base_, in_);
        conv(name_ + ".c2", 2 * base_, base_);
        conv(name_ + ".c3", 4 * base_, 2 * base_);
        conv(name_ + ".c4", 1, 4 * base_);
    }

    void init_params(std::uint64_t seed) { store_.init_he_normal(derive_seed(seed, name_)); }
    void zero_params() {
        for (int i = 0; i < store_.size(); ++i) store_[i].value.fill(T(0));
    }

    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    const std::string& name() const { return name_; }
    int in_channels() const { return in_; }

    std::vector<VarId> bind(Tape<T>& t, bool needs_grad) const {
        return bind_params(t, store_, needs_grad);
    }

    VarId forward(Tape<T>& t, const std::vector<VarId>& leaves, VarId x) const {
        VarId y = leaky_relu(t, conv2d(t, x, leaves[0], leaves[1], {2, 1}));
        y = leaky_relu(t, conv2d(t, y, leaves[2], leaves[3], {2, 1}));
        y = leaky_relu(t, conv2d(t, y, leaves[4], leaves[5], {2, 1}));
        y = conv2d(t, y, leaves[6], leaves[7], {1, 1});
        return sigmoid(t, y);
    }

private:
    std::string name_;
    int in_, base_;
    ParamStore<T> store_;
};

namespace detail {

template <class T>
VarId mean_log(Tape<T>& t, VarId d) {
    return mean_all(t, log_val(t, clamp(t, d, static_cast<T>(kDiscClampEps),
                                        static_cast<T>(1.0 - kDiscClampEps))));
}

template <class T>
VarId mean_log_one_minus(Tape<T>& t, VarId d) {
    return mean_log(t, sub_from_scalar(t, T(1), d));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Multi-scale reconstruction: sum over the 5 scales of the mean absolute
// error between the target and the upsampled prediction.
template <class T>
VarId reconstruction_loss(Tape<T>& t, const std::vector<VarId>& preds, const Tensor<T>& target) {
    if (preds.size() != kNumScales) throw shape_error("reconstruction_loss: need 5 scales");
    const int h = target.dim(1), w = target.dim(2);
    VarId tgt = t.constant(target);
    VarId acc{};
    for (std::size_t l = 0; l < preds.size(); ++l) {
        VarId up = preds[l];
        const Tensor<T>& pv = t.val(up);
        if (pv.dim(1) != h || pv.dim(2) != w) up = upsample_bilinear(t, up, h, w);
        VarId term = mean_all(t, abs_val(t, sub(t, tgt, up)));
        acc = l == 0 ? term : add(t, acc, term);
    }
    return acc;
}

// Multi-scale cross entropy against integer targets, probabilities clamped.
template <class T>
VarId cross_entropy_loss(Tape<T>& t, const std::vector<VarId>& segs, const Tensor<int>& labels) {
    if (segs.size() != kNumScales) throw shape_error("cross_entropy_loss: need 5 scales");
    const int h = labels.dim(0), w = labels.dim(1);
    VarId acc{};
    for (std::size_t l = 0; l < segs.size(); ++l) {
        VarId up = segs[l];
        const Tensor<T>& pv = t.val(up);
        if (labels.min_value() < 0 || labels.max_value() >= pv.dim(0))
            throw shape_error("cross_entropy_loss: label outside [0,k)");
        if (pv.dim(1) != h || pv.dim(2) != w) up = upsample_bilinear(t, up, h, w);
        VarId picked = select_class(t, up, labels);
        VarId term = mul_scalar(
            t, mean_all(t, log_val(t, clamp(t, picked, static_cast<T>(kProbClampEps), T(2)))), T(-1));
        acc = l == 0 ? term : add(t, acc, term);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Multi-scale adversarial loss over full, 1/2 and 1/4 resolution inputs with
// one shared discriminator. Non-saturating generator objective.

// apply_d is any callable (Tape<T>&, VarId input) -> VarId sigmoid map, so the
// same objectives run against the real PatchGAN or a test stub.
template <class T, class DApply>
VarId adversarial_d_loss(Tape<T>& t, DApply&& apply_d, const Tensor<T>& real,
                         const Tensor<T>& fake) {
    VarId r = t.constant(real);
    VarId f = t.constant(fake);
    VarId acc{};
    for (int k = 0; k < 3; ++k) {
        if (k > 0) {
            r = avgpool2(t, r);
            f = avgpool2(t, f);
        }
        VarId term = add(t, detail::mean_log(t, apply_d(t, r)),
                         detail::mean_log_one_minus(t, apply_d(t, f)));
        acc = k == 0 ? term : add(t, acc, term);
    }
    return mul_scalar(t, acc, T(-1));
}

template <class T, class DApply>
VarId adversarial_g_loss(Tape<T>& t, DApply&& apply_d, VarId fake) {
    VarId f = fake;
    VarId acc{};
    for (int k = 0; k < 3; ++k) {
        if (k > 0) f = avgpool2(t, f);
        VarId term = detail::mean_log(t, apply_d(t, f));
        acc = k == 0 ? term : add(t, acc, term);
    }
    return mul_scalar(t, acc, T(-1));
}

// ---------------------------------------------------------------------------
// Structure coherence (the image<->segmentation conditional pair): D_s judges
// the image given the real segmentation, D_t judges the segmentation given
// the real image.

template <class T, class DsApply, class DtApply>
VarId structure_coherence_d_loss(Tape<T>& t, DsApply&& apply_ds, DtApply&& apply_dt,
                                 const Tensor<T>& real_img, const Tensor<T>& seg_onehot,
                                 const Tensor<T>& fake_img, const Tensor<T>& fake_seg) {
    VarId i = t.constant(real_img);
    VarId s = t.constant(seg_onehot);
    VarId fi = t.constant(fake_img);
    VarId fsg = t.constant(fake_seg);
    VarId ds_real = detail::mean_log(t, apply_ds(t, concat_c(t, i, s)));
    VarId ds_fake = detail::mean_log_one_minus(t, apply_ds(t, concat_c(t, fi, s)));
    VarId dt_real = detail::mean_log(t, apply_dt(t, concat_c(t, s, i)));
    VarId dt_fake = detail::mean_log_one_minus(t, apply_dt(t, concat_c(t, fsg, i)));
    return mul_scalar(t, add(t, add(t, ds_real, ds_fake), add(t, dt_real, dt_fake)), T(-1));
}

template <class T, class DsApply, class DtApply>
VarId structure_coherence_g_loss(Tape<T>& t, DsApply&& apply_ds, DtApply&& apply_dt,
                                 const Tensor<T>& real_img, const Tensor<T>& seg_onehot,
                                 VarId fake_img, VarId fake_seg) {
    VarId i = t.constant(real_img);
    VarId s = t.constant(seg_onehot);
    VarId ds_term = detail::mean_log(t, apply_ds(t, concat_c(t, fake_img, s)));
    VarId dt_term = detail::mean_log(t, apply_dt(t, concat_c(t, fake_seg, i)));
    return mul_scalar(t, add(t, ds_term, dt_term), T(-1));
}

// ---------------------------------------------------------------------------
// Non-local patch coherence (final scale only). Patch sets are built from
// hard class maps; the gradient flows through the generated patch values.

struct CoherenceConfig {
    int patch_size = 7;
    int stride = 4;
    bool literal = false;  // -log(mean distance) exactly as printed
    std::uint64_t seed = 0;
};

template <class T>
VarId nonlocal_coherence_loss(Tape<T>& t, VarId pred_img, const Tensor<T>& real_img,
                              const Tensor<int>& real_labels, const Tensor<int>& pred_labels,
                              const Tensor<T>& mask, const CoherenceConfig& cfg) {
    const int h = real_img.dim(1), w = real_img.dim(2);
    const int ps = cfg.patch_size, st = cfg.stride;
    const long d = 3L * ps * ps;

    int k = 1;
    for (long i = 0; i < real_labels.numel(); ++i) k = std::max(k, real_labels[i] + 1);
    for (long i = 0; i < pred_labels.numel(); ++i) k = std::max(k, pred_labels[i] + 1);

    auto uniform_block = [&](const Tensor<int>& lab, int y0, int x0, int cls,
                             bool need_missing) -> bool {
        for (int dy = 0; dy < ps; ++dy)
            for (int dx = 0; dx < ps; ++dx) {
                if (lab.at(y0 + dy, x0 + dx) != cls) return false;
                if (need_missing && mask.at(y0 + dy, x0 + dx) <= T(0.5)) return false;
            }
        return true;
    };

    VarId total{};
    bool any = false;
    for (int cls = 0; cls < k; ++cls) {
        // P^c: generated patches fully inside the hole with a uniform
        // predicted class; B^c: ground-truth patches of a uniform real class.
        std::vector<std::pair<int, int>> gen_coords, ref_coords;
        for (int y0 = 0; y0 + ps <= h; y0 += st)
            for (int x0 = 0; x0 + ps <= w; x0 += st) {
                if (uniform_block(pred_labels, y0, x0, cls, true)) gen_coords.push_back({y0, x0});
                if (uniform_block(real_labels, y0, x0, cls, false)) ref_coords.push_back({y0, x0});
            }
        if (gen_coords.empty() || ref_coords.empty()) continue;  // contributes 0

        const int np = static_cast<int>(gen_coords.size());
        const int nb = static_cast<int>(ref_coords.size());

        // mean reference patch of this class
        auto mu = std::make_shared<Tensor<T>>(Tensor<T>({static_cast<int>(d)}));
        std::vector<T> ref_rows(static_cast<std::size_t>(nb) * d);
        for (int j = 0; j < nb; ++j) {
            const auto [y0, x0] = ref_coords[static_cast<std::size_t>(j)];
            long i = 0;
            for (int c = 0; c < 3; ++c)
                for (int dy = 0; dy < ps; ++dy)
                    for (int dx = 0; dx < ps; ++dx, ++i) {
                        const T v = real_img.at(c, y0 + dy, x0 + dx);
                        ref_rows[static_cast<std::size_t>(j) * d + i] = v;
                        (*mu)[i] += v / static_cast<T>(nb);
                    }
        }

        // one uniformly sampled reference per generated patch (seeded)
        Rng rng(derive_seed(cfg.seed, "nlco", static_cast<std::uint64_t>(cls)));
        auto ref_hat = std::make_shared<Tensor<T>>(Tensor<T>({np, static_cast<int>(d)}));
        for (int j = 0; j < np; ++j) {
            const int pick = rng.uniform_int(nb);
            T nrm = T(0);
            for (long i = 0; i < d; ++i) {
                const T v = ref_rows[static_cast<std::size_t>(pick) * d + i] - (*mu)[i];
                ref_hat->at(j, static_cast<int>(i)) = v;
                nrm += v * v;
            }
            nrm = std::max(std::sqrt(nrm), static_cast<T>(1e-12));
            for (long i = 0; i < d; ++i) ref_hat->at(j, static_cast<int>(i)) /= nrm;
        }

        auto coords = std::make_shared<const std::vector<std::pair<int, int>>>(gen_coords);
        VarId rows = gather_patches(t, pred_img, coords, ps);
        VarId di = centered_cosine_dist(t, rows, std::shared_ptr<const Tensor<T>>(ref_hat),
                                        std::shared_ptr<const Tensor<T>>(mu));
        VarId lc = mean_all(t, di);
        if (cfg.literal)
            lc = mul_scalar(t, log_val(t, clamp(t, lc, static_cast<T>(kProbClampEps), T(1e30))),
                            T(-1));
        total = any ? add(t, total, lc) : lc;
        any = true;
    }
    if (!any) return t.constant(Tensor<T>::scalar(T(0)));
    return total;
}

// Eq.-12 weighted sum (generator objective).
template <class T>
VarId total_loss(Tape<T>& t, VarId l1, VarId adv_g, VarId xe, VarId nlco, VarId sco_g,
                 const LossWeights& w) {
    w.validate();
    VarId out = add(t, l1, mul_scalar(t, adv_g, static_cast<T>(w.adv)));
    out = add(t, out, mul_scalar(t, xe, static_cast<T>(w.xe)));
    out = add(t, out, mul_scalar(t, add(t, nlco, sco_g), static_cast<T>(w.co)));
    return out;
}

} // namespace cohpaint

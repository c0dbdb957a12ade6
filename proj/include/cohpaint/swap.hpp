#pragma once

#include <array>
#include <memory>
#include <utility>
#include <vector>

#include "cohpaint/autograd.hpp"
#include "cohpaint/image_ops.hpp"
#include "cohpaint/tensor.hpp"

namespace cohpaint {

enum class AttentionMode { semantic, class_agnostic };

struct AttentionConfig {
    int patch_size = 3;
    double temperature = 1.0;
    AttentionMode mode = AttentionMode::semantic;
    bool record = false;
};

// Per missing patch: which known patches it attended to and with what weight.
struct AttentionRecord {
    int cls = 0;
    int center_y = 0, center_x = 0;
    std::vector<int> ref_index;   // candidate patch centers, y*W+x
    std::vector<float> weights;   // sums to 1
    bool fallback = false;
};
using AttentionRecords = std::vector<AttentionRecord>;

// Stride-1 patch partition. A patch is known iff every in-image pixel of its
// footprint is known; everything else is a missing patch. Patch class is the
// label at its center.
struct PatchIndex {
    int h = 0, w = 0, k = 0, patch_size = 3;
    std::vector<std::vector<int>> known_by_class;
    std::vector<std::vector<int>> missing_by_class;
    std::vector<int> all_known;
    std::vector<int> all_missing;
};

inline PatchIndex build_patch_index(const Tensor<int>& labels, const Tensor<std::uint8_t>& known,
                                    int k, int patch_size) {
    PatchIndex idx;
    idx.h = labels.dim(0);
    idx.w = labels.dim(1);
    idx.k = k;
    idx.patch_size = patch_size;
    idx.known_by_class.resize(static_cast<std::size_t>(k));
    idx.missing_by_class.resize(static_cast<std::size_t>(k));
    const int r = patch_size / 2;
    for (int y = 0; y < idx.h; ++y)
        for (int x = 0; x < idx.w; ++x) {
            bool all_known = true;
            for (int dy = -r; dy <= r && all_known; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= idx.h || xx < 0 || xx >= idx.w) continue;
                    if (!known.at(yy, xx)) {
                        all_known = false;
                        break;
                    }
                }
            const int pos = y * idx.w + x;
            const int cls = labels.at(y, x);
            if (cls < 0 || cls >= k) throw shape_error("build_patch_index: label out of range");
            if (all_known) {
                idx.known_by_class[static_cast<std::size_t>(cls)].push_back(pos);
                idx.all_known.push_back(pos);
            } else {
                idx.missing_by_class[static_cast<std::size_t>(cls)].push_back(pos);
                idx.all_missing.push_back(pos);
            }
        }
    return idx;
}

// Eq.-3 softmax over one affinity row (shared scalar helper; the acceptance
// fixtures exercise it directly).
template <class T>
std::vector<T> attention_weights(const std::vector<T>& affinities, double temperature = 1.0) {
    std::vector<T> w(affinities.size());
    if (affinities.empty()) return w;
    T mx = affinities[0];
    for (T a : affinities) mx = std::max(mx, a);
    T sum = T(0);
    for (std::size_t i = 0; i < affinities.size(); ++i) {
        w[i] = std::exp((affinities[i] - mx) / static_cast<T>(temperature));
        sum += w[i];
    }
    for (T& v : w) v /= sum;
    return w;
}

namespace detail {

// Gathers zero-padded [n, C*ps*ps] patch rows centered at the given positions.
template <class T>
void gather_patch_rows(const Tensor<T>& f, const std::vector<int>& centers, int ps, Tensor<T>& out) {
    const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
    const int r = ps / 2;
    const long d = static_cast<long>(c) * ps * ps;
    for (std::size_t j = 0; j < centers.size(); ++j) {
        const int cy = centers[j] / w, cx = centers[j] % w;
        T* row = out.data() + static_cast<long>(j) * d;
        long i = 0;
        for (int ch = 0; ch < c; ++ch)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx, ++i) {
                    const int yy = cy + dy, xx = cx + dx;
                    row[i] = (yy < 0 || yy >= h || xx < 0 || xx >= w) ? T(0) : f.at(ch, yy, xx);
                }
    }
}

template <class T>
void scatter_add_patch_rows(const Tensor<T>& rows, const std::vector<int>& centers, int ps,
                            Tensor<T>& f) {
    const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
    const int r = ps / 2;
    const long d = static_cast<long>(c) * ps * ps;
    for (std::size_t j = 0; j < centers.size(); ++j) {
        const int cy = centers[j] / w, cx = centers[j] % w;
        const T* row = rows.data() + static_cast<long>(j) * d;
        long i = 0;
        for (int ch = 0; ch < c; ++ch)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx, ++i) {
                    const int yy = cy + dy, xx = cx + dx;
                    if (yy >= 0 && yy < h && xx >= 0 && xx < w) f.at(ch, yy, xx) += row[i];
                }
    }
}

// Row-normalises in place; returns the pre-normalisation norms.
template <class T>
std::vector<T> normalize_rows(Tensor<T>& rows) {
    const int n = rows.dim(0), d = rows.dim(1);
    const T eps = static_cast<T>(1e-12);
    std::vector<T> norms(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        T* row = rows.data() + static_cast<long>(j) * d;
        T s = T(0);
        for (int i = 0; i < d; ++i) s += row[i] * row[i];
        const T nrm = std::sqrt(s);
        norms[static_cast<std::size_t>(j)] = nrm;
        const T inv = T(1) / std::max(nrm, eps);
        for (int i = 0; i < d; ++i) row[i] *= inv;
    }
    return norms;
}

template <class T>
struct AttnGroup {
    int cls = -1;
    bool fallback = false;
    std::vector<int> q_pos, k_pos;
    Tensor<T> qhat, khat;  // normalised patch rows
    std::vector<T> qnorm, knorm;
    Tensor<T> omega;       // [m, n] attention weights
};

} // namespace detail

// Semantic-wise attention propagation over one feature map (Eqs. 2-4 of the
// propagation step). Missing patches are replaced by attention-weighted sums
// of known patches of the same predicted class; overlapping writes are
// averaged; known-region features pass through untouched. Gradients flow
// through patch values, not through the class split.
template <class T>
std::pair<VarId, std::shared_ptr<AttentionRecords>> semantic_attention(
    Tape<T>& t, VarId f, const Tensor<int>& labels, const Tensor<std::uint8_t>& known,
    const AttentionConfig& cfg) {
    using detail::AttnGroup;
    using RowMat = detail::RowMat<T>;

    const Tensor<T>& fv = t.val(f);
    if (fv.rank() != 3) throw shape_error("semantic_attention: need [C,H,W]");
    const int c = fv.dim(0), h = fv.dim(1), w = fv.dim(2);
    if (labels.dim(0) != h || labels.dim(1) != w || known.dim(0) != h || known.dim(1) != w)
        throw shape_error("semantic_attention: label/mask resolution mismatch");
    const int ps = cfg.patch_size;
    if (ps % 2 == 0) throw shape_error("semantic_attention: patch size must be odd");
    const long d = static_cast<long>(c) * ps * ps;

    int k = 1;
    for (long i = 0; i < labels.numel(); ++i) k = std::max(k, labels[i] + 1);
    const PatchIndex idx = build_patch_index(labels, known, k, ps);

    auto records = std::make_shared<AttentionRecords>();
    auto groups = std::make_shared<std::vector<AttnGroup<T>>>();

    // group queries: per class in semantic mode, one pool otherwise
    if (cfg.mode == AttentionMode::semantic) {
        for (int cls = 0; cls < k; ++cls) {
            const auto& q = idx.missing_by_class[static_cast<std::size_t>(cls)];
            if (q.empty()) continue;
            AttnGroup<T> g;
            g.cls = cls;
            g.q_pos = q;
            const auto& cand = idx.known_by_class[static_cast<std::size_t>(cls)];
            if (!cand.empty()) {
                g.k_pos = cand;
            } else {
                g.k_pos = idx.all_known;  // class-agnostic fallback
                g.fallback = true;
            }
            if (!g.k_pos.empty()) groups->push_back(std::move(g));
        }
    } else if (!idx.all_missing.empty() && !idx.all_known.empty()) {
        AttnGroup<T> g;
        g.cls = -1;
        g.q_pos = idx.all_missing;
        g.k_pos = idx.all_known;
        groups->push_back(std::move(g));
    }

    // overlap-average accumulators over missing pixels
    Tensor<T> accum({c, h, w});
    auto counts = std::make_shared<std::vector<int>>(static_cast<std::size_t>(h) * w, 0);
    const int r = ps / 2;

    for (AttnGroup<T>& g : *groups) {
        const int m = static_cast<int>(g.q_pos.size());
        const int n = static_cast<int>(g.k_pos.size());
        Tensor<T> q({m, static_cast<int>(d)}), kk({n, static_cast<int>(d)});
        detail::gather_patch_rows(fv, g.q_pos, ps, q);
        detail::gather_patch_rows(fv, g.k_pos, ps, kk);
        Tensor<T> kraw = kk;
        g.qhat = std::move(q);
        g.khat = std::move(kk);
        g.qnorm = detail::normalize_rows(g.qhat);
        g.knorm = detail::normalize_rows(g.khat);

        g.omega = Tensor<T>({m, n});
        {
            Eigen::Map<RowMat> am(g.omega.data(), m, n);
            Eigen::Map<const RowMat> qm(g.qhat.data(), m, d);
            Eigen::Map<const RowMat> km(g.khat.data(), n, d);
            am.noalias() = qm * km.transpose();
            am /= static_cast<T>(cfg.temperature);
            // row softmax, max-subtracted
            for (int j = 0; j < m; ++j) {
                auto row = am.row(j).array();
                row -= row.maxCoeff();
                row = row.exp();
                row /= row.sum();
            }
        }

        // Eq. 4: replacement patches, then overlap-averaging write-back
        Tensor<T> out_rows({m, static_cast<int>(d)});
        {
            Eigen::Map<RowMat> om(out_rows.data(), m, d);
            Eigen::Map<const RowMat> wm(g.omega.data(), m, n);
            Eigen::Map<const RowMat> km(kraw.data(), n, d);
            om.noalias() = wm * km;
        }
        for (int j = 0; j < m; ++j) {
            const int cy = g.q_pos[static_cast<std::size_t>(j)] / w;
            const int cx = g.q_pos[static_cast<std::size_t>(j)] % w;
            const T* row = out_rows.data() + static_cast<long>(j) * d;
            long i = 0;
            for (int ch = 0; ch < c; ++ch)
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx, ++i) {
                        const int yy = cy + dy, xx = cx + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        if (known.at(yy, xx)) continue;  // known features stay untouched
                        accum.at(ch, yy, xx) += row[i];
                        if (ch == 0) ++(*counts)[static_cast<std::size_t>(yy) * w + xx];
                    }
        }

        if (cfg.record) {
            for (int j = 0; j < m; ++j) {
                AttentionRecord rec;
                rec.cls = g.cls;
                rec.center_y = g.q_pos[static_cast<std::size_t>(j)] / w;
                rec.center_x = g.q_pos[static_cast<std::size_t>(j)] % w;
                rec.fallback = g.fallback;
                rec.ref_index = g.k_pos;
                rec.weights.resize(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i)
                    rec.weights[static_cast<std::size_t>(i)] =
                        static_cast<float>(g.omega.at(j, i));
                records->push_back(std::move(rec));
            }
        }
    }

    // assemble output: known and uncovered pixels pass through
    Tensor<T> out = fv;
    const long plane = static_cast<long>(h) * w;
    for (long p = 0; p < plane; ++p) {
        const int cnt = (*counts)[static_cast<std::size_t>(p)];
        if (cnt == 0) continue;
        for (int ch = 0; ch < c; ++ch) out[ch * plane + p] = accum[ch * plane + p] / static_cast<T>(cnt);
    }

    const bool ng = t.needs_grad(f);
    auto known_copy = std::make_shared<Tensor<std::uint8_t>>(known);
    VarId y{static_cast<int>(t.size())};
    VarId res = t.push(std::move(out), ng, !ng ? std::function<void(Tape<T>&)>() :
        [f, groups, counts, known_copy, c, h, w, ps, d, y, temp = cfg.temperature](Tape<T>& tt) {
        using RM = detail::RowMat<T>;
        const Tensor<T>& gout = tt.grad(y);
        Tensor<T>& gf = tt.grad(f);
        const Tensor<T>& fval = tt.val(f);
        const int r = ps / 2;
        const long plane = static_cast<long>(h) * w;
        const T eps = static_cast<T>(1e-12);

        // pass-through pixels (known or not covered by any missing patch)
        for (long p = 0; p < plane; ++p) {
            if ((*counts)[static_cast<std::size_t>(p)] == 0) {
                for (int ch = 0; ch < c; ++ch) gf[ch * plane + p] += gout[ch * plane + p];
            }
        }

        for (const detail::AttnGroup<T>& g : *groups) {
            const int m = static_cast<int>(g.q_pos.size());
            const int n = static_cast<int>(g.k_pos.size());

            // adjoint of the overlap-averaging scatter: per-patch output grads
            Tensor<T> dout_rows({m, static_cast<int>(d)});
            for (int j = 0; j < m; ++j) {
                const int cy = g.q_pos[static_cast<std::size_t>(j)] / w;
                const int cx = g.q_pos[static_cast<std::size_t>(j)] % w;
                T* row = dout_rows.data() + static_cast<long>(j) * d;
                long i = 0;
                for (int ch = 0; ch < c; ++ch)
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx, ++i) {
                            const int yy = cy + dy, xx = cx + dx;
                            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                            if (known_copy->at(yy, xx)) continue;
                            const long p = static_cast<long>(yy) * w + xx;
                            row[i] = gout[ch * plane + p] /
                                     static_cast<T>((*counts)[static_cast<std::size_t>(p)]);
                        }
            }

            Tensor<T> kraw({n, static_cast<int>(d)});
            detail::gather_patch_rows(fval, g.k_pos, ps, kraw);

            // dK (raw, through Eq. 4) = omega^T * dout
            Tensor<T> dk_raw({n, static_cast<int>(d)});
            Eigen::Map<RM> dkm(dk_raw.data(), n, d);
            Eigen::Map<const RM> wm(g.omega.data(), m, n);
            Eigen::Map<const RM> dom(dout_rows.data(), m, d);
            dkm.noalias() = wm.transpose() * dom;

            // domega = dout * K^T, then softmax + temperature backward
            Tensor<T> domega({m, n});
            {
                Eigen::Map<RM> dwm(domega.data(), m, n);
                Eigen::Map<const RM> krm(kraw.data(), n, d);
                dwm.noalias() = dom * krm.transpose();
                for (int j = 0; j < m; ++j) {
                    auto wrow = wm.row(j).array();
                    auto drow = dwm.row(j).array();
                    const T dot = (wrow * drow).sum();
                    drow = wrow * (drow - dot);
                }
                dwm /= static_cast<T>(temp);
            }

            // through the normalised inner product
            Tensor<T> dqhat({m, static_cast<int>(d)}), dkhat({n, static_cast<int>(d)});
            {
                Eigen::Map<RM> dqm(dqhat.data(), m, d);
                Eigen::Map<RM> dkhm(dkhat.data(), n, d);
                Eigen::Map<const RM> dwm(domega.data(), m, n);
                Eigen::Map<const RM> qhm(g.qhat.data(), m, d);
                Eigen::Map<const RM> khm(g.khat.data(), n, d);
                dqm.noalias() = dwm * khm;
                dkhm.noalias() = dwm.transpose() * qhm;
            }

            // row-normalisation backward, then scatter into the feature grad
            auto denormalize = [&](Tensor<T>& dhat, const Tensor<T>& hat, const std::vector<T>& norms) {
                const int rows = dhat.dim(0);
                for (int j = 0; j < rows; ++j) {
                    T* dr = dhat.data() + static_cast<long>(j) * d;
                    const T* hr = hat.data() + static_cast<long>(j) * d;
                    const T nrm = norms[static_cast<std::size_t>(j)];
                    if (nrm <= eps) {
                        for (long i = 0; i < d; ++i) dr[i] /= eps;
                    } else {
                        T dot = T(0);
                        for (long i = 0; i < d; ++i) dot += dr[i] * hr[i];
                        for (long i = 0; i < d; ++i) dr[i] = (dr[i] - dot * hr[i]) / nrm;
                    }
                }
            };
            denormalize(dqhat, g.qhat, g.qnorm);
            denormalize(dkhat, g.khat, g.knorm);

            detail::scatter_add_patch_rows(dqhat, g.q_pos, ps, gf);
            detail::scatter_add_patch_rows(dkhat, g.k_pos, ps, gf);
            detail::scatter_add_patch_rows(dk_raw, g.k_pos, ps, gf);
        }
    });
    return {res, records};
}

// ---------------------------------------------------------------------------
// The surrounding SWAP plumbing: context-feature construction before the
// attention and dilated fusion after it. Weights are tape leaves owned by the
// model.

template <class T>
VarId build_context_feature(Tape<T>& t, VarId phi_l, VarId skip, VarId w, VarId b) {
    const Tensor<T>& sv = t.val(skip);
    VarId up = upsample_bilinear(t, phi_l, sv.dim(1), sv.dim(2));
    VarId cat = concat_c(t, up, skip);
    return leaky_relu(t, conv2d(t, cat, w, b, {1, 1}));
}

struct FusionWeights {
    std::array<VarId, 4> branch_w, branch_b;
    VarId proj_w, proj_b;
    std::array<int, 4> dilations{1, 2, 4, 8};
};

template <class T>
VarId fuse_dilated(Tape<T>& t, VarId f, const FusionWeights& fw) {
    VarId parts[4];
    for (int i = 0; i < 4; ++i)
        parts[i] = leaky_relu(
            t, conv2d(t, f, fw.branch_w[static_cast<std::size_t>(i)],
                      fw.branch_b[static_cast<std::size_t>(i)], {1, fw.dilations[static_cast<std::size_t>(i)]}));
    VarId cat = concat_c(t, concat_c(t, parts[0], parts[1]), concat_c(t, parts[2], parts[3]));
    return conv2d(t, cat, fw.proj_w, fw.proj_b, {1, 1});
}

struct SwapWeights {
    VarId ctx_w, ctx_b;
    FusionWeights fusion;
};

// Eq.-1 composition: context feature -> semantic attention -> dilated fusion.
// seg_probs is the previous-scale prediction (a value, not a tape node: the
// class split is hard) and mask_l the missing mask at the skip resolution.
template <class T>
std::pair<VarId, std::shared_ptr<AttentionRecords>> swap_propagate(
    Tape<T>& t, VarId phi_l, VarId skip, const Tensor<T>& seg_probs_l, const Tensor<T>& mask_l,
    const SwapWeights& weights, const AttentionConfig& cfg) {
    const Tensor<T>& sv = t.val(skip);
    const int h = sv.dim(1), w = sv.dim(2);

    VarId f = build_context_feature(t, phi_l, skip, weights.ctx_w, weights.ctx_b);

    // previous-scale class map, nearest-resized to this resolution
    Tensor<T> probs_up = upsample_nearest_t(seg_probs_l, h, w);
    Tensor<int> labels = labels_from_probs(probs_up);
    Tensor<std::uint8_t> known({h, w});
    for (long i = 0; i < known.numel(); ++i) known[i] = mask_l[i] > T(0.5) ? 0 : 1;

    auto [f_upd, records] = semantic_attention(t, f, labels, known, cfg);
    VarId out = fuse_dilated(t, f_upd, weights.fusion);
    return {out, records};
}

} // namespace cohpaint

#pragma once

#include <cmath>
#include <vector>

#include "cohpaint/swap.hpp"
#include "cohpaint/tensor.hpp"

namespace cohpaint {

// Brute-force reference for the semantic attention feature update: explicit
// loops over classes, patches and pixels, no vectorisation and no code shared
// with semantic_attention. Used to cross-check the production path.
template <class T>
Tensor<T> swap_oracle(const Tensor<T>& f, const Tensor<int>& labels,
                      const Tensor<std::uint8_t>& known, const AttentionConfig& cfg) {
    const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
    const int ps = cfg.patch_size;
    const int r = ps / 2;
    const double tau = cfg.temperature;

    // classify every patch center
    int k = 1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) k = std::max(k, labels.at(y, x) + 1);

    std::vector<std::vector<std::pair<int, int>>> known_patches(static_cast<std::size_t>(k));
    std::vector<std::pair<int, int>> all_known_patches;
    std::vector<std::pair<int, int>> missing_patches;
    std::vector<int> missing_cls;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool patch_known = true;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (!known.at(yy, xx)) patch_known = false;
                }
            if (patch_known) {
                known_patches[static_cast<std::size_t>(labels.at(y, x))].push_back({y, x});
                all_known_patches.push_back({y, x});
            } else {
                missing_patches.push_back({y, x});
                missing_cls.push_back(labels.at(y, x));
            }
        }

    auto patch_element = [&](int cy, int cx, int ch, int dy, int dx) -> double {
        const int yy = cy + dy, xx = cx + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
        return static_cast<double>(f.at(ch, yy, xx));
    };
    auto patch_norm = [&](int cy, int cx) {
        double s = 0.0;
        for (int ch = 0; ch < c; ++ch)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double v = patch_element(cy, cx, ch, dy, dx);
                    s += v * v;
                }
        const double n = std::sqrt(s);
        return n > 1e-12 ? n : 1e-12;
    };

    Tensor<double> accum({c, h, w});
    std::vector<int> counts(static_cast<std::size_t>(h) * w, 0);

    for (std::size_t j = 0; j < missing_patches.size(); ++j) {
        const auto [qy, qx] = missing_patches[j];
        const std::vector<std::pair<int, int>>* cands;
        if (cfg.mode == AttentionMode::semantic) {
            const auto& same = known_patches[static_cast<std::size_t>(missing_cls[j])];
            cands = same.empty() ? &all_known_patches : &same;
        } else {
            cands = &all_known_patches;
        }
        if (cands->empty()) continue;
        const std::size_t n = cands->size();

        // normalised inner products against every candidate
        const double qn = patch_norm(qy, qx);
        std::vector<double> aff(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto [ky, kx] = (*cands)[i];
            const double kn = patch_norm(ky, kx);
            double dot = 0.0;
            for (int ch = 0; ch < c; ++ch)
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        dot += (patch_element(qy, qx, ch, dy, dx) / qn) *
                               (patch_element(ky, kx, ch, dy, dx) / kn);
            aff[i] = dot;
        }

        // softmax over candidates
        double mx = aff[0];
        for (double a : aff) mx = std::max(mx, a);
        std::vector<double> wgt(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            wgt[i] = std::exp((aff[i] - mx) / tau);
            sum += wgt[i];
        }
        for (double& v : wgt) v /= sum;

        // weighted candidate sum written back over the missing pixels
        for (int ch = 0; ch < c; ++ch)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = qy + dy, xx = qx + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (known.at(yy, xx)) continue;
                    double v = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const auto [ky, kx] = (*cands)[i];
                        v += wgt[i] * patch_element(ky, kx, ch, dy, dx);
                    }
                    accum.at(ch, yy, xx) += v;
                    if (ch == 0) ++counts[static_cast<std::size_t>(yy) * w + xx];
                }
    }

    Tensor<T> out = f;
    const long plane = static_cast<long>(h) * w;
    for (long p = 0; p < plane; ++p) {
        if (counts[static_cast<std::size_t>(p)] == 0) continue;
        for (int ch = 0; ch < c; ++ch)
            out[ch * plane + p] =
                static_cast<T>(accum[ch * plane + p] / counts[static_cast<std::size_t>(p)]);
    }
    return out;
}

} // namespace cohpaint

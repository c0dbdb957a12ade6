#pragma once

#include <array>
#include <string>
#include <vector>

#include "cohpaint/tensor.hpp"

namespace cohpaint {

constexpr int kNumScales = 5;

struct Sample {
    Tensor<float> image;  // [3,H,W] in [0,1]
    Tensor<int> labels;   // [H,W] in [0,k)
    Tensor<float> mask;   // [H,W], 1 = missing
    std::string id;

    int height() const { return image.dim(1); }
    int width() const { return image.dim(2); }
};

enum class PyramidKind { image, labels, mask, probs };

// Five per-scale views, levels[0] the coarsest (l=1) .. levels[4] the source
// resolution (l=5). Images/probs reduce by 2x2 area average; labels by
// nearest neighbour; masks round toward missing.
template <class T>
struct ScalePyramid {
    PyramidKind kind = PyramidKind::image;
    std::array<Tensor<T>, kNumScales> levels;

    const Tensor<T>& level(int l) const { return levels[static_cast<std::size_t>(l - 1)]; }
    Tensor<T>& level(int l) { return levels[static_cast<std::size_t>(l - 1)]; }
};

namespace detail {

template <class T>
Tensor<T> reduce2_area(const Tensor<T>& x) {
    const int c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
    Tensor<T> out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out.at(ch, y, xx) = static_cast<T>(0.25) *
                    (x.at(ch, 2 * y, 2 * xx) + x.at(ch, 2 * y, 2 * xx + 1) +
                     x.at(ch, 2 * y + 1, 2 * xx) + x.at(ch, 2 * y + 1, 2 * xx + 1));
    return out;
}

template <class T>
Tensor<T> reduce2_nearest(const Tensor<T>& x) {
    const int c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
    Tensor<T> out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) out.at(ch, y, xx) = x.at(ch, 2 * y + 1, 2 * xx + 1);
    return out;
}

// A coarse mask pixel is missing if any constituent fine pixel is missing.
template <class T>
Tensor<T> reduce2_toward_missing(const Tensor<T>& x) {
    const int c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
    Tensor<T> out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const T m = std::max(std::max(x.at(ch, 2 * y, 2 * xx), x.at(ch, 2 * y, 2 * xx + 1)),
                                     std::max(x.at(ch, 2 * y + 1, 2 * xx), x.at(ch, 2 * y + 1, 2 * xx + 1)));
                out.at(ch, y, xx) = m > T(0) ? T(1) : T(0);
            }
    return out;
}

template <class T>
Tensor<T> as_chw(const Tensor<T>& x) {
    if (x.rank() == 3) return x;
    if (x.rank() == 2) return Tensor<T>({1, x.dim(0), x.dim(1)}, std::vector<T>(x.data(), x.data() + x.numel()));
    throw shape_error("expected rank-2 or rank-3 tensor");
}

} // namespace detail

template <class T>
ScalePyramid<T> build_pyramid(const Tensor<T>& source, PyramidKind kind) {
    const bool was2d = source.rank() == 2;
    Tensor<T> cur = detail::as_chw(source);
    const int h = cur.dim(1), w = cur.dim(2);
    if (h % 16 != 0 || w % 16 != 0)
        throw shape_error("build_pyramid: spatial dims must be divisible by 16, got " +
                          Tensor<T>::shape_str({h, w}));
    ScalePyramid<T> pyr;
    pyr.kind = kind;
    auto store = [&pyr, was2d](int l, const Tensor<T>& x) {
        if (was2d)
            pyr.levels[static_cast<std::size_t>(l - 1)] =
                Tensor<T>({x.dim(1), x.dim(2)}, std::vector<T>(x.data(), x.data() + x.numel()));
        else
            pyr.levels[static_cast<std::size_t>(l - 1)] = x;
    };
    store(kNumScales, cur);
    for (int l = kNumScales - 1; l >= 1; --l) {
        switch (kind) {
            case PyramidKind::image:
            case PyramidKind::probs: cur = detail::reduce2_area(cur); break;
            case PyramidKind::labels: cur = detail::reduce2_nearest(cur); break;
            case PyramidKind::mask: cur = detail::reduce2_toward_missing(cur); break;
        }
        store(l, cur);
    }
    return pyr;
}

// Bilinear upsampling (half-pixel centers). Plain-tensor twin of the tape op.
template <class T>
Tensor<T> upsample_bilinear_t(const Tensor<T>& x, int oh, int ow) {
    const Tensor<T> in = detail::as_chw(x);
    if (oh < in.dim(1) || ow < in.dim(2)) throw shape_error("upsample: target smaller than source");
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor<T> out({c, oh, ow});
    const double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
            const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
            const double wy1 = fy - y0;
            for (int xx = 0; xx < ow; ++xx) {
                double fx = (xx + 0.5) * sx - 0.5;
                fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
                const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
                const double wx1 = fx - x0;
                out.at(ch, y, xx) = static_cast<T>(
                    (1 - wy1) * ((1 - wx1) * in.at(ch, y0, x0) + wx1 * in.at(ch, y0, x1)) +
                    wy1 * ((1 - wx1) * in.at(ch, y1, x0) + wx1 * in.at(ch, y1, x1)));
            }
        }
    return out;
}

// Nearest-neighbour upsampling, used for labels and masks.
template <class T>
Tensor<T> upsample_nearest_t(const Tensor<T>& x, int oh, int ow) {
    const bool was2d = x.rank() == 2;
    const Tensor<T> in = detail::as_chw(x);
    if (oh < in.dim(1) || ow < in.dim(2)) throw shape_error("upsample: target smaller than source");
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor<T> out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y) {
            const int sy = std::min(static_cast<int>((y + 0.5) * h / oh), h - 1);
            for (int xx = 0; xx < ow; ++xx) {
                const int sx = std::min(static_cast<int>((xx + 0.5) * w / ow), w - 1);
                out.at(ch, y, xx) = in.at(ch, sy, sx);
            }
        }
    if (was2d) return Tensor<T>({oh, ow}, std::vector<T>(out.data(), out.data() + out.numel()));
    return out;
}

// output = mask * pred + (1 - mask) * known; mask is [H,W], images [3,H,W].
template <class T>
Tensor<T> composite(const Tensor<T>& pred, const Tensor<T>& known, const Tensor<T>& mask) {
    if (!pred.same_shape(known)) throw shape_error("composite: image shape mismatch");
    if (mask.rank() != 2 || mask.dim(0) != pred.dim(1) || mask.dim(1) != pred.dim(2))
        throw shape_error("composite: mask shape mismatch");
    Tensor<T> out(pred.shape());
    const long plane = static_cast<long>(pred.dim(1)) * pred.dim(2);
    for (int c = 0; c < pred.dim(0); ++c)
        for (long p = 0; p < plane; ++p) {
            const T m = mask[p];
            out[c * plane + p] = m * pred[c * plane + p] + (T(1) - m) * known[c * plane + p];
        }
    return out;
}

// Per-pixel channel sums of a [k,H,W] probability map must be 1 within tol.
template <class T>
bool valid_seg_probs(const Tensor<T>& probs, double tol = 1e-5) {
    if (probs.rank() != 3) return false;
    const int k = probs.dim(0);
    const long plane = static_cast<long>(probs.dim(1)) * probs.dim(2);
    for (long p = 0; p < plane; ++p) {
        double s = 0.0;
        for (int c = 0; c < k; ++c) {
            const double v = probs[c * plane + p];
            if (v < 0) return false;
            s += v;
        }
        if (std::abs(s - 1.0) > tol) return false;
    }
    return true;
}

// Argmax over the channel axis; ties break toward the lowest class index.
template <class T>
Tensor<int> labels_from_probs(const Tensor<T>& probs) {
    if (probs.rank() != 3) throw shape_error("labels_from_probs: need [k,H,W]");
    const int k = probs.dim(0);
    const long plane = static_cast<long>(probs.dim(1)) * probs.dim(2);
    Tensor<int> out({probs.dim(1), probs.dim(2)});
    for (long p = 0; p < plane; ++p) {
        int best = 0;
        T bv = probs[p];
        for (int c = 1; c < k; ++c) {
            if (probs[c * plane + p] > bv) {
                bv = probs[c * plane + p];
                best = c;
            }
        }
        out[p] = best;
    }
    return out;
}

// One-hot encoding of a label map into [k,H,W].
template <class T>
Tensor<T> one_hot(const Tensor<int>& labels, int k) {
    if (labels.rank() != 2) throw shape_error("one_hot: need [H,W]");
    Tensor<T> out({k, labels.dim(0), labels.dim(1)});
    const long plane = labels.numel();
    for (long p = 0; p < plane; ++p) {
        const int l = labels[p];
        if (l < 0 || l >= k) throw shape_error("one_hot: label out of range");
        out[l * plane + p] = T(1);
    }
    return out;
}

} // namespace cohpaint

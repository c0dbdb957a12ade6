#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "cohpaint/rng.hpp"
#include "cohpaint/tensor.hpp"

namespace cohpaint {

struct generation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MaskMode { center, irregular };

struct MaskSpec {
    MaskMode mode = MaskMode::center;
    double center_fraction = 0.5;  // hole side as a fraction of min(H,W)
    int stroke_count = 8;
    double stroke_width_min = 4.0;
    double stroke_width_max = 12.0;
    int stroke_steps_min = 12;
    int stroke_steps_max = 40;
    double min_ratio = 0.05;
    double max_ratio = 0.60;
    std::uint64_t seed = 0;
};

namespace detail {

inline void stamp_disk(Tensor<float>& m, double cy, double cx, double radius) {
    const int h = m.dim(0), w = m.dim(1);
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + radius)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + radius)));
    const double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
            if (dy * dy + dx * dx <= r2) m.at(y, x) = 1.0f;
        }
}

inline void draw_stroke(Tensor<float>& m, Rng& rng, const MaskSpec& spec) {
    const int h = m.dim(0), w = m.dim(1);
    double y = rng.uniform(0.0, h);
    double x = rng.uniform(0.0, w);
    double heading = rng.uniform(0.0, 2.0 * 3.14159265358979);
    const double width = rng.uniform(spec.stroke_width_min, spec.stroke_width_max);
    const double radius = std::max(1.0, width / 2.0);
    const int steps = spec.stroke_steps_min +
                      rng.uniform_int(spec.stroke_steps_max - spec.stroke_steps_min + 1);
    const double step_len = std::max(1.5, radius);
    stamp_disk(m, y, x, radius);
    for (int s = 0; s < steps; ++s) {
        // heading perturbation bounded by 45 degrees per step
        heading += rng.uniform(-0.25 * 3.14159265358979, 0.25 * 3.14159265358979);
        const double ny = y + std::sin(heading) * step_len;
        const double nx = x + std::cos(heading) * step_len;
        // stamp densely along the segment so each stroke stays 4-connected
        const int sub = std::max(2, static_cast<int>(std::ceil(step_len / 0.5)));
        for (int i = 1; i <= sub; ++i) {
            const double t = static_cast<double>(i) / sub;
            stamp_disk(m, y + (ny - y) * t, x + (nx - x) * t, radius);
        }
        y = std::min(std::max(ny, 0.0), static_cast<double>(h));
        x = std::min(std::max(nx, 0.0), static_cast<double>(w));
    }
}

} // namespace detail

inline double mask_ratio(const Tensor<float>& m) {
    double s = 0;
    for (long i = 0; i < m.numel(); ++i) s += m[i];
    return s / static_cast<double>(m.numel());
}

// Axis-aligned square hole centered in the image, side rounded to even.
inline Tensor<float> center_mask(int height, int width, double fraction) {
    if (fraction <= 0.0 || fraction > 1.0) throw generation_error("center fraction out of (0,1]");
    int side = static_cast<int>(std::lround(fraction * std::min(height, width) / 2.0)) * 2;
    side = std::min(side, std::min(height, width));
    if (side < 2) side = 2;
    Tensor<float> m({height, width});
    const int y0 = (height - side) / 2, x0 = (width - side) / 2;
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) m.at(y, x) = 1.0f;
    return m;
}

inline Tensor<float> generate_mask(const MaskSpec& spec, int height, int width) {
    if (spec.mode == MaskMode::center) return center_mask(height, width, spec.center_fraction);

    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(derive_seed(spec.seed, "mask_attempt", static_cast<std::uint64_t>(attempt)));
        Tensor<float> m({height, width});
        for (int s = 0; s < spec.stroke_count; ++s) detail::draw_stroke(m, rng, spec);
        const double r = mask_ratio(m);
        if (r >= spec.min_ratio && r <= spec.max_ratio) return m;
    }
    throw generation_error("irregular mask: missing-area ratio not reachable in 100 attempts");
}

} // namespace cohpaint

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cohpaint/image_ops.hpp"
#include "cohpaint/rng.hpp"
#include "cohpaint/tensor.hpp"

namespace cohpaint {

struct spec_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LayoutKind { bands, voronoi };
enum class TextureFamily { checker, stripes, noise, dots };

constexpr int kNumTextureFamilies = 4;

struct SceneSpec {
    int k = 4;
    LayoutKind layout = LayoutKind::bands;
    int height = 64;
    int width = 64;
    std::uint64_t seed = 0;
    // area invariant: at least ceil(k/2) classes each covering >= min_class_area
    double min_class_area = 0.04;
};

namespace detail {

struct Rgb {
    float r, g, b;
};

inline Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

// Per-class texture parameters, sampled once per scene.
struct ClassTexture {
    TextureFamily family;
    Rgb color_a, color_b;
    double cell = 6.0;        // checker cell / dot grid / noise lattice
    double angle = 0.0;       // stripes
    double period = 8.0;      // stripes
    double duty = 0.5;        // stripes
    double radius = 2.0;      // dots
    double amplitude = 0.3;   // noise
    double phase_x = 0.0, phase_y = 0.0;
    std::uint64_t noise_seed = 0;
};

// Each class id maps to its own family (k <= 4); for k in 5..8 families cycle
// but color bands stay disjoint, which keeps classes statistically separable.
inline ClassTexture sample_class_texture(int cls, int k, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "class_texture", static_cast<std::uint64_t>(cls)));
    ClassTexture t;
    t.family = static_cast<TextureFamily>(cls % kNumTextureFamilies);
    const double hue0 = (cls + 0.2 + 0.6 * rng.uniform()) / k;
    t.color_a = hsv_to_rgb(hue0, rng.uniform(0.55, 0.9), rng.uniform(0.7, 0.95));
    t.color_b = hsv_to_rgb(hue0 + rng.uniform(-0.06, 0.06), rng.uniform(0.25, 0.5),
                           rng.uniform(0.25, 0.5));
    t.cell = rng.uniform(4.0, 10.0);
    t.angle = (rng.uniform_int(4) * 45.0 + rng.uniform(-10.0, 10.0)) * (3.14159265358979 / 180.0);
    t.period = rng.uniform(5.0, 12.0);
    t.duty = rng.uniform(0.35, 0.65);
    t.radius = rng.uniform(0.22, 0.38);  // as a fraction of the grid cell
    t.amplitude = rng.uniform(0.25, 0.45);
    t.phase_x = rng.uniform(0.0, 16.0);
    t.phase_y = rng.uniform(0.0, 16.0);
    t.noise_seed = rng.next_u64();
    return t;
}

inline double lattice_value(std::uint64_t seed, int xi, int yi) {
    Rng r(derive_seed(seed, (static_cast<std::uint64_t>(static_cast<std::uint32_t>(xi)) << 32) ^
                                static_cast<std::uint32_t>(yi)));
    return r.uniform();
}

inline double value_noise(std::uint64_t seed, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const double sx = fx * fx * (3 - 2 * fx), sy = fy * fy * (3 - 2 * fy);
    const double v00 = lattice_value(seed, x0, y0), v10 = lattice_value(seed, x0 + 1, y0);
    const double v01 = lattice_value(seed, x0, y0 + 1), v11 = lattice_value(seed, x0 + 1, y0 + 1);
    const double a = v00 + (v10 - v00) * sx;
    const double b = v01 + (v11 - v01) * sx;
    return a + (b - a) * sy;
}

inline Rgb texture_pixel(const ClassTexture& t, int y, int x) {
    const double px = x + t.phase_x, py = y + t.phase_y;
    switch (t.family) {
        case TextureFamily::checker: {
            const int cx = static_cast<int>(std::floor(px / t.cell));
            const int cy = static_cast<int>(std::floor(py / t.cell));
            return ((cx + cy) & 1) ? t.color_b : t.color_a;
        }
        case TextureFamily::stripes: {
            const double u = px * std::cos(t.angle) + py * std::sin(t.angle);
            const double f = u / t.period - std::floor(u / t.period);
            return f < t.duty ? t.color_a : t.color_b;
        }
        case TextureFamily::noise: {
            const double n = value_noise(t.noise_seed, px / t.cell, py / t.cell);
            const double m = (n - 0.5) * 2.0 * t.amplitude;
            auto mix = [m](float base) {
                return static_cast<float>(std::min(1.0, std::max(0.0, base + m)));
            };
            return {mix(t.color_a.r), mix(t.color_a.g), mix(t.color_a.b)};
        }
        case TextureFamily::dots: {
            const double g = t.cell;
            const int gx = static_cast<int>(std::floor(px / g));
            const int gy = static_cast<int>(std::floor(py / g));
            // jittered dot center inside this grid cell
            Rng jr(derive_seed(t.noise_seed,
                               (static_cast<std::uint64_t>(static_cast<std::uint32_t>(gx)) << 32) ^
                                   static_cast<std::uint32_t>(gy)));
            const double cx = (gx + 0.3 + 0.4 * jr.uniform()) * g;
            const double cy = (gy + 0.3 + 0.4 * jr.uniform()) * g;
            const double dx = px - cx, dy = py - cy;
            return dx * dx + dy * dy <= (t.radius * g) * (t.radius * g) ? t.color_a : t.color_b;
        }
    }
    return {0, 0, 0};
}

inline Tensor<int> bands_layout(int k, int h, int w) {
    Tensor<int> labels({h, w});
    for (int y = 0; y < h; ++y) {
        const int cls = std::min(y * k / h, k - 1);
        for (int x = 0; x < w; ++x) labels.at(y, x) = cls;
    }
    return labels;
}

inline Tensor<int> voronoi_layout(int k, int h, int w, std::uint64_t seed, double min_area) {
    const int need = (k + 1) / 2;
    for (int attempt = 0; attempt < 64; ++attempt) {
        Rng rng(derive_seed(seed, "voronoi", static_cast<std::uint64_t>(attempt)));
        const int sites = 2 * k;
        std::vector<double> sy(static_cast<std::size_t>(sites)), sx(static_cast<std::size_t>(sites));
        for (int i = 0; i < sites; ++i) {
            sy[static_cast<std::size_t>(i)] = rng.uniform(0.0, h);
            sx[static_cast<std::size_t>(i)] = rng.uniform(0.0, w);
        }
        Tensor<int> labels({h, w});
        std::vector<long> area(static_cast<std::size_t>(k), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double best = 1e30;
                int bi = 0;
                for (int i = 0; i < sites; ++i) {
                    const double dy = y + 0.5 - sy[static_cast<std::size_t>(i)];
                    const double dx = x + 0.5 - sx[static_cast<std::size_t>(i)];
                    const double d = dy * dy + dx * dx;
                    if (d < best) {
                        best = d;
                        bi = i;
                    }
                }
                labels.at(y, x) = bi % k;
                ++area[static_cast<std::size_t>(bi % k)];
            }
        int big = 0;
        const double total = static_cast<double>(h) * w;
        for (int c = 0; c < k; ++c)
            if (area[static_cast<std::size_t>(c)] / total >= min_area) ++big;
        if (big >= need) return labels;
    }
    throw spec_error("voronoi layout: area invariant not satisfiable");
}

} // namespace detail

// Deterministic synthetic scene: a semantic layout where each class is filled
// with its own procedural texture.
inline Sample generate_scene(const SceneSpec& spec) {
    if (spec.k < 2 || spec.k > 8) throw spec_error("scene k must be in [2,8]");
    if (spec.height < 16 || spec.width < 16) throw spec_error("scene too small");

    Sample s;
    s.labels = spec.layout == LayoutKind::bands
                   ? detail::bands_layout(spec.k, spec.height, spec.width)
                   : detail::voronoi_layout(spec.k, spec.height, spec.width, spec.seed,
                                            spec.min_class_area);
    std::vector<detail::ClassTexture> tex;
    tex.reserve(static_cast<std::size_t>(spec.k));
    for (int c = 0; c < spec.k; ++c)
        tex.push_back(detail::sample_class_texture(c, spec.k, spec.seed));

    s.image = Tensor<float>({3, spec.height, spec.width});
    const long plane = static_cast<long>(spec.height) * spec.width;
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            const auto rgb =
                detail::texture_pixel(tex[static_cast<std::size_t>(s.labels.at(y, x))], y, x);
            const long p = static_cast<long>(y) * spec.width + x;
            s.image[p] = rgb.r;
            s.image[plane + p] = rgb.g;
            s.image[2 * plane + p] = rgb.b;
        }
    s.mask = Tensor<float>({spec.height, spec.width});
    return s;
}

} // namespace cohpaint

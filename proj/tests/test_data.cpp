#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <filesystem>
#include <queue>

#include "cohpaint/dataset.hpp"
#include "cohpaint/masks.hpp"
#include "cohpaint/png_io.hpp"
#include "cohpaint/synth.hpp"

using namespace cohpaint;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("cohpaint_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("generate_scene is deterministic in the seed") {
    SceneSpec spec;
    spec.k = 4;
    spec.layout = LayoutKind::voronoi;
    spec.seed = 1234;
    const Sample a = generate_scene(spec);
    const Sample b = generate_scene(spec);
    CHECK(max_abs_diff(a.image, b.image) == 0.0);
    for (long i = 0; i < a.labels.numel(); ++i) REQUIRE(a.labels[i] == b.labels[i]);

    spec.seed = 1235;
    const Sample c = generate_scene(spec);
    CHECK(max_abs_diff(a.image, c.image) > 0.0);
}

TEST_CASE("bands layout splits 64x64 into four 16-row bands") {
    SceneSpec spec;
    spec.k = 4;
    spec.layout = LayoutKind::bands;
    spec.height = spec.width = 64;
    spec.seed = 9;
    const Sample s = generate_scene(spec);
    std::array<long, 4> counts{};
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            REQUIRE(s.labels.at(y, x) == y / 16);
            ++counts[static_cast<std::size_t>(s.labels.at(y, x))];
        }
    for (long c : counts) CHECK(c == 1024);
}

TEST_CASE("scene labels stay in range and k is validated") {
    SceneSpec spec;
    spec.k = 8;
    spec.layout = LayoutKind::voronoi;
    spec.seed = 3;
    const Sample s = generate_scene(spec);
    for (long i = 0; i < s.labels.numel(); ++i) {
        REQUIRE(s.labels[i] >= 0);
        REQUIRE(s.labels[i] < 8);
    }
    for (long i = 0; i < s.image.numel(); ++i) {
        REQUIRE(s.image[i] >= 0.0f);
        REQUIRE(s.image[i] <= 1.0f);
    }
    spec.k = 1;
    CHECK_THROWS_AS(generate_scene(spec), spec_error);
    spec.k = 9;
    CHECK_THROWS_AS(generate_scene(spec), spec_error);
}

TEST_CASE("voronoi scenes satisfy the class-area invariant") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SceneSpec spec;
        spec.k = 4;
        spec.layout = LayoutKind::voronoi;
        spec.seed = seed;
        const Sample s = generate_scene(spec);
        std::array<long, 8> area{};
        for (long i = 0; i < s.labels.numel(); ++i) ++area[static_cast<std::size_t>(s.labels[i])];
        int big = 0;
        for (int c = 0; c < spec.k; ++c)
            if (static_cast<double>(area[static_cast<std::size_t>(c)]) / s.labels.numel() >= 0.04)
                ++big;
        REQUIRE(big >= (spec.k + 1) / 2);
    }
}

TEST_CASE("center mask matches the paper protocol") {
    MaskSpec spec;
    spec.mode = MaskMode::center;
    spec.center_fraction = 0.5;
    const auto m = generate_mask(spec, 256, 256);
    double missing = 0;
    for (long i = 0; i < m.numel(); ++i) missing += m[i];
    CHECK(missing == 16384.0);  // 128 x 128 central hole
    // centered square: rows/cols 64..191
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x) {
            const bool inside = y >= 64 && y < 192 && x >= 64 && x < 192;
            REQUIRE(m.at(y, x) == (inside ? 1.0f : 0.0f));
        }
}

TEST_CASE("irregular masks respect the area bounds and are seeded") {
    MaskSpec spec;
    spec.mode = MaskMode::irregular;
    spec.seed = 77;
    for (std::uint64_t s = 0; s < 10; ++s) {
        spec.seed = s;
        const auto m = generate_mask(spec, 64, 64);
        const double r = mask_ratio(m);
        REQUIRE(r >= 0.05);
        REQUIRE(r <= 0.60);
        for (long i = 0; i < m.numel(); ++i) REQUIRE((m[i] == 0.0f || m[i] == 1.0f));
    }
    spec.seed = 5;
    const auto a = generate_mask(spec, 64, 64);
    const auto b = generate_mask(spec, 64, 64);
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("zero strokes cannot reach the minimum ratio") {
    MaskSpec spec;
    spec.mode = MaskMode::irregular;
    spec.stroke_count = 0;
    CHECK_THROWS_AS(generate_mask(spec, 64, 64), generation_error);
}

TEST_CASE("each stroke is 4-connected") {
    MaskSpec spec;
    spec.mode = MaskMode::irregular;
    spec.stroke_count = 1;
    spec.min_ratio = 0.0005;
    spec.max_ratio = 0.9;
    for (std::uint64_t s = 0; s < 8; ++s) {
        spec.seed = s;
        const auto m = generate_mask(spec, 64, 64);
        // flood fill from the first missing pixel must reach all missing pixels
        long first = -1, total = 0;
        for (long i = 0; i < m.numel(); ++i)
            if (m[i] > 0) {
                if (first < 0) first = i;
                ++total;
            }
        REQUIRE(first >= 0);
        Tensor<int> seen({64, 64});
        std::queue<long> q;
        q.push(first);
        seen[first] = 1;
        long reached = 0;
        while (!q.empty()) {
            const long p = q.front();
            q.pop();
            ++reached;
            const int y = static_cast<int>(p / 64), x = static_cast<int>(p % 64);
            const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int d = 0; d < 4; ++d) {
                const int ny = y + dy[d], nx = x + dx[d];
                if (ny < 0 || ny >= 64 || nx < 0 || nx >= 64) continue;
                const long np = static_cast<long>(ny) * 64 + nx;
                if (m[np] > 0 && !seen[np]) {
                    seen[np] = 1;
                    q.push(np);
                }
            }
        }
        REQUIRE(reached == total);
    }
}

TEST_CASE("png roundtrip preserves labels and masks exactly, images to 8 bits") {
    const fs::path dir = temp_dir("png");
    SceneSpec spec;
    spec.seed = 42;
    spec.layout = LayoutKind::voronoi;
    const Sample s = generate_scene(spec);

    save_image_png((dir / "img.png").string(), s.image);
    save_labels_png((dir / "lbl.png").string(), s.labels);
    MaskSpec ms;
    const auto mask = generate_mask(ms, 64, 64);
    save_mask_png((dir / "mask.png").string(), mask);

    const auto img2 = image_from_png(read_png((dir / "img.png").string()));
    CHECK(max_abs_diff(img2, s.image) <= 0.5 / 255.0 + 1e-6);
    const auto lbl2 = labels_from_png(read_png((dir / "lbl.png").string()));
    for (long i = 0; i < lbl2.numel(); ++i) REQUIRE(lbl2[i] == s.labels[i]);
    const auto mask2 = mask_from_png(read_png((dir / "mask.png").string()));
    CHECK(max_abs_diff(mask2, mask) == 0.0);
}

TEST_CASE("dataset pairing skips unpaired stems with a warning") {
    const fs::path dir = temp_dir("pairing");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");
    SceneSpec spec;
    spec.seed = 1;
    const Sample a = generate_scene(spec);
    save_image_png((dir / "images" / "a.png").string(), a.image);
    save_image_png((dir / "images" / "b.png").string(), a.image);
    save_labels_png((dir / "labels" / "a.png").string(), a.labels);

    const Dataset ds = Dataset::open(dir.string(), Split::train);
    CHECK(ds.size() == 1);
    CHECK(ds.warn_count() == 1);
    CHECK(ds.get(0).id == "a");
}

TEST_CASE("empty dataset directory is an error") {
    const fs::path dir = temp_dir("empty");
    fs::create_directories(dir / "images");
    CHECK_THROWS_AS(Dataset::open(dir.string(), Split::train), io_error);
}

TEST_CASE("crop behaviour: identity, determinism, center for val") {
    const fs::path dir = temp_dir("crop");
    SceneSpec spec;
    spec.height = spec.width = 96;
    write_synth_dataset(dir.string(), spec, 2, 7);

    const Dataset train = Dataset::open(dir.string(), Split::train);
    Rng r1(5), r2(5);
    const Sample c1 = train.get_cropped(0, 64, r1);
    const Sample c2 = train.get_cropped(0, 64, r2);
    CHECK(c1.image.dim(1) == 64);
    CHECK(max_abs_diff(c1.image, c2.image) == 0.0);

    Rng r3(5);
    const Sample full = train.get_cropped(0, 96, r3);
    CHECK(max_abs_diff(full.image, train.get(0).image) == 0.0);

    const Dataset val = Dataset::open(dir.string(), Split::val);
    Rng r4(11), r5(99);
    const Sample v1 = val.get_cropped(1, 64, r4);
    const Sample v2 = val.get_cropped(1, 64, r5);
    CHECK(max_abs_diff(v1.image, v2.image) == 0.0);  // center crop ignores rng
}

TEST_CASE("write_synth_dataset is reproducible and carries metadata") {
    const fs::path d1 = temp_dir("synth1");
    const fs::path d2 = temp_dir("synth2");
    SceneSpec spec;
    write_synth_dataset(d1.string(), spec, 3, 21);
    write_synth_dataset(d2.string(), spec, 3, 21);
    const Dataset a = Dataset::open(d1.string(), Split::train);
    const Dataset b = Dataset::open(d2.string(), Split::train);
    REQUIRE(a.size() == 3);
    CHECK(a.num_classes() == 4);
    for (int i = 0; i < 3; ++i)
        CHECK(max_abs_diff(a.get(i).image, b.get(i).image) == 0.0);
}

// The premise the method rests on: local texture statistics identify the
// semantic class. A nearest-centroid rule over 5x5 patch features (channel
// means + orientation energy) fit on 100 scenes must exceed 90% accuracy.
TEST_CASE("synthetic textures identify their class from 5x5 patch statistics") {
    constexpr int kFeat = 5;
    auto patch_features = [](const Sample& s, int y, int x, double* f) {
        // channel means over the 5x5 footprint
        for (int c = 0; c < 3; ++c) {
            double m = 0;
            for (int dy = 0; dy < 5; ++dy)
                for (int dx = 0; dx < 5; ++dx) m += s.image.at(c, y + dy, x + dx);
            f[c] = m / 25.0;
        }
        // orientation energy: mean |d/dx| and |d/dy| of luminance
        double gx = 0, gy = 0;
        auto lum = [&s](int yy, int xx) {
            return (s.image.at(0, yy, xx) + s.image.at(1, yy, xx) + s.image.at(2, yy, xx)) / 3.0;
        };
        for (int dy = 0; dy < 5; ++dy)
            for (int dx = 0; dx < 4; ++dx) gx += std::abs(lum(y + dy, x + dx + 1) - lum(y + dy, x + dx));
        for (int dy = 0; dy < 4; ++dy)
            for (int dx = 0; dx < 5; ++dx) gy += std::abs(lum(y + dy + 1, x + dx) - lum(y + dy, x + dx));
        f[3] = gx / 20.0;
        f[4] = gy / 20.0;
    };
    auto pure_class = [](const Sample& s, int y, int x) {
        const int c = s.labels.at(y, x);
        for (int dy = 0; dy < 5; ++dy)
            for (int dx = 0; dx < 5; ++dx)
                if (s.labels.at(y + dy, x + dx) != c) return -1;
        return c;
    };

    SceneSpec spec;
    spec.k = 4;
    spec.layout = LayoutKind::voronoi;

    // fit centroids on 100 scenes
    std::array<std::array<double, kFeat>, 4> centroid{};
    std::array<long, 4> count{};
    Rng sampler(2024);
    for (int scene = 0; scene < 100; ++scene) {
        spec.seed = derive_seed(99, "fit", static_cast<std::uint64_t>(scene));
        const Sample s = generate_scene(spec);
        for (int tries = 0; tries < 40; ++tries) {
            const int y = sampler.uniform_int(60), x = sampler.uniform_int(60);
            const int c = pure_class(s, y, x);
            if (c < 0) continue;
            double f[kFeat];
            patch_features(s, y, x, f);
            for (int i = 0; i < kFeat; ++i) centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] += f[i];
            ++count[static_cast<std::size_t>(c)];
        }
    }
    for (int c = 0; c < 4; ++c) {
        REQUIRE(count[static_cast<std::size_t>(c)] > 0);
        for (int i = 0; i < kFeat; ++i) centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] /= static_cast<double>(count[static_cast<std::size_t>(c)]);
    }

    // evaluate on 50 held-out scenes
    long correct = 0, total = 0;
    for (int scene = 0; scene < 50; ++scene) {
        spec.seed = derive_seed(99, "eval", static_cast<std::uint64_t>(scene));
        const Sample s = generate_scene(spec);
        for (int tries = 0; tries < 40; ++tries) {
            const int y = sampler.uniform_int(60), x = sampler.uniform_int(60);
            const int c = pure_class(s, y, x);
            if (c < 0) continue;
            double f[kFeat];
            patch_features(s, y, x, f);
            int best = 0;
            double bd = 1e30;
            for (int cc = 0; cc < 4; ++cc) {
                double d = 0;
                for (int i = 0; i < kFeat; ++i) {
                    const double diff = f[i] - centroid[static_cast<std::size_t>(cc)][static_cast<std::size_t>(i)];
                    d += diff * diff;
                }
                if (d < bd) {
                    bd = d;
                    best = cc;
                }
            }
            if (best == c) ++correct;
            ++total;
        }
    }
    REQUIRE(total > 500);
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    INFO("nearest-centroid accuracy = " << acc);
    CHECK(acc > 0.90);
}

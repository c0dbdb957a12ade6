#include <catch2/catch_amalgamated.hpp>

#include "cohpaint/image_ops.hpp"
#include "cohpaint/rng.hpp"

using namespace cohpaint;

TEST_CASE("build_pyramid level sizes halve down to H/16") {
    Tensor<float> img({3, 256, 256}, 0.0f);
    auto pyr = build_pyramid(img, PyramidKind::image);
    const int expected[5] = {16, 32, 64, 128, 256};
    for (int l = 1; l <= 5; ++l) {
        CHECK(pyr.level(l).dim(1) == expected[l - 1]);
        CHECK(pyr.level(l).dim(2) == expected[l - 1]);
    }
}

TEST_CASE("build_pyramid of a constant image stays constant") {
    Tensor<float> img({3, 64, 64}, 0.3f);
    auto pyr = build_pyramid(img, PyramidKind::image);
    for (int l = 1; l <= 5; ++l) {
        for (long i = 0; i < pyr.level(l).numel(); ++i)
            REQUIRE(pyr.level(l)[i] == Catch::Approx(0.3f).margin(1e-6));
    }
}

TEST_CASE("mask pyramid rounds toward missing") {
    Tensor<float> mask({64, 64}, 0.0f);
    mask.at(17, 42) = 1.0f;  // a single missing pixel
    auto pyr = build_pyramid(mask, PyramidKind::mask);
    for (int l = 1; l <= 5; ++l) {
        float total = 0.0f;
        for (long i = 0; i < pyr.level(l).numel(); ++i) total += pyr.level(l)[i];
        INFO("level " << l);
        CHECK(total >= 1.0f);  // the missing pixel survives every reduction
        for (long i = 0; i < pyr.level(l).numel(); ++i)
            CHECK((pyr.level(l)[i] == 0.0f || pyr.level(l)[i] == 1.0f));
    }
    // and it lands where expected at level 1 (factor 16)
    CHECK(pyr.level(1).at(17 / 16, 42 / 16) == 1.0f);
}

TEST_CASE("label pyramid keeps valid class ids") {
    Tensor<int> labels({32, 32});
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) labels.at(y, x) = (y < 16) ? 0 : 3;
    auto pyr = build_pyramid(labels, PyramidKind::labels);
    for (int l = 1; l <= 5; ++l)
        for (long i = 0; i < pyr.level(l).numel(); ++i)
            CHECK((pyr.level(l)[i] == 0 || pyr.level(l)[i] == 3));
}

TEST_CASE("build_pyramid rejects sizes not divisible by 16") {
    Tensor<float> img({3, 60, 64}, 0.0f);
    CHECK_THROWS_AS(build_pyramid(img, PyramidKind::image), shape_error);
}

TEST_CASE("upsample of a constant is constant") {
    Tensor<float> x({1, 16, 16}, 0.5f);
    auto up = upsample_bilinear_t(x, 256, 256);
    REQUIRE(up.dim(1) == 256);
    for (long i = 0; i < up.numel(); ++i) REQUIRE(up[i] == Catch::Approx(0.5f).margin(1e-6));
}

TEST_CASE("upsample to the same size is the identity") {
    Rng rng(5);
    Tensor<float> x({3, 8, 8});
    for (long i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform());
    auto up = upsample_bilinear_t(x, 8, 8);
    CHECK(max_abs_diff(up, x) == 0.0);
    auto upn = upsample_nearest_t(x, 8, 8);
    CHECK(max_abs_diff(upn, x) == 0.0);
}

TEST_CASE("nearest upsample duplicates each cell") {
    Tensor<float> x({1, 2, 2});
    x.at(0, 0, 0) = 0.0f;
    x.at(0, 0, 1) = 1.0f;
    x.at(0, 1, 0) = 1.0f;
    x.at(0, 1, 1) = 0.0f;
    auto up = upsample_nearest_t(x, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) CHECK(up.at(0, y, xx) == x.at(0, y / 2, xx / 2));
}

TEST_CASE("upsample refuses to downscale") {
    Tensor<float> x({1, 8, 8}, 0.0f);
    CHECK_THROWS_AS(upsample_bilinear_t(x, 4, 8), shape_error);
    CHECK_THROWS_AS(upsample_nearest_t(x, 8, 4), shape_error);
}

TEST_CASE("composite obeys the mask") {
    Rng rng(6);
    Tensor<float> pred({3, 4, 4}), known({3, 4, 4});
    for (long i = 0; i < pred.numel(); ++i) {
        pred[i] = static_cast<float>(rng.uniform());
        known[i] = static_cast<float>(rng.uniform());
    }
    SECTION("all missing returns pred") {
        Tensor<float> m({4, 4}, 1.0f);
        CHECK(max_abs_diff(composite(pred, known, m), pred) == 0.0);
    }
    SECTION("all known returns known") {
        Tensor<float> m({4, 4}, 0.0f);
        CHECK(max_abs_diff(composite(pred, known, m), known) == 0.0);
    }
    SECTION("single missing pixel differs only there") {
        Tensor<float> m({4, 4}, 0.0f);
        m.at(1, 2) = 1.0f;
        auto out = composite(pred, known, m);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x) {
                    if (y == 1 && x == 2)
                        CHECK(out.at(c, y, x) == pred.at(c, y, x));
                    else
                        CHECK(out.at(c, y, x) == known.at(c, y, x));
                }
    }
    SECTION("idempotent") {
        Tensor<float> m({4, 4}, 0.0f);
        m.at(0, 0) = m.at(3, 3) = 1.0f;
        auto once = composite(pred, known, m);
        auto twice = composite(once, known, m);
        CHECK(max_abs_diff(once, twice) == 0.0);
    }
    SECTION("shape mismatch throws") {
        Tensor<float> m({5, 4}, 0.0f);
        CHECK_THROWS_AS(composite(pred, known, m), shape_error);
    }
}

TEST_CASE("labels_from_probs fixtures") {
    SECTION("plain argmax") {
        Tensor<float> p({3, 1, 1});
        p[0] = 0.2f; p[1] = 0.5f; p[2] = 0.3f;
        CHECK(labels_from_probs(p)[0] == 1);
    }
    SECTION("tie breaks toward the lowest index") {
        Tensor<float> p({2, 1, 1});
        p[0] = 0.5f; p[1] = 0.5f;
        CHECK(labels_from_probs(p)[0] == 0);
    }
    SECTION("one-hot") {
        Tensor<float> p({5, 1, 1});
        p[3] = 1.0f;
        CHECK(labels_from_probs(p)[0] == 3);
    }
}

TEST_CASE("argmax is invariant to positive per-pixel rescaling") {
    Rng rng(77);
    Tensor<float> p({4, 6, 6});
    for (long i = 0; i < p.numel(); ++i) p[i] = static_cast<float>(rng.uniform(0.01, 1.0));
    auto base = labels_from_probs(p);
    Tensor<float> scaled = p;
    const long plane = 36;
    for (long px = 0; px < plane; ++px) {
        const float s = static_cast<float>(rng.uniform(0.5, 4.0));
        for (int c = 0; c < 4; ++c) scaled[c * plane + px] *= s;
    }
    auto after = labels_from_probs(scaled);
    for (long i = 0; i < base.numel(); ++i) REQUIRE(base[i] == after[i]);
}

TEST_CASE("pyramid level 1 upsampled to full size matches source shape") {
    Tensor<float> img({3, 64, 48}, 0.1f);
    auto pyr = build_pyramid(img, PyramidKind::image);
    auto up = upsample_bilinear_t(pyr.level(1), 64, 48);
    CHECK(up.shape() == img.shape());
}

TEST_CASE("valid_seg_probs checks the channel sum") {
    Tensor<float> good({2, 2, 2}, 0.5f);
    CHECK(valid_seg_probs(good));
    Tensor<float> bad({2, 2, 2}, 0.6f);
    CHECK_FALSE(valid_seg_probs(bad));
}

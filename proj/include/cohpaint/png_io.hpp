#pragma once

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "cohpaint/tensor.hpp"

namespace cohpaint {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;               // 1 (gray) or 3 (rgb)
    std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

namespace detail {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
} // namespace detail

inline PngImage read_png(const std::string& path) {
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw io_error("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw io_error("png_create_info_struct failed");
    }
    PngImage img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error("failed to decode " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    if (img.channels != 1 && img.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw io_error(path + ": unsupported channel count " + std::to_string(img.channels));
    }
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    rows.resize(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] =
            img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_png(const std::string& path, int width, int height, int channels,
                      const std::uint8_t* pixels) {
    if (channels != 1 && channels != 3) throw io_error("write_png: channels must be 1 or 3");
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw io_error("cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw io_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("failed to encode " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(
            pixels + static_cast<std::size_t>(y) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// --- conversions between 8-bit files and internal [0,1] float tensors -----

inline Tensor<float> image_from_png(const PngImage& img) {
    Tensor<float> out({3, img.height, img.width});
    const long plane = static_cast<long>(img.height) * img.width;
    for (long p = 0; p < plane; ++p) {
        if (img.channels == 3) {
            out[p] = img.pixels[static_cast<std::size_t>(3 * p)] / 255.0f;
            out[plane + p] = img.pixels[static_cast<std::size_t>(3 * p + 1)] / 255.0f;
            out[2 * plane + p] = img.pixels[static_cast<std::size_t>(3 * p + 2)] / 255.0f;
        } else {
            const float v = img.pixels[static_cast<std::size_t>(p)] / 255.0f;
            out[p] = out[plane + p] = out[2 * plane + p] = v;
        }
    }
    return out;
}

inline Tensor<int> labels_from_png(const PngImage& img) {
    if (img.channels != 1) throw io_error("label map must be a single-channel PNG");
    Tensor<int> out({img.height, img.width});
    for (long p = 0; p < out.numel(); ++p) out[p] = img.pixels[static_cast<std::size_t>(p)];
    return out;
}

inline Tensor<float> mask_from_png(const PngImage& img) {
    if (img.channels != 1) throw io_error("mask must be a single-channel PNG");
    Tensor<float> out({img.height, img.width});
    for (long p = 0; p < out.numel(); ++p)
        out[p] = img.pixels[static_cast<std::size_t>(p)] >= 128 ? 1.0f : 0.0f;
    return out;
}

inline void save_image_png(const std::string& path, const Tensor<float>& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw io_error("save_image_png: need [3,H,W]");
    const int h = image.dim(1), w = image.dim(2);
    const long plane = static_cast<long>(h) * w;
    std::vector<std::uint8_t> px(static_cast<std::size_t>(plane) * 3);
    auto q = [](float v) {
        const float c = std::min(1.0f, std::max(0.0f, v));
        return static_cast<std::uint8_t>(c * 255.0f + 0.5f);
    };
    for (long p = 0; p < plane; ++p) {
        px[static_cast<std::size_t>(3 * p)] = q(image[p]);
        px[static_cast<std::size_t>(3 * p + 1)] = q(image[plane + p]);
        px[static_cast<std::size_t>(3 * p + 2)] = q(image[2 * plane + p]);
    }
    write_png(path, w, h, 3, px.data());
}

inline void save_labels_png(const std::string& path, const Tensor<int>& labels) {
    if (labels.rank() != 2) throw io_error("save_labels_png: need [H,W]");
    std::vector<std::uint8_t> px(static_cast<std::size_t>(labels.numel()));
    for (long p = 0; p < labels.numel(); ++p) {
        if (labels[p] < 0 || labels[p] > 255) throw io_error("label out of 8-bit range");
        px[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(labels[p]);
    }
    write_png(path, labels.dim(1), labels.dim(0), 1, px.data());
}

inline void save_mask_png(const std::string& path, const Tensor<float>& mask) {
    if (mask.rank() != 2) throw io_error("save_mask_png: need [H,W]");
    std::vector<std::uint8_t> px(static_cast<std::size_t>(mask.numel()));
    for (long p = 0; p < mask.numel(); ++p)
        px[static_cast<std::size_t>(p)] = mask[p] > 0.5f ? 255 : 0;
    write_png(path, mask.dim(1), mask.dim(0), 1, px.data());
}

} // namespace cohpaint

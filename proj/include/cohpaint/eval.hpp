#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohpaint/dataset.hpp"
#include "cohpaint/train.hpp"

namespace cohpaint {

constexpr double kPsnrCap = 100.0;

// 10*log10(1/MSE) over the region (full image without a mask); images in
// [0,1]. Identical inputs report the cap.
template <class T>
double compute_psnr(const Tensor<T>& a, const Tensor<T>& b,
                    const Tensor<T>* region_mask = nullptr) {
    if (!a.same_shape(b)) throw shape_error("compute_psnr: shape mismatch");
    const long plane = a.rank() == 3 ? static_cast<long>(a.dim(1)) * a.dim(2) : a.numel();
    const int ch = a.rank() == 3 ? a.dim(0) : 1;
    if (region_mask && region_mask->numel() != plane)
        throw shape_error("compute_psnr: mask size mismatch");
    double mse = 0.0;
    long count = 0;
    for (long p = 0; p < plane; ++p) {
        if (region_mask && (*region_mask)[p] <= T(0.5)) continue;
        for (int c = 0; c < ch; ++c) {
            const double d = static_cast<double>(a[c * plane + p]) - static_cast<double>(b[c * plane + p]);
            mse += d * d;
        }
        ++count;
    }
    if (count == 0) throw shape_error("compute_psnr: empty region");
    mse /= static_cast<double>(count) * ch;
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> gaussian_window_11(double sigma = 1.5) {
    std::vector<double> w(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

} // namespace detail

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01)^2,
// C2=(0.03)^2 on the [0,1] range, valid windows only, channel-averaged.
template <class T>
double compute_ssim(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw shape_error("compute_ssim: shape mismatch");
    const int ch = a.rank() == 3 ? a.dim(0) : 1;
    const int h = a.rank() == 3 ? a.dim(1) : a.dim(0);
    const int w = a.rank() == 3 ? a.dim(2) : a.dim(1);
    if (h < 11 || w < 11) throw shape_error("compute_ssim: image smaller than the 11x11 window");
    const auto win = detail::gaussian_window_11();
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const long plane = static_cast<long>(h) * w;

    double total = 0.0;
    for (int c = 0; c < ch; ++c) {
        const T* pa = a.data() + static_cast<long>(c) * plane;
        const T* pb = b.data() + static_cast<long>(c) * plane;
        // separable blur of the five moment maps
        auto blur = [&](auto&& get) {
            std::vector<double> tmp(static_cast<std::size_t>(plane));
            std::vector<double> out(static_cast<std::size_t>((h - 10) * (w - 10)));
            // horizontal pass (valid columns)
            std::vector<double> hpass(static_cast<std::size_t>(h * (w - 10)));
            for (int y = 0; y < h; ++y)
                for (int x = 0; x + 11 <= w; ++x) {
                    double s = 0;
                    for (int i = 0; i < 11; ++i) s += win[static_cast<std::size_t>(i)] * get(y, x + i);
                    hpass[static_cast<std::size_t>(y * (w - 10) + x)] = s;
                }
            for (int y = 0; y + 11 <= h; ++y)
                for (int x = 0; x < w - 10; ++x) {
                    double s = 0;
                    for (int i = 0; i < 11; ++i)
                        s += win[static_cast<std::size_t>(i)] * hpass[static_cast<std::size_t>((y + i) * (w - 10) + x)];
                    out[static_cast<std::size_t>(y * (w - 10) + x)] = s;
                }
            return out;
        };
        auto mu_a = blur([&](int y, int x) { return static_cast<double>(pa[y * w + x]); });
        auto mu_b = blur([&](int y, int x) { return static_cast<double>(pb[y * w + x]); });
        auto aa = blur([&](int y, int x) { return static_cast<double>(pa[y * w + x]) * pa[y * w + x]; });
        auto bb = blur([&](int y, int x) { return static_cast<double>(pb[y * w + x]) * pb[y * w + x]; });
        auto ab = blur([&](int y, int x) { return static_cast<double>(pa[y * w + x]) * pb[y * w + x]; });

        double acc = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = aa[i] - ma * ma;
            const double vb = bb[i] - mb * mb;
            const double cov = ab[i] - ma * mb;
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / ch;
}

// Mean IoU over the classes 0..k-1 whose union is non-empty in the region.
// Pixels labelled outside [0,k) never match any scored class.
inline double compute_miou(const Tensor<int>& pred, const Tensor<int>& gt, int k,
                           const Tensor<float>* region_mask = nullptr) {
    if (!pred.same_shape(gt)) throw shape_error("compute_miou: shape mismatch");
    if (region_mask && region_mask->numel() != pred.numel())
        throw shape_error("compute_miou: mask size mismatch");
    std::vector<long> inter(static_cast<std::size_t>(k), 0);
    std::vector<long> uni(static_cast<std::size_t>(k), 0);
    long region = 0;
    for (long p = 0; p < pred.numel(); ++p) {
        if (region_mask && (*region_mask)[p] <= 0.5f) continue;
        ++region;
        const int a = pred[p], b = gt[p];
        for (int c = 0; c < k; ++c) {
            const bool in_a = a == c, in_b = b == c;
            if (in_a && in_b) ++inter[static_cast<std::size_t>(c)];
            if (in_a || in_b) ++uni[static_cast<std::size_t>(c)];
        }
    }
    if (region == 0) throw shape_error("compute_miou: empty region");
    double sum = 0.0;
    int classes = 0;
    for (int c = 0; c < k; ++c) {
        if (uni[static_cast<std::size_t>(c)] == 0) continue;
        sum += static_cast<double>(inter[static_cast<std::size_t>(c)]) / uni[static_cast<std::size_t>(c)];
        ++classes;
    }
    return classes > 0 ? sum / classes : 1.0;
}

// ---------------------------------------------------------------------------

struct MetricsRow {
    std::string id;
    double psnr = 0, ssim = 0, miou = 0, hole_psnr = 0, hole_miou = 0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    MetricsRow aggregate;  // arithmetic means, id = "aggregate"
    bool has_miou = true;
    std::string checkpoint;
    std::string dataset;
    nlohmann::json mask_spec;
};

struct EvalOptions {
    bool composite_output = true;  // paste known pixels back before scoring
    bool write_grids = false;
    int limit = 0;  // 0 = every sample
};

inline MetricsReport evaluate(const Generator<float>& gen, const Dataset& data,
                              const MaskSpec& mask_spec, const std::string& out_dir,
                              const EvalOptions& opts = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const int k = gen.config().k;
    if (data.has_labels() && data.num_classes() > k)
        throw checkpoint_error("config mismatch: dataset has " + std::to_string(data.num_classes()) +
                               " classes but the checkpoint was trained with k=" + std::to_string(k));

    MetricsReport rep;
    rep.has_miou = data.has_labels();
    rep.dataset = data.root();
    rep.mask_spec = mask_spec;
    if (!rep.has_miou)
        std::fprintf(stderr, "evaluate: dataset has no labels, mIoU columns omitted\n");

    const int n = opts.limit > 0 ? std::min(opts.limit, data.size()) : data.size();
    for (int i = 0; i < n; ++i) {
        const Sample s = data.get(i);
        MaskSpec ms = mask_spec;
        ms.seed = derive_seed(mask_spec.seed, "eval_mask", static_cast<std::uint64_t>(i));
        const Tensor<float> mask = generate_mask(ms, s.image.dim(1), s.image.dim(2));

        const auto pred = gen.predict(s.image, mask);
        const Tensor<float> out_img =
            opts.composite_output ? composite(pred.image, s.image, mask) : pred.image;
        const Tensor<int> pred_labels = labels_from_probs(pred.seg_probs);

        MetricsRow row;
        row.id = s.id;
        row.psnr = compute_psnr(out_img, s.image);
        row.ssim = compute_ssim(out_img, s.image);
        const bool hole_empty = mask_ratio(mask) == 0.0;
        row.hole_psnr = hole_empty ? kPsnrCap : compute_psnr(out_img, s.image, &mask);
        if (rep.has_miou) {
            row.miou = compute_miou(pred_labels, s.labels, k);
            row.hole_miou = hole_empty ? 1.0 : compute_miou(pred_labels, s.labels, k, &mask);
        }
        rep.rows.push_back(row);

        if (opts.write_grids) {
            const int h = s.image.dim(1), w = s.image.dim(2);
            Tensor<float> grid({3, h, 4 * w});
            const Tensor<float> masked = composite(Tensor<float>({3, h, w}, 0.0f), s.image, mask);
            const Tensor<float> segc = colorize_labels(pred_labels, k);
            auto paste = [&](const Tensor<float>& img, int col) {
                for (int c = 0; c < 3; ++c)
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x) grid.at(c, y, col * w + x) = img.at(c, y, x);
            };
            paste(masked, 0);
            paste(out_img, 1);
            paste(segc, 2);
            paste(s.image, 3);
            save_image_png((fs::path(out_dir) / (s.id + "_grid.png")).string(), grid);
        }
    }

    rep.aggregate.id = "aggregate";
    for (const MetricsRow& r : rep.rows) {
        rep.aggregate.psnr += r.psnr;
        rep.aggregate.ssim += r.ssim;
        rep.aggregate.miou += r.miou;
        rep.aggregate.hole_psnr += r.hole_psnr;
        rep.aggregate.hole_miou += r.hole_miou;
    }
    const double inv = rep.rows.empty() ? 0.0 : 1.0 / static_cast<double>(rep.rows.size());
    rep.aggregate.psnr *= inv;
    rep.aggregate.ssim *= inv;
    rep.aggregate.miou *= inv;
    rep.aggregate.hole_psnr *= inv;
    rep.aggregate.hole_miou *= inv;

    // report.csv: one row per sample plus the aggregate. The fid column is
    // reserved but unavailable: it needs a pretrained feature network.
    {
        std::ofstream csv(fs::path(out_dir) / "report.csv");
        csv << "id,psnr,ssim,miou,hole_psnr,hole_miou,fid\n";
        auto write_row = [&](const MetricsRow& r) {
            csv << r.id << ',' << r.psnr << ',' << r.ssim << ',';
            if (rep.has_miou)
                csv << r.miou;
            csv << ',' << r.hole_psnr << ',';
            if (rep.has_miou) csv << r.hole_miou;
            csv << ",\n";
        };
        for (const MetricsRow& r : rep.rows) write_row(r);
        write_row(rep.aggregate);
    }
    {
        nlohmann::json j;
        j["dataset"] = rep.dataset;
        j["checkpoint"] = rep.checkpoint;
        j["mask"] = rep.mask_spec;
        j["samples"] = rep.rows.size();
        j["has_miou"] = rep.has_miou;
        j["fid"] = nullptr;
        j["fid_note"] = "unavailable: requires a pretrained classification network";
        j["aggregate"] = {{"psnr", rep.aggregate.psnr},
                          {"ssim", rep.aggregate.ssim},
                          {"hole_psnr", rep.aggregate.hole_psnr}};
        if (rep.has_miou) {
            j["aggregate"]["miou"] = rep.aggregate.miou;
            j["aggregate"]["hole_miou"] = rep.aggregate.hole_miou;
        }
        std::ofstream jf(fs::path(out_dir) / "report.json");
        jf << j.dump(2) << "\n";
    }
    return rep;
}

} // namespace cohpaint

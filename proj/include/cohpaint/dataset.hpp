#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohpaint/image_ops.hpp"
#include "cohpaint/masks.hpp"
#include "cohpaint/png_io.hpp"
#include "cohpaint/rng.hpp"
#include "cohpaint/synth.hpp"

namespace cohpaint {

enum class Split { train, val };

// On-disk layout: images/<id>.png, labels/<id>.png, optional masks/<id>.png,
// optional dataset.json with generation metadata.
class Dataset {
public:
    static Dataset open(const std::string& root, Split split) {
        namespace fs = std::filesystem;
        Dataset ds;
        ds.root_ = root;
        ds.split_ = split;
        const fs::path images = fs::path(root) / "images";
        const fs::path labels = fs::path(root) / "labels";
        const fs::path masks = fs::path(root) / "masks";
        if (!fs::is_directory(images)) throw io_error("dataset: missing images/ under " + root);
        ds.has_labels_ = fs::is_directory(labels);
        ds.has_masks_ = fs::is_directory(masks);

        std::vector<std::string> stems;
        for (const auto& e : fs::directory_iterator(images))
            if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
        std::sort(stems.begin(), stems.end());
        for (const std::string& s : stems) {
            if (ds.has_labels_ && !fs::exists(labels / (s + ".png"))) {
                ds.skipped_.push_back(s);
                continue;
            }
            ds.stems_.push_back(s);
        }
        if (ds.has_labels_) {
            // labels without a matching image are unpaired as well
            for (const auto& e : fs::directory_iterator(labels)) {
                if (e.path().extension() != ".png") continue;
                const std::string s = e.path().stem().string();
                if (!fs::exists(images / (s + ".png"))) ds.skipped_.push_back(s);
            }
        }
        if (ds.stems_.empty()) throw io_error("dataset: no paired samples under " + root);

        const fs::path meta = fs::path(root) / "dataset.json";
        if (fs::exists(meta)) {
            std::ifstream f(meta);
            nlohmann::json j;
            f >> j;
            if (j.contains("k")) ds.num_classes_ = j["k"].get<int>();
        }
        return ds;
    }

    int size() const { return static_cast<int>(stems_.size()); }
    int warn_count() const { return static_cast<int>(skipped_.size()); }
    const std::vector<std::string>& skipped() const { return skipped_; }
    bool has_labels() const { return has_labels_; }
    const std::string& root() const { return root_; }

    int num_classes() const {
        if (num_classes_ > 0) return num_classes_;
        int mx = 0;
        for (int i = 0; i < size(); ++i) {
            const Sample s = get(i);
            if (s.labels.numel() > 0) mx = std::max(mx, static_cast<int>(s.labels.max_value()));
        }
        return mx + 1;
    }

    Sample get(int i) const {
        namespace fs = std::filesystem;
        const std::string& stem = stems_[static_cast<std::size_t>(i)];
        Sample s;
        s.id = stem;
        s.image = image_from_png(read_png((fs::path(root_) / "images" / (stem + ".png")).string()));
        if (has_labels_)
            s.labels =
                labels_from_png(read_png((fs::path(root_) / "labels" / (stem + ".png")).string()));
        else
            s.labels = Tensor<int>({s.image.dim(1), s.image.dim(2)});
        if (has_masks_ && fs::exists(fs::path(root_) / "masks" / (stem + ".png")))
            s.mask = mask_from_png(read_png((fs::path(root_) / "masks" / (stem + ".png")).string()));
        else
            s.mask = Tensor<float>({s.image.dim(1), s.image.dim(2)});
        if (s.labels.dim(0) != s.image.dim(1) || s.labels.dim(1) != s.image.dim(2))
            throw io_error("dataset: image/label size mismatch for " + stem);
        return s;
    }

    // Shared crop across image/labels/mask. Train split crops at a random
    // offset drawn from rng; val uses the center crop.
    Sample get_cropped(int i, int crop, Rng& rng) const {
        Sample s = get(i);
        const int h = s.image.dim(1), w = s.image.dim(2);
        if (crop <= 0 || (crop == h && crop == w)) return s;
        if (crop > h || crop > w) throw io_error("dataset: crop larger than image");
        int oy, ox;
        if (split_ == Split::train) {
            oy = rng.uniform_int(h - crop + 1);
            ox = rng.uniform_int(w - crop + 1);
        } else {
            oy = (h - crop) / 2;
            ox = (w - crop) / 2;
        }
        Sample out;
        out.id = s.id;
        out.image = Tensor<float>({3, crop, crop});
        out.labels = Tensor<int>({crop, crop});
        out.mask = Tensor<float>({crop, crop});
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x) {
                for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = s.image.at(c, oy + y, ox + x);
                out.labels.at(y, x) = s.labels.at(oy + y, ox + x);
                out.mask.at(y, x) = s.mask.at(oy + y, ox + x);
            }
        return out;
    }

private:
    std::string root_;
    Split split_ = Split::train;
    std::vector<std::string> stems_;
    std::vector<std::string> skipped_;
    bool has_labels_ = false;
    bool has_masks_ = false;
    int num_classes_ = 0;
};

// Materialises `count` synthetic scenes under root/{images,labels} plus a
// dataset.json metadata file. Scene i uses seed derive(seed, "scene", i).
inline void write_synth_dataset(const std::string& root, const SceneSpec& base, int count,
                                std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "labels");
    for (int i = 0; i < count; ++i) {
        SceneSpec spec = base;
        spec.seed = derive_seed(seed, "scene", static_cast<std::uint64_t>(i));
        Sample s = generate_scene(spec);
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05d", i);
        save_image_png((fs::path(root) / "images" / (std::string(name) + ".png")).string(), s.image);
        save_labels_png((fs::path(root) / "labels" / (std::string(name) + ".png")).string(),
                        s.labels);
    }
    nlohmann::json meta;
    meta["k"] = base.k;
    meta["height"] = base.height;
    meta["width"] = base.width;
    meta["count"] = count;
    meta["layout"] = base.layout == LayoutKind::bands ? "bands" : "voronoi";
    meta["seed"] = seed;
    std::ofstream f(fs::path(root) / "dataset.json");
    f << meta.dump(2) << "\n";
}

} // namespace cohpaint

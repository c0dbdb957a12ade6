#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cohpaint/config.hpp"
#include "cohpaint/eval.hpp"

namespace cohpaint {

namespace cli_detail {

inline LayoutKind parse_layout(const std::string& s) {
    if (s == "bands") return LayoutKind::bands;
    if (s == "voronoi") return LayoutKind::voronoi;
    throw config_error("layout must be bands or voronoi, got " + s);
}

inline int cmd_make_synth(const RunConfig& cfg) {
    SceneSpec spec;
    spec.k = cfg.synth.k;
    spec.height = cfg.synth.height;
    spec.width = cfg.synth.width;
    spec.layout = parse_layout(cfg.synth.layout);
    write_synth_dataset(cfg.out_dir, spec, cfg.synth.count, cfg.seed);
    write_resolved_config(cfg, cfg.out_dir);
    std::cout << "wrote " << cfg.synth.count << " scenes to " << cfg.out_dir << "\n";
    return 0;
}

inline int cmd_make_masks(const RunConfig& cfg, int count) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(cfg.out_dir) / "masks");
    for (int i = 0; i < count; ++i) {
        MaskSpec ms = cfg.mask;
        ms.seed = derive_seed(cfg.seed, "make_masks", static_cast<std::uint64_t>(i));
        const auto m = generate_mask(ms, cfg.synth.height, cfg.synth.width);
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%05d.png", i);
        save_mask_png((fs::path(cfg.out_dir) / "masks" / name).string(), m);
    }
    write_resolved_config(cfg, cfg.out_dir);
    std::cout << "wrote " << count << " masks to " << cfg.out_dir << "/masks\n";
    return 0;
}

inline int cmd_train(const RunConfig& cfg) {
    TrainConfig tc = make_train_config(cfg);
    tc.validate();
    write_resolved_config(cfg, cfg.out_dir);
    Trainer trainer(tc);
    const auto res = cfg.train.resume.empty() ? trainer.fit()
                                              : trainer.fit(cfg.train.resume);
    std::cout << "final checkpoint: " << res.final_checkpoint << "\n";
    return 0;
}

inline int cmd_infer(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.infer.checkpoint.empty()) throw config_error("infer.checkpoint is required");
    if (cfg.dataset.root.empty()) throw config_error("dataset.root is required");
    Generator<float> gen = load_generator(cfg.infer.checkpoint);
    Dataset data = Dataset::open(cfg.dataset.root, Split::val);
    fs::create_directories(cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);

    for (int i = 0; i < data.size(); ++i) {
        const Sample s = data.get(i);
        Tensor<float> mask = s.mask;
        if (mask_ratio(mask) == 0.0) {
            MaskSpec ms = cfg.mask;
            ms.seed = derive_seed(cfg.seed, "infer_mask", static_cast<std::uint64_t>(i));
            mask = generate_mask(ms, s.image.dim(1), s.image.dim(2));
        }
        const auto pred = gen.predict(s.image, mask, cfg.infer.dump_attention);
        const Tensor<float> out_img =
            cfg.infer.composite ? composite(pred.image, s.image, mask) : pred.image;
        save_image_png((fs::path(cfg.out_dir) / (s.id + "_output.png")).string(), out_img);
        save_labels_png((fs::path(cfg.out_dir) / (s.id + "_seg.png")).string(),
                        labels_from_probs(pred.seg_probs));
        save_mask_png((fs::path(cfg.out_dir) / (s.id + "_mask.png")).string(), mask);

        if (cfg.infer.dump_attention) {
            std::ofstream jl(fs::path(cfg.out_dir) / (s.id + "_attention.jsonl"));
            for (int l = 0; l < kNumScales - 1; ++l) {
                const auto& recs = pred.attention[static_cast<std::size_t>(l)];
                if (!recs) continue;
                for (const AttentionRecord& r : *recs) {
                    // top-5 reference weights
                    std::vector<std::size_t> order(r.weights.size());
                    for (std::size_t q = 0; q < order.size(); ++q) order[q] = q;
                    std::partial_sort(order.begin(),
                                      order.begin() + std::min<std::size_t>(5, order.size()),
                                      order.end(), [&](std::size_t a, std::size_t b) {
                                          return r.weights[a] > r.weights[b];
                                      });
                    nlohmann::json row;
                    row["scale"] = l + 2;  // attention refines scales 2..5
                    row["y"] = r.center_y;
                    row["x"] = r.center_x;
                    row["class"] = r.cls;
                    row["fallback"] = r.fallback;
                    nlohmann::json top = nlohmann::json::array();
                    for (std::size_t q = 0; q < std::min<std::size_t>(5, order.size()); ++q)
                        top.push_back({{"ref", r.ref_index[order[q]]},
                                       {"weight", r.weights[order[q]]}});
                    row["top"] = top;
                    jl << row.dump() << "\n";
                }
            }
        }
    }
    std::cout << "wrote " << data.size() << " outputs to " << cfg.out_dir << "\n";
    return 0;
}

inline int cmd_eval(const RunConfig& cfg) {
    if (cfg.eval.checkpoint.empty()) throw config_error("eval.checkpoint is required");
    if (cfg.dataset.root.empty()) throw config_error("dataset.root is required");
    Generator<float> gen = load_generator(cfg.eval.checkpoint);
    Dataset data = Dataset::open(cfg.dataset.root, Split::val);
    EvalOptions opts;
    opts.composite_output = cfg.eval.composite;
    opts.write_grids = cfg.eval.grids;
    opts.limit = cfg.eval.limit;
    write_resolved_config(cfg, cfg.out_dir);
    MaskSpec ms = cfg.mask;
    ms.seed = cfg.seed;
    const MetricsReport rep = evaluate(gen, data, ms, cfg.out_dir, opts);
    std::cout << "samples " << rep.rows.size() << "  psnr " << rep.aggregate.psnr << "  ssim "
              << rep.aggregate.ssim << "  hole_psnr " << rep.aggregate.hole_psnr;
    if (rep.has_miou)
        std::cout << "  miou " << rep.aggregate.miou << "  hole_miou " << rep.aggregate.hole_miou;
    std::cout << "\nreport in " << cfg.out_dir << "\n";
    return 0;
}

} // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"coherence-prior inpainting: synthetic data, training, inference, evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON config file")->expected(1);
    app.add_option("--set", overrides, "dotted-path overrides, e.g. train.iterations=100");

    auto* synth = app.add_subcommand("make-synth", "generate a synthetic dataset");
    int synth_count = -1, synth_k = -1, synth_size = -1;
    std::int64_t seed_flag = -1;
    std::string out_flag, layout_flag;
    synth->add_option("--count", synth_count, "number of scenes");
    synth->add_option("--seed", seed_flag, "root seed");
    synth->add_option("--out", out_flag, "output directory");
    synth->add_option("--k", synth_k, "class count");
    synth->add_option("--size", synth_size, "square scene size");
    synth->add_option("--layout", layout_flag, "bands or voronoi");

    auto* masks = app.add_subcommand("make-masks", "generate masks from the mask spec");
    int mask_count = 10, mask_size = -1;
    std::string mask_mode;
    masks->add_option("--count", mask_count, "number of masks");
    masks->add_option("--seed", seed_flag, "root seed");
    masks->add_option("--out", out_flag, "output directory");
    masks->add_option("--size", mask_size, "mask size");
    masks->add_option("--mode", mask_mode, "center or irregular");

    auto* train = app.add_subcommand("train", "train a model");
    auto* infer = app.add_subcommand("infer", "run a checkpoint on a dataset");
    std::string ckpt_flag, data_flag;
    infer->add_option("--checkpoint", ckpt_flag, "checkpoint directory");
    infer->add_option("--data", data_flag, "dataset root");
    infer->add_option("--out", out_flag, "output directory");
    bool dump_attention = false;
    infer->add_flag("--dump-attention", dump_attention, "write attention JSONL diagnostics");
    auto* evalc = app.add_subcommand("eval", "compute metrics for a checkpoint");
    evalc->add_option("--checkpoint", ckpt_flag, "checkpoint directory");
    evalc->add_option("--data", data_flag, "dataset root");
    evalc->add_option("--out", out_flag, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (train->parsed() && config_path.empty() && overrides.empty()) {
            std::cerr << "usage error: train requires --config (or --set overrides).\n"
                      << "expected config schema:\n"
                      << config_schema_text() << "\n";
            return 1;
        }
        RunConfig cfg = load_run_config(config_path, overrides);
        if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
        if (!out_flag.empty()) cfg.out_dir = out_flag;
        if (synth_count >= 0) cfg.synth.count = synth_count;
        if (synth_k >= 0) cfg.synth.k = synth_k;
        if (synth_size >= 0) {
            cfg.synth.height = synth_size;
            cfg.synth.width = synth_size;
        }
        if (!layout_flag.empty()) cfg.synth.layout = layout_flag;
        if (mask_size > 0) {
            cfg.synth.height = mask_size;
            cfg.synth.width = mask_size;
        }
        if (!mask_mode.empty())
            cfg.mask.mode = mask_mode == "center" ? MaskMode::center : MaskMode::irregular;
        if (!ckpt_flag.empty()) {
            cfg.infer.checkpoint = ckpt_flag;
            cfg.eval.checkpoint = ckpt_flag;
        }
        if (!data_flag.empty()) cfg.dataset.root = data_flag;
        if (dump_attention) cfg.infer.dump_attention = true;

        if (synth->parsed()) return cli_detail::cmd_make_synth(cfg);
        if (masks->parsed()) return cli_detail::cmd_make_masks(cfg, mask_count);
        if (train->parsed()) return cli_detail::cmd_train(cfg);
        if (infer->parsed()) return cli_detail::cmd_infer(cfg);
        if (evalc->parsed()) return cli_detail::cmd_eval(cfg);
        return 1;
    } catch (const config_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace cohpaint

// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit code = number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "cohpaint/cli.hpp"
#include "cohpaint/eval.hpp"
#include "cohpaint/swap_oracle.hpp"

using namespace cohpaint;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%d] %-34s %s  %s\n", criterion, name.c_str(), pass ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Instance {
    Tensor<double> f;
    Tensor<int> labels;
    Tensor<std::uint8_t> known;
};

// Randomized attention instance: voronoi-style labels, rectangle-union mask
// with 10-50% missing area.
Instance make_instance(std::uint64_t seed, int h, int w, int c, int k) {
    Rng rng(seed);
    Instance ins;
    ins.f = Tensor<double>({c, h, w});
    for (long i = 0; i < ins.f.numel(); ++i) ins.f[i] = rng.uniform(-1.0, 1.0);
    ins.labels = Tensor<int>({h, w});
    const int sites = 2 * k;
    std::vector<double> sy(sites), sx(sites);
    for (int i = 0; i < sites; ++i) {
        sy[i] = rng.uniform(0.0, h);
        sx[i] = rng.uniform(0.0, w);
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double best = 1e30;
            int bi = 0;
            for (int i = 0; i < sites; ++i) {
                const double dy = y - sy[i], dx = x - sx[i];
                if (dy * dy + dx * dx < best) {
                    best = dy * dy + dx * dx;
                    bi = i;
                }
            }
            ins.labels.at(y, x) = bi % k;
        }
    ins.known = Tensor<std::uint8_t>({h, w});
    for (long i = 0; i < ins.known.numel(); ++i) ins.known[i] = 1;
    const long lo = static_cast<long>(0.10 * h * w), hi = static_cast<long>(0.50 * h * w);
    long missing = 0;
    int guard = 0;
    while (missing < lo && guard++ < 100) {
        const int rh = 2 + rng.uniform_int(h / 2), rw = 2 + rng.uniform_int(w / 2);
        const int y0 = rng.uniform_int(h - rh + 1), x0 = rng.uniform_int(w - rw + 1);
        for (int y = y0; y < y0 + rh && missing < hi; ++y)
            for (int x = x0; x < x0 + rw && missing < hi; ++x)
                if (ins.known.at(y, x)) {
                    ins.known.at(y, x) = 0;
                    ++missing;
                }
    }
    return ins;
}

struct SmokeResult {
    bool ok = false;
    double hole_psnr_untrained = 0;
    double hole_psnr = 0;
    double hole_miou = 0;
    bool params_finite = false;
    double minutes = 0;
};

// Criterion 5/6 shared runner: train on the 500-scene mosaic set and
// evaluate hole metrics on the 50-scene held-out set.
SmokeResult run_smoke(const fs::path& work, const std::string& tag, AttentionMode mode,
                      const std::string& train_data, const std::string& val_data) {
    SmokeResult res;
    TrainConfig cfg;
    cfg.iterations = 2000;
    cfg.batch_size = 8;
    cfg.data_root = train_data;
    cfg.out_dir = (work / ("run_" + tag)).string();
    cfg.model.k = 4;
    cfg.model.base_channels = 8;
    cfg.model.attention_mode = mode;
    cfg.disc_base_channels = 8;
    cfg.mask.mode = MaskMode::center;
    cfg.mask.center_fraction = 0.5;
    cfg.seed = 2024;
    cfg.checkpoint_interval = 1000;
    cfg.log_interval = 500;

    Dataset val = Dataset::open(val_data, Split::val);
    MaskSpec eval_mask;
    eval_mask.mode = MaskMode::center;
    eval_mask.center_fraction = 0.5;

    const auto t0 = std::chrono::steady_clock::now();
    Trainer trainer(cfg);
    const MetricsReport rep0 =
        evaluate(trainer.generator(), val, eval_mask, (work / ("eval0_" + tag)).string());
    res.hole_psnr_untrained = rep0.aggregate.hole_psnr;

    const char* cache = std::getenv("COHPAINT_ACCEPT_CACHE");
    const fs::path final_ckpt = fs::path(cfg.out_dir) / "ckpt" / "2000";
    if (cache && std::string(cache) == "1" && fs::exists(final_ckpt / "manifest.json")) {
        trainer.load_checkpoint(final_ckpt.string());
    } else {
        trainer.fit();
    }
    res.minutes = elapsed_s(t0) / 60.0;
    res.params_finite = trainer.generator().params().all_finite();

    const MetricsReport rep =
        evaluate(trainer.generator(), val, eval_mask, (work / ("eval_" + tag)).string());
    res.hole_psnr = rep.aggregate.hole_psnr;
    res.hole_miou = rep.aggregate.hole_miou;
    res.ok = true;
    return res;
}

char buf[512];

} // namespace

// ---------------------------------------------------------------------------

static void criteria_1_and_2() {
    const auto t0 = std::chrono::steady_clock::now();
    AttentionConfig cfg;
    cfg.record = true;

    double worst_dev = 0.0;
    double worst_row = 0.0;
    double cross_mass = 0.0;
    int retrieval_checked = 0, retrieval_correct = 0;
    bool shapes_ok = true;

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng pick(derive_seed(99, "accept1", seed));
        const int h = 8 + pick.uniform_int(9);  // 8..16
        const int w = 8 + pick.uniform_int(9);
        const int c = 4 + pick.uniform_int(5);  // 4..8 channels
        const int k = 2 + pick.uniform_int(3);  // 2..4 classes
        Instance ins = make_instance(derive_seed(7, "inst", seed), h, w, c, k);

        Tape<double> t;
        auto [upd, recs] = semantic_attention(t, t.input(ins.f), ins.labels, ins.known, cfg);
        const Tensor<double> oracle = swap_oracle(ins.f, ins.labels, ins.known, cfg);
        shapes_ok = shapes_ok && t.val(upd).same_shape(oracle);
        worst_dev = std::max(worst_dev, max_abs_diff(t.val(upd), oracle));

        for (const AttentionRecord& r : *recs) {
            double sum = 0;
            for (float wv : r.weights) sum += wv;
            worst_row = std::max(worst_row, std::abs(sum - 1.0));
            if (!r.fallback)
                for (std::size_t i = 0; i < r.ref_index.size(); ++i)
                    if (ins.labels[r.ref_index[i]] != r.cls) cross_mass += r.weights[i];
        }

        // retrieval correctness: plant an exact same-class match where the
        // instance allows it
        const PatchIndex idx = build_patch_index(ins.labels, ins.known, k, cfg.patch_size);
        const int r = cfg.patch_size / 2;
        int qpos = -1, qcls = -1, target = -1;
        for (int cls = 0; cls < k && qpos < 0; ++cls) {
            if (idx.known_by_class[cls].size() < 2) continue;
            for (int pos : idx.missing_by_class[cls]) {
                const int y = pos / w, x = pos % w;
                if (y < r || y >= h - r || x < r || x >= w - r) continue;
                bool all_missing = true;
                for (int dy = -r; dy <= r && all_missing; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        if (ins.known.at(y + dy, x + dx)) {
                            all_missing = false;
                            break;
                        }
                if (!all_missing) continue;
                for (int kp : idx.known_by_class[cls]) {
                    const int ky = kp / w, kx = kp % w;
                    if (ky >= r && ky < h - r && kx >= r && kx < w - r) {
                        qpos = pos;
                        qcls = cls;
                        target = kp;
                        break;
                    }
                }
                if (qpos >= 0) break;
            }
        }
        if (qpos >= 0) {
            Tensor<double> planted = ins.f;
            for (int ch = 0; ch < c; ++ch)
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        planted.at(ch, qpos / w + dy, qpos % w + dx) =
                            planted.at(ch, target / w + dy, target % w + dx);
            Tape<double> t2;
            auto [u2, recs2] = semantic_attention(t2, t2.input(planted), ins.labels, ins.known, cfg);
            for (const AttentionRecord& rec : *recs2) {
                if (rec.center_y * w + rec.center_x != qpos || rec.cls != qcls) continue;
                std::size_t best = 0;
                for (std::size_t i = 1; i < rec.weights.size(); ++i)
                    if (rec.weights[i] > rec.weights[best]) best = i;
                ++retrieval_checked;
                if (rec.ref_index[best] == target) ++retrieval_correct;
            }
        }
    }

    const double secs = elapsed_s(t0);
    std::snprintf(buf, sizeof(buf), "(max dev %.2e over 50 instances, %.1fs)", worst_dev, secs);
    report(1, "SWAP oracle equivalence", shapes_ok && worst_dev < 1e-5 && secs < 60.0, buf);

    std::snprintf(buf, sizeof(buf),
                  "(row-sum dev %.2e, cross-class mass %.1f, retrieval %d/%d planted)", worst_row,
                  cross_mass, retrieval_correct, retrieval_checked);
    report(2, "attention algebra",
           worst_row < 1e-6 && cross_mass == 0.0 && retrieval_checked >= 25 &&
               retrieval_correct == retrieval_checked,
           buf);
}

static void criterion_3() {
    bool ok = true;
    std::string why;

    const auto w = attention_weights<double>({0.0, std::log(3.0)});
    if (std::abs(w[0] - 0.25) > 1e-12 || std::abs(w[1] - 0.75) > 1e-12) {
        ok = false;
        why += "softmax fixture; ";
    }

    // structure coherence objective at D == 0.5 (value before negation)
    {
        Rng rng(5);
        Tensor<double> img({3, 16, 16}), fimg({3, 16, 16});
        for (long i = 0; i < img.numel(); ++i) {
            img[i] = rng.uniform();
            fimg[i] = rng.uniform();
        }
        Tensor<int> labels({16, 16});
        for (long i = 0; i < labels.numel(); ++i) labels[i] = rng.uniform_int(3);
        const Tensor<double> onehot = one_hot<double>(labels, 3);
        Tensor<double> fseg({3, 16, 16}, 1.0 / 3);
        auto half = [](Tape<double>& t, VarId) {
            return t.constant(Tensor<double>({1, 2, 2}, 0.5));
        };
        Tape<double> t;
        const double dl =
            t.val(structure_coherence_d_loss(t, half, half, img, onehot, fimg, fseg))[0];
        if (std::abs(-dl - 4.0 * std::log(0.5)) > 1e-9) {
            ok = false;
            why += "sco at 0.5; ";
        }
    }

    // uniform cross entropy, k=4, 5 scales
    {
        Tensor<int> labels({16, 16});
        Rng rng(6);
        for (long i = 0; i < labels.numel(); ++i) labels[i] = rng.uniform_int(4);
        Tape<double> t;
        std::vector<VarId> segs;
        for (int l = 1; l <= 5; ++l) {
            const int sz = 16 >> (5 - l);
            segs.push_back(t.constant(Tensor<double>({4, sz, sz}, 0.25)));
        }
        if (std::abs(t.val(cross_entropy_loss(t, segs, labels))[0] - 5.0 * std::log(4.0)) > 1e-9) {
            ok = false;
            why += "uniform xe; ";
        }
    }

    // Eq.-12 composition with unit components at default weights
    {
        Tape<double> t;
        auto s = [&](double v) { return t.constant(Tensor<double>::scalar(v)); };
        LossWeights lw;
        if (std::abs(t.val(total_loss(t, s(1), s(1), s(1), s(1), s(1), lw))[0] - 2.4) > 1e-12) {
            ok = false;
            why += "total composition; ";
        }
    }

    std::snprintf(buf, sizeof(buf), "(softmax 1e-12, sco 1e-9, xe 1e-9, total 1e-12)%s%s",
                  why.empty() ? "" : " failed: ", why.c_str());
    report(3, "analytic loss fixtures", ok, buf);
}

static void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    Rng seeder(42);

    auto fd_check = [&](auto&& loss_fn, Tensor<double> x, std::uint64_t seed) {
        // analytic gradient
        Tape<double> t;
        VarId xi = t.input(x, true);
        t.backward(loss_fn(t, xi));
        const Tensor<double> analytic = t.grad(xi);
        // central differences over a 10-element slice, h = 1e-4
        Rng rng(seed);
        const double h = 1e-4;
        for (int s = 0; s < 10; ++s) {
            const long i = rng.uniform_int(static_cast<int>(x.numel()));
            const double orig = x[i];
            x[i] = orig + h;
            Tape<double> tp;
            const double fp = tp.val(loss_fn(tp, tp.input(x, false)))[0];
            x[i] = orig - h;
            Tape<double> tm;
            const double fm = tm.val(loss_fn(tm, tm.input(x, false)))[0];
            x[i] = orig;
            const double num = (fp - fm) / (2 * h);
            const double rel =
                std::abs(analytic[i] - num) / std::max({std::abs(analytic[i]), std::abs(num), 1e-3});
            worst = std::max(worst, rel);
        }
    };

    for (int inst = 0; inst < 10; ++inst) {
        Rng rng(derive_seed(1000, "gc", static_cast<std::uint64_t>(inst)));
        const int h = 16, w = 16, k = 3;
        auto rnd = [&rng](std::vector<int> shape, double lo, double hi) {
            Tensor<double> t(std::move(shape));
            for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
            return t;
        };
        const Tensor<double> target = rnd({3, h, w}, 0.0, 1.0);
        Tensor<int> labels({h, w});
        for (long i = 0; i < labels.numel(); ++i) labels[i] = rng.uniform_int(k);
        const Tensor<double> onehot = one_hot<double>(labels, k);

        // reconstruction w.r.t. the scale-3 prediction
        fd_check(
            [&](Tape<double>& t, VarId x) {
                std::vector<VarId> preds;
                for (int l = 1; l <= 5; ++l) {
                    const int sz = h >> (5 - l);
                    preds.push_back(l == 3 ? x : t.constant(Tensor<double>({3, sz, sz}, 0.4)));
                }
                return reconstruction_loss(t, preds, target);
            },
            rnd({3, 4, 4}, 0.0, 1.0), seeder.next_u64());

        // cross entropy w.r.t. the finest probability map
        fd_check(
            [&](Tape<double>& t, VarId x) {
                std::vector<VarId> segs;
                for (int l = 1; l <= 5; ++l) {
                    const int sz = h >> (5 - l);
                    segs.push_back(l == 5 ? x
                                          : t.constant(Tensor<double>({k, sz, sz}, 1.0 / k)));
                }
                return cross_entropy_loss(t, segs, labels);
            },
            rnd({k, h, w}, 0.05, 1.0), seeder.next_u64());

        // adversarial generator loss w.r.t. the fake image
        PatchDiscriminator<double> d("d", 3, 8);
        d.init_params(derive_seed(2000, "d", static_cast<std::uint64_t>(inst)));
        fd_check(
            [&](Tape<double>& t, VarId x) {
                auto leaves = d.bind(t, false);
                auto apply = [&](Tape<double>& tt, VarId v) { return d.forward(tt, leaves, v); };
                return adversarial_g_loss(t, apply, x);
            },
            rnd({3, h, w}, 0.05, 0.95), seeder.next_u64());

        // structure coherence generator loss w.r.t. the fake image
        PatchDiscriminator<double> ds("ds", 3 + k, 8), dt("dt", k + 3, 8);
        ds.init_params(derive_seed(3000, "ds", static_cast<std::uint64_t>(inst)));
        dt.init_params(derive_seed(3001, "dt", static_cast<std::uint64_t>(inst)));
        const Tensor<double> fseg = rnd({k, h, w}, 0.1, 0.9);
        fd_check(
            [&](Tape<double>& t, VarId x) {
                auto dsl = ds.bind(t, false);
                auto dtl = dt.bind(t, false);
                return structure_coherence_g_loss(
                    t, [&](Tape<double>& tt, VarId v) { return ds.forward(tt, dsl, v); },
                    [&](Tape<double>& tt, VarId v) { return dt.forward(tt, dtl, v); }, target,
                    onehot, x, t.constant(fseg));
            },
            rnd({3, h, w}, 0.05, 0.95), seeder.next_u64());

        // non-local patch coherence (default variant) w.r.t. the prediction
        const int hh = 32, ww = 32;
        Tensor<int> big_labels({hh, ww});
        for (int y = 0; y < hh; ++y)
            for (int x = 0; x < ww; ++x) big_labels.at(y, x) = y < hh / 2 ? 0 : 1;
        Tensor<double> mask({hh, ww}, 1.0);
        const Tensor<double> big_real = rnd({3, hh, ww}, 0.0, 1.0);
        CoherenceConfig cc;
        cc.seed = inst;
        fd_check(
            [&](Tape<double>& t, VarId x) {
                return nonlocal_coherence_loss(t, x, big_real, big_labels, big_labels, mask, cc);
            },
            rnd({3, hh, ww}, 0.0, 1.0), seeder.next_u64());
    }

    const double secs = elapsed_s(t0);
    std::snprintf(buf, sizeof(buf), "(worst rel err %.2e over 5 losses x 10 instances, %.1fs)",
                  worst, secs);
    report(4, "loss gradient checks", worst < 1e-4 && secs < 300.0, buf);
}

static SmokeResult criterion_5(const fs::path& work, const std::string& train_data,
                               const std::string& val_data) {
    const SmokeResult res =
        run_smoke(work, "full", AttentionMode::semantic, train_data, val_data);
    const double gain = res.hole_psnr - res.hole_psnr_untrained;
    std::snprintf(buf, sizeof(buf),
                  "(hole PSNR %.2f -> %.2f dB, gain %.2f >= 3; hole mIoU %.3f >= 0.5; finite=%s; "
                  "%.0f min)",
                  res.hole_psnr_untrained, res.hole_psnr, gain, res.hole_miou,
                  res.params_finite ? "yes" : "no", res.minutes);
    report(5, "desk-scale training smoke",
           res.ok && gain >= 3.0 && res.hole_miou >= 0.5 && res.params_finite, buf);
    return res;
}

static void criterion_6(const fs::path& work, const SmokeResult& full,
                        const std::string& train_data, const std::string& val_data) {
    const SmokeResult abl =
        run_smoke(work, "ablated", AttentionMode::class_agnostic, train_data, val_data);
    std::snprintf(buf, sizeof(buf), "(full %.2f dB >= class-agnostic %.2f dB; %.0f min)",
                  full.hole_psnr, abl.hole_psnr, abl.minutes);
    report(6, "ablation direction", abl.ok && full.hole_psnr >= abl.hole_psnr, buf);
}

static void criterion_7(const fs::path& work) {
    bool ok = true;
    std::string why;

    // tiny but complete training setup
    const std::string data = (work / "tiny_data").string();
    if (!fs::exists(fs::path(data) / "dataset.json")) {
        SceneSpec spec;
        spec.k = 2;
        spec.height = spec.width = 32;
        spec.layout = LayoutKind::voronoi;
        write_synth_dataset(data, spec, 10, 31);
    }
    auto tiny = [&](const std::string& tag, int iters) {
        TrainConfig cfg;
        cfg.iterations = iters;
        cfg.batch_size = 2;
        cfg.data_root = data;
        cfg.out_dir = (work / ("tiny_" + tag)).string();
        cfg.model.k = 2;
        cfg.model.base_channels = 8;
        cfg.disc_base_channels = 8;
        cfg.mask.mode = MaskMode::center;
        cfg.seed = 7;
        cfg.checkpoint_interval = 1000;
        cfg.log_interval = 1000;
        return cfg;
    };

    // fixed-seed reproducibility of the loss log
    {
        Trainer a(tiny("det_a", 5)), b(tiny("det_b", 5));
        const auto ra = a.fit(), rb = b.fit();
        for (std::size_t i = 0; i < ra.log.size(); ++i)
            if (ra.log[i].total != rb.log[i].total || ra.log[i].adv_d != rb.log[i].adv_d) {
                ok = false;
                why += "loss log mismatch; ";
                break;
            }
    }

    // checkpoint roundtrip probe
    double probe_dev = 0.0;
    {
        Trainer t(tiny("probe", 3));
        t.fit();
        const std::string ckpt = t.save_checkpoint();
        const Sample s = Dataset::open(data, Split::val).get(0);
        const Tensor<float> mask = center_mask(32, 32, 0.5);
        const auto before = t.generator().predict(s.image, mask);
        Generator<float> loaded = load_generator(ckpt);
        const auto after = loaded.predict(s.image, mask);
        probe_dev = std::max(max_abs_diff(before.image, after.image),
                             max_abs_diff(before.seg_probs, after.seg_probs));
        if (probe_dev >= 1e-7) {
            ok = false;
            why += "roundtrip; ";
        }
    }

    // resume equivalence over 20 iterations
    {
        Trainer straight(tiny("straight", 20));
        const auto full = straight.fit();
        Trainer half(tiny("halves", 10));
        const auto first = half.fit();
        auto cfg2 = tiny("halves", 20);
        Trainer rest(cfg2);
        const auto second = rest.fit(first.final_checkpoint);
        if (full.log.size() != first.log.size() + second.log.size()) {
            ok = false;
            why += "resume length; ";
        } else {
            for (std::size_t i = 0; i < second.log.size(); ++i)
                if (full.log[10 + i].total != second.log[i].total) {
                    ok = false;
                    why += "resume divergence; ";
                    break;
                }
        }
    }

    std::snprintf(buf, sizeof(buf), "(identical logs, roundtrip dev %.1e < 1e-7, resume over 20)%s%s",
                  probe_dev, why.empty() ? "" : " failed: ", why.c_str());
    report(7, "determinism and persistence", ok, buf);
}

static void criterion_8() {
    bool ok = true;
    std::string why;

    Rng rng(17);
    Tensor<float> img({3, 16, 16});
    for (long i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform());
    if (compute_psnr(img, img) != 100.0) {
        ok = false;
        why += "psnr cap; ";
    }
    if (std::abs(compute_ssim(img, img) - 1.0) > 1e-12) {
        ok = false;
        why += "ssim identical; ";
    }
    Tensor<int> lbl({8, 8});
    for (long i = 0; i < lbl.numel(); ++i) lbl[i] = static_cast<int>(i % 3);
    if (compute_miou(lbl, lbl, 3) != 1.0) {
        ok = false;
        why += "miou identical; ";
    }
    Tensor<int> a({8, 8}), b({8, 8});
    for (long i = 0; i < 64; ++i) {
        a[i] = 0;
        b[i] = 1;
    }
    if (compute_miou(a, b, 2) != 0.0) {
        ok = false;
        why += "miou disjoint; ";
    }
    // the derived fixture: uniform error of 16/255
    Tensor<float> base({3, 16, 16}, 0.25f), off({3, 16, 16}, 0.25f + 16.0f / 255.0f);
    const double expect = 20.0 * std::log10(255.0 / 16.0);
    if (std::abs(compute_psnr(base, off) - expect) > 1e-6) {
        ok = false;
        why += "psnr 16/255; ";
    }

    std::snprintf(buf, sizeof(buf), "(caps, disjoint, %.4f dB fixture)%s%s", expect,
                  why.empty() ? "" : " failed: ", why.c_str());
    report(8, "metric sanity", ok, buf);
}

int main() {
    std::printf("acceptance suite\n----------------\n");
    const fs::path work = fs::temp_directory_path() / "cohpaint_acceptance";
    fs::create_directories(work);

    criteria_1_and_2();
    criterion_3();
    criterion_4();

    // shared datasets for the training criteria
    const std::string train_data = (work / "mosaic_train").string();
    const std::string val_data = (work / "mosaic_val").string();
    SceneSpec spec;
    spec.k = 4;
    spec.height = spec.width = 64;
    spec.layout = LayoutKind::voronoi;
    if (!fs::exists(fs::path(train_data) / "dataset.json"))
        write_synth_dataset(train_data, spec, 500, 9000);
    if (!fs::exists(fs::path(val_data) / "dataset.json"))
        write_synth_dataset(val_data, spec, 50, 9500);

    const SmokeResult full = criterion_5(work, train_data, val_data);
    criterion_6(work, full, train_data, val_data);
    criterion_7(work);
    criterion_8();

    std::printf("----------------\n%s (%d failed)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
                g_failures);
    return g_failures;
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "cohpaint/cli.hpp"

using namespace cohpaint;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("cohpaint_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(std::initializer_list<std::string> args) {
    std::vector<std::string> owned{"cohpaint"};
    owned.insert(owned.end(), args);
    std::vector<const char*> argv;
    for (const auto& a : owned) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

bool same_file_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return !sa.empty() && sa == sb;
}

std::string small_train_config(const fs::path& dir, const std::string& data_root,
                               const std::string& out_dir, int iterations) {
    nlohmann::json j;
    j["seed"] = 3;
    j["out_dir"] = out_dir;
    j["dataset"]["root"] = data_root;
    j["model"]["k"] = 2;
    j["model"]["base_channels"] = 8;
    j["train"]["iterations"] = iterations;
    j["train"]["batch_size"] = 2;
    j["train"]["disc_base_channels"] = 8;
    j["train"]["checkpoint_interval"] = 100;
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p.string();
}

} // namespace

TEST_CASE("make-synth is byte-identical across runs with the same seed") {
    const fs::path d1 = temp_dir("synth1"), d2 = temp_dir("synth2");
    REQUIRE(run({"make-synth", "--count", "3", "--seed", "7", "--size", "32", "--out",
                 d1.string()}) == 0);
    REQUIRE(run({"make-synth", "--count", "3", "--seed", "7", "--size", "32", "--out",
                 d2.string()}) == 0);
    for (const char* rel : {"images/scene_00000.png", "images/scene_00002.png",
                            "labels/scene_00001.png", "dataset.json"})
        CHECK(same_file_bytes(d1 / rel, d2 / rel));
    CHECK(fs::exists(d1 / "config.resolved.json"));
}

TEST_CASE("make-masks writes the requested number of masks") {
    const fs::path out = temp_dir("masks");
    REQUIRE(run({"make-masks", "--count", "4", "--size", "64", "--mode", "irregular", "--seed",
                 "5", "--out", out.string()}) == 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(out / "masks")) {
        CHECK(e.path().extension() == ".png");
        ++files;
    }
    CHECK(files == 4);
}

TEST_CASE("train with zero iterations exits 0 and leaves an initial checkpoint") {
    const fs::path base = temp_dir("train0");
    const fs::path data = base / "data";
    REQUIRE(run({"make-synth", "--count", "4", "--seed", "11", "--size", "32", "--k", "2", "--out",
                 data.string()}) == 0);
    const std::string cfg = small_train_config(base, data.string(), (base / "run").string(), 0);
    REQUIRE(run({"--config", cfg, "train"}) == 0);
    CHECK(fs::exists(base / "run" / "ckpt" / "0" / "manifest.json"));
    CHECK(fs::exists(base / "run" / "config.resolved.json"));
}

TEST_CASE("train without a config is a usage error") {
    CHECK(run({"train"}) == 1);
}

TEST_CASE("unknown config keys are rejected as usage errors") {
    const fs::path base = temp_dir("badkey");
    const fs::path p = base / "bad.json";
    std::ofstream(p) << R"({"trian": {"iterations": 1}})";
    CHECK(run({"--config", p.string(), "train"}) == 1);
}

TEST_CASE("bad override paths and unknown subcommands fail usage") {
    CHECK(run({"--set", "nonexistent.key=1", "make-synth", "--count", "1", "--out",
               temp_dir("ov").string()}) == 1);
    CHECK(run({"frobnicate"}) == 1);
}

TEST_CASE("full pipeline: synth, train, infer, eval, k-mismatch") {
    const fs::path base = temp_dir("pipeline");
    const fs::path data = base / "data";
    REQUIRE(run({"make-synth", "--count", "4", "--seed", "13", "--size", "32", "--k", "2", "--out",
                 data.string()}) == 0);

    const std::string cfg = small_train_config(base, data.string(), (base / "run").string(), 2);
    REQUIRE(run({"--config", cfg, "train"}) == 0);
    const std::string ckpt = (base / "run" / "ckpt" / "2").string();
    REQUIRE(fs::exists(fs::path(ckpt) / "manifest.json"));

    SECTION("infer writes outputs, segmentations and attention diagnostics") {
        const fs::path out = base / "infer";
        REQUIRE(run({"--set", "seed=9", "infer", "--checkpoint", ckpt, "--data", data.string(),
                     "--out", out.string(), "--dump-attention"}) == 0);
        CHECK(fs::exists(out / "scene_00000_output.png"));
        CHECK(fs::exists(out / "scene_00000_seg.png"));
        CHECK(fs::exists(out / "scene_00000_attention.jsonl"));
        // attention lines are valid json with top-5 entries
        std::ifstream jl(out / "scene_00000_attention.jsonl");
        std::string line;
        REQUIRE(std::getline(jl, line));
        const auto row = nlohmann::json::parse(line);
        CHECK(row.contains("scale"));
        CHECK(row["top"].size() <= 5);
    }

    SECTION("eval emits a report") {
        const fs::path out = base / "eval";
        REQUIRE(run({"eval", "--checkpoint", ckpt, "--data", data.string(), "--out",
                     out.string()}) == 0);
        CHECK(fs::exists(out / "report.csv"));
        CHECK(fs::exists(out / "report.json"));
    }

    SECTION("eval against a dataset with more classes exits 2") {
        const fs::path data8 = base / "data8";
        REQUIRE(run({"make-synth", "--count", "2", "--seed", "17", "--size", "32", "--k", "8",
                     "--layout", "voronoi", "--out", data8.string()}) == 0);
        CHECK(run({"eval", "--checkpoint", ckpt, "--data", data8.string(), "--out",
                   (base / "eval8").string()}) == 2);
    }

    SECTION("missing checkpoint exits 2") {
        CHECK(run({"eval", "--checkpoint", (base / "nope").string(), "--data", data.string(),
                   "--out", (base / "evalx").string()}) == 2);
    }
}

TEST_CASE("overrides reach the training config") {
    const fs::path base = temp_dir("override");
    const fs::path data = base / "data";
    REQUIRE(run({"make-synth", "--count", "3", "--seed", "19", "--size", "32", "--k", "2", "--out",
                 data.string()}) == 0);
    const std::string cfg = small_train_config(base, data.string(), (base / "run").string(), 5);
    REQUIRE(run({"--config", cfg, "--set", "train.iterations=1", "train"}) == 0);
    // resolved config records the override and only ckpt/1 exists
    std::ifstream f(base / "run" / "config.resolved.json");
    nlohmann::json resolved;
    f >> resolved;
    CHECK(resolved["train"]["iterations"] == 1);
    CHECK(fs::exists(base / "run" / "ckpt" / "1"));
    CHECK_FALSE(fs::exists(base / "run" / "ckpt" / "5"));
}

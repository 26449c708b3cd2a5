/*
 * Copyright 2026 The hdrforge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hdrforge/checkpoint.hpp"
#include "hdrforge/cli.hpp"
#include "hdrforge/dataset.hpp"
#include "hdrforge/image_io.hpp"
#include "hdrforge/patch_store.hpp"
#include "hdrforge/train.hpp"

using namespace hdrforge;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path workspace()
{
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "hdrforge_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string p(const fs::path& rel)
{
    return (workspace() / rel).string();
}

// count following "<label> " on its own line
long count_of(const std::string& text, const std::string& label)
{
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(label + " ", 0) == 0)
            return std::stol(line.substr(label.size() + 1));
    return -1;
}

// a two-scene dataset (one train, one test) plus a small store, built once
void ensure_dataset()
{
    static bool done = false;
    if (done)
        return;
    REQUIRE(run({"synth", "--out", p("data"), "--scenes", "2", "--test", "1", "--width", "320", "--height", "256",
                 "--jitter", "2", "--seed", "5"})
                .code == 0);
    REQUIRE(run({"-q", "prepare", "--data", p("data"), "--split", p("data/split.json"), "--out", p("small.store"),
                 "--patch", "64", "--stride", "64", "--no-augment"})
                .code == 0);
    done = true;
}

std::vector<std::string> log_losses(const fs::path& path)
{
    std::ifstream in(path);
    std::string line;
    std::vector<std::string> rows;
    std::getline(in, line);
    while (std::getline(in, line))
        rows.push_back(line.substr(0, line.rfind(',')));
    return rows;
}

} // namespace

TEST_CASE("usage errors exit with 1, help with 0")
{
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"train"}).code == kExitUsage);
    const auto h = run({"--help"});
    CHECK(h.code == kExitOk);
    CHECK(h.out.find("merge") != std::string::npos);
}

TEST_CASE("prepare reports closed-form patch counts")
{
    ensure_dataset();
    const auto r = run({"-q", "prepare", "--data", p("data"), "--split", p("data/split.json"), "--out", p("aug.store"),
                        "--patch", "64", "--stride", "64"});
    REQUIRE(r.code == 0);
    CHECK(count_of(r.out, "scenes") == 1);
    CHECK(count_of(r.out, "raw patches") == 5 * 4);
    CHECK(count_of(r.out, "augmented patches") == 8 * 20);
    const long over = count_of(r.out, "oversampled patches");
    CHECK(over >= 160);
    CHECK(PatchStoreReader(p("aug.store")).size() == static_cast<std::size_t>(over));

    const auto plain = run({"-q", "prepare", "--data", p("data"), "--split", p("data/split.json"), "--out",
                            p("plain.store"), "--patch", "64", "--stride", "64", "--no-augment", "--no-align"});
    REQUIRE(plain.code == 0);
    CHECK(count_of(plain.out, "augmented patches") == count_of(plain.out, "raw patches"));

    const auto test_split = run({"-q", "prepare", "--data", p("data"), "--split", p("data/split.json"), "--out",
                                 p("test.store"), "--subset", "test", "--patch", "128", "--stride", "64"});
    CHECK(count_of(test_split.out, "raw patches") == 4 * 3);
}

TEST_CASE("prepare skips broken scenes and fails when nothing is left")
{
    ensure_dataset();
    fs::create_directories(workspace() / "broken");
    fs::copy(workspace() / "data/scene_000", workspace() / "broken/scene_000", fs::copy_options::recursive);
    fs::remove(workspace() / "broken/scene_000/exposures.txt");
    write_split(workspace() / "broken/split.json", SplitSpec{{"scene_000", "absent"}, {}});
    const auto r = run({"-q", "prepare", "--data", p("broken"), "--split", p("broken/split.json"), "--out",
                        p("broken.store"), "--patch", "64"});
    CHECK(r.code == kExitData);
    CHECK(count_of(r.out, "scenes") == 0);
}

TEST_CASE("train with zero iterations writes the initial weights")
{
    ensure_dataset();
    const auto r = run({"train", "--store", p("small.store"), "--out", p("init.ckpt"), "--iterations", "0",
                        "--width-divisor", "8", "--seed", "11"});
    REQUIRE(r.code == 0);
    TrainConfig cfg;
    cfg.width_divisor = 8;
    cfg.seed = 11;
    const Network<float> fresh(network_for(cfg, 64), cfg.seed);
    const auto ck = load_checkpoint(p("init.ckpt"));
    REQUIRE(ck.network.parameters().size() == fresh.parameters().size());
    for (std::size_t i = 0; i < fresh.parameters().size(); ++i)
        CHECK(ck.network.parameters()[i].value == fresh.parameters()[i].value);
}

TEST_CASE("resumed training reproduces the uninterrupted log")
{
    ensure_dataset();
    const std::vector<std::string> common{"--store", p("small.store"), "--width-divisor", "8", "--batch", "2",
                                          "--seed", "3", "--lr", "1e-3"};
    auto with = [&](std::vector<std::string> extra) {
        std::vector<std::string> a{"-q", "train"};
        a.insert(a.end(), common.begin(), common.end());
        a.insert(a.end(), extra.begin(), extra.end());
        return run(a);
    };
    REQUIRE(with({"--out", p("full.ckpt"), "--log", p("full.csv"), "--iterations", "6"}).code == 0);
    REQUIRE(with({"--out", p("half.ckpt"), "--log", p("split.csv"), "--iterations", "3"}).code == 0);
    REQUIRE(with({"--out", p("rest.ckpt"), "--log", p("split.csv"), "--iterations", "6", "--resume", p("half.ckpt")})
                .code == 0);
    const auto a = log_losses(workspace() / "full.csv"), b = log_losses(workspace() / "split.csv");
    CHECK(a.size() == 6);
    CHECK(a == b);
}

TEST_CASE("train rejects a corrupt store with exit code 2")
{
    ensure_dataset();
    fs::copy_file(workspace() / "small.store", workspace() / "cut.store", fs::copy_options::overwrite_existing);
    fs::resize_file(workspace() / "cut.store", fs::file_size(workspace() / "cut.store") - 100);
    const auto r = run({"train", "--store", p("cut.store"), "--out", p("never.ckpt"), "--iterations", "1"});
    CHECK(r.code == kExitData);
    CHECK(r.err.find("offset") != std::string::npos);
    CHECK(run({"train", "--store", p("small.store"), "--out", p("never.ckpt"), "--k", "2"}).code == kExitData);
    CHECK(run({"train", "--store", p("small.store"), "--out", p("never.ckpt"), "--lr", "-1"}).code == kExitUsage);
}

TEST_CASE("merge keeps the input size and honours the slot rules")
{
    ensure_dataset();
    REQUIRE(run({"-q", "train", "--store", p("small.store"), "--out", p("m.ckpt"), "--iterations", "0",
                 "--width-divisor", "8"})
                .code == 0);
    const auto scene = workspace() / "data/scene_001";
    std::vector<std::string> frames;
    for (int i = 1; i <= 3; ++i)
        frames.push_back((scene / ("input_" + std::to_string(i) + ".tif")).string());
    auto merge = [&](std::vector<std::string> fr, std::vector<std::string> extra) {
        std::vector<std::string> a{"-q", "merge"};
        a.insert(a.end(), fr.begin(), fr.end());
        a.insert(a.end(), {"--checkpoint", p("m.ckpt"), "--tile", "64", "--overlap", "16"});
        a.insert(a.end(), extra.begin(), extra.end());
        return run(a);
    };
    fs::create_directories(workspace() / "pred");
    const auto r = merge(frames, {"--exposures", (scene / "exposures.txt").string(), "--out", p("pred/scene_001.hdr"),
                                  "--tonemap", p("pred.png"), "--raw", p("pred.raw")});
    REQUIRE(r.code == 0);
    const Image hdr = read_raw_float(p("pred.raw"));
    CHECK(hdr.width() == 320);
    CHECK(hdr.height() == 256);
    CHECK(fs::exists(p("pred.png")));

    // low exposure as reference with the long frame missing: Low-Low-Medium
    CHECK(merge({frames[0], frames[1]}, {"--biases", "-2,0", "--reference", "0", "--out", p("llm.hdr")}).code == 0);
    CHECK(merge({frames[0], frames[1], frames[2], frames[2]}, {"--biases", "-2,0,2,2", "--out", p("x.hdr")}).code ==
          kExitUsage);
    CHECK(merge(frames, {"--biases", "-2,0", "--out", p("x.hdr")}).code == kExitUsage);

    write_ldr(workspace() / "small.png", Image(32, 32, 3, 0.5f), 8);
    CHECK(merge({frames[0], frames[1], p("small.png")}, {"--biases", "-2,0,2", "--out", p("x.hdr"), "--no-align"})
              .code == kExitData);
}

TEST_CASE("eval: perfect, noisy and averaged rows")
{
    ensure_dataset();
    const auto truth = workspace() / "truth";
    const auto pred = workspace() / "evalpred";
    fs::create_directories(truth);
    fs::create_directories(pred);
    const Image gt = read_rgbe(workspace() / "data/scene_001/gt.hdr");
    write_rgbe(truth / "a.hdr", gt);
    write_rgbe(truth / "b.hdr", gt);
    write_rgbe(pred / "a.hdr", gt);
    Image noisy = gt;
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 0.02f);
    for (float& v : noisy.data())
        v = std::clamp(v + n(rng), 0.0f, 1.0f);
    write_rgbe(pred / "b.hdr", noisy);
    write_rgbe(pred / "orphan.hdr", gt);

    const auto r = run({"-q", "eval", "--pred", pred.string(), "--truth", truth.string(), "--out", p("report.csv")});
    REQUIRE(r.code == 0);
    std::ifstream in(workspace() / "report.csv");
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "scene,psnr_t,ssim_t,psnr_l,ssim_l");
    std::map<std::string, std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string name, cell;
        std::getline(ls, name, ',');
        while (std::getline(ls, cell, ','))
            rows[name].push_back(std::stod(cell));
    }
    REQUIRE(rows.size() == 3);
    CHECK(rows["a"] == std::vector<double>{99, 1, 99, 1});
    for (int i = 0; i < 4; ++i) {
        CHECK(rows["b"][i] < rows["a"][i]);
        CHECK(rows["mean"][i] == doctest::Approx((rows["a"][i] + rows["b"][i]) / 2).epsilon(1e-9));
    }
    CHECK(run({"-q", "eval", "--pred", truth.string(), "--truth", (workspace() / "nothing").string()}).code ==
          kExitData);
}

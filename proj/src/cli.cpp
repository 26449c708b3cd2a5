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

#include "hdrforge/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "hdrforge/align.hpp"
#include "hdrforge/checkpoint.hpp"
#include "hdrforge/dataset.hpp"
#include "hdrforge/error.hpp"
#include "hdrforge/image_io.hpp"
#include "hdrforge/log.hpp"
#include "hdrforge/merge.hpp"
#include "hdrforge/metrics.hpp"
#include "hdrforge/patch_store.hpp"
#include "hdrforge/synthetic.hpp"
#include "hdrforge/train.hpp"

namespace fs = std::filesystem;

namespace hdrforge {

namespace {

struct PrepareArgs {
    fs::path data;
    fs::path split;
    fs::path out;
    std::string subset = "train";
    int patch = kDefaultPatchSize;
    int stride = kDefaultPatchStride;
    double gamma = kDefaultGamma;
    double motion_threshold = kDefaultMotionThreshold;
    int oversample = kDefaultOversampleFactor;
    fs::path crf;
    bool no_align = false;
    bool no_augment = false;
};

struct TrainArgs {
    fs::path store;
    fs::path out;
    fs::path config;
    fs::path log;
    fs::path resume;
    std::string variant;
    int k = 0;
    int width_divisor = 0;
    int batch = 0;
    double lr = 0;
    long long iterations = -1;
    long long seed = -1;
    double mu = 0;
    std::string loss;
    long long checkpoint_interval = -1;
};

struct MergeArgs {
    std::vector<fs::path> frames;
    fs::path checkpoint;
    fs::path out;
    fs::path exposures;
    std::vector<double> biases;
    int reference = -1;
    double gamma = kDefaultGamma;
    double mu = kDefaultMu;
    fs::path crf;
    fs::path homographies;
    fs::path tonemap;
    fs::path raw;
    bool no_align = false;
    int tile = 256;
    int overlap = 32;
};

struct EvalArgs {
    fs::path pred;
    fs::path truth;
    fs::path out;
    double mu = kDefaultMu;
};

struct SynthArgs {
    fs::path out;
    int scenes = 4;
    int test = 1;
    int width = 512;
    int height = 512;
    long long seed = 0;
    double jitter = 0;
    bool still = false;
};

LdrImage linearized(const LdrImage& f, const std::optional<CrfTable>& crf)
{
    return crf ? linearize(f, crf) : f;
}

std::optional<CrfTable> load_crf(const fs::path& p)
{
    if (p.empty())
        return std::nullopt;
    return read_crf_csv(p);
}

int cmd_prepare(const PrepareArgs& a, std::ostream& out)
{
    const SplitSpec split = read_split(a.split);
    const auto& names = a.subset == "test" ? split.test_scenes : split.train_scenes;
    const auto crf = load_crf(a.crf);
    PatchOptions po;
    po.size = a.patch;
    po.stride = a.stride;
    po.gamma = a.gamma;
    po.motion_threshold = a.motion_threshold;
    if (a.oversample < 1)
        throw ParameterError("--oversample must be >= 1");

    PatchStoreWriter writer(a.out);
    std::size_t scenes = 0, raw = 0, augmented = 0;
    for (const auto& name : names) {
        Scene scene;
        try {
            scene = load_scene(a.data / name);
        } catch (const DataError& e) {
            log_warning("skipping scene " + name + ": " + e.what());
            continue;
        }
        for (auto& f : scene.stack.frames)
            f = linearized(f, crf);
        if (!a.no_align) {
            AlignOptions ao;
            ao.gamma = a.gamma;
            auto report = align_stack(scene.stack, ao);
            for (const auto& w : report.warnings)
                log_warning(name + ": " + w);
            scene.stack = std::move(report.stack);
        }
        ++scenes;
        raw += for_each_patch(scene, po, [&](PatchRecord&& rec) {
            const auto variants = a.no_augment ? std::vector<PatchRecord>{std::move(rec)} : augment(rec);
            for (const auto& v : variants) {
                ++augmented;
                const int copies = v.motion_flag ? a.oversample : 1;
                for (int c = 0; c < copies; ++c)
                    writer.write(v);
            }
        });
        log_info("prepared " + name);
    }
    writer.close();
    out << "scenes " << scenes << "\n"
        << "raw patches " << raw << "\n"
        << "augmented patches " << augmented << "\n"
        << "oversampled patches " << writer.count() << "\n";
    if (writer.count() == 0) {
        log_warning("no patches produced");
        return kExitData;
    }
    return kExitOk;
}

int cmd_train(const TrainArgs& a, const CLI::App& app, std::ostream& out)
{
    TrainConfig cfg = a.config.empty() ? TrainConfig{} : read_train_config(a.config);
    auto given = [&](const char* name) { return app.count(name) > 0; };
    if (given("--variant"))
        cfg.variant = parse_variant(a.variant);
    if (given("--k"))
        cfg.k = a.k;
    if (given("--width-divisor"))
        cfg.width_divisor = a.width_divisor;
    if (given("--batch"))
        cfg.batch_size = a.batch;
    if (given("--lr"))
        cfg.learning_rate = a.lr;
    if (given("--iterations"))
        cfg.iterations = static_cast<std::uint64_t>(a.iterations);
    if (given("--seed"))
        cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (given("--mu"))
        cfg.mu = a.mu;
    if (given("--loss"))
        cfg.reduction = parse_loss_reduction(a.loss);
    if (given("--checkpoint-interval"))
        cfg.checkpoint_interval = static_cast<std::uint64_t>(a.checkpoint_interval);
    cfg.validate();

    PatchStoreReader reader(a.store);
    if (reader.size() == 0)
        throw DataError(a.store.string() + ": store holds no records");
    const PatchRecord first = reader.read(0);
    if (first.k != cfg.k)
        throw DataError("store records have k=" + std::to_string(first.k) + " but the config asks for k=" +
                        std::to_string(cfg.k));
    std::mutex lock;
    RecordSource source{reader.size(), [&](std::size_t i) {
                            std::lock_guard<std::mutex> g(lock);
                            return reader.read(i);
                        }};
    TrainRunOptions ro;
    ro.checkpoint = a.out;
    ro.log = a.log;
    if (!a.resume.empty())
        ro.resume_from = a.resume;
    ro.spec = network_for(cfg, first.size);
    ro.on_step = [](const TrainProgress& p) {
        if (p.iteration % 100 == 0)
            log_info("iteration " + std::to_string(p.iteration) + " loss " + std::to_string(p.loss));
    };
    const TrainResult r = run_training(cfg, source, ro);
    out << "records " << reader.size() << "\n"
        << "parameters " << r.network.parameter_count() << "\n"
        << "iterations " << cfg.iterations << "\n";
    if (!r.history.empty())
        out << "final loss " << std::setprecision(8) << r.history.back().loss << "\n";
    out << "checkpoint " << a.out.string() << "\n";
    return kExitOk;
}

int cmd_merge(const MergeArgs& a, std::ostream& out)
{
    if (a.frames.empty())
        throw ParameterError("no input frames given");
    std::vector<double> biases = a.biases;
    if (!a.exposures.empty())
        biases = read_exposures(a.exposures);
    if (biases.size() != a.frames.size())
        throw ParameterError(std::to_string(a.frames.size()) + " frames but " + std::to_string(biases.size()) +
                             " exposure biases; pass --exposures or --biases");
    const auto crf = load_crf(a.crf);

    std::vector<std::size_t> order(a.frames.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return biases[x] < biases[y]; });
    ExposureStack stack;
    for (std::size_t i : order)
        stack.frames.push_back(linearized(LdrImage{read_ldr(a.frames[i]), biases[i], 1.0}, crf));
    const int n = static_cast<int>(stack.size());
    stack.reference_index = a.reference >= 0 ? a.reference : n / 2;
    if (stack.reference_index >= n)
        throw ParameterError("--reference " + std::to_string(a.reference) + " out of range for " +
                             std::to_string(n) + " frames");
    normalize_exposure_times(stack);

    const Checkpoint ck = load_checkpoint(a.checkpoint);
    MergeOptions mo;
    mo.gamma = a.gamma;
    mo.align = !a.no_align;
    mo.alignment.gamma = a.gamma;
    mo.tiles = {a.tile, a.overlap};
    if (!a.homographies.empty()) {
        // sidecar rows follow the frame order given on the command line
        const auto rows = read_homographies(a.homographies);
        if (rows.size() != a.frames.size())
            throw DataError(a.homographies.string() + ": expected " + std::to_string(a.frames.size()) + " rows");
        std::vector<Homography> hs;
        for (std::size_t i : order)
            hs.push_back(Homography::from_array(rows[i]));
        mo.homographies = std::move(hs);
    }
    const MergeResult r = merge_stack(stack, ck.network, mo);
    for (const auto& w : r.warnings)
        log_warning(w);
    if (!r.hdr.pixels.data().empty() && !std::all_of(r.hdr.pixels.data().begin(), r.hdr.pixels.data().end(),
                                                     [](float v) { return std::isfinite(v); }))
        throw NumericError("network produced non-finite values");
    for (const auto& path : {a.out, a.raw, a.tonemap})
        if (!path.empty() && path.has_parent_path())
            fs::create_directories(path.parent_path());
    write_rgbe(a.out, r.hdr.pixels);
    if (!a.raw.empty())
        write_raw_float(a.raw, r.hdr.pixels);
    if (!a.tonemap.empty())
        write_ldr(a.tonemap, tonemap(r.hdr, TonemapParams{a.mu}).pixels, 8);
    out << "merged " << n << " frames into " << a.out.string() << " (" << r.hdr.width() << "x" << r.hdr.height()
        << ")\n";
    return kExitOk;
}

RadianceImage read_hdr_any(const fs::path& p)
{
    if (p.extension() == ".raw")
        return RadianceImage{read_raw_float(p)};
    return RadianceImage{read_rgbe(p)};
}

int cmd_eval(const EvalArgs& a, std::ostream& out)
{
    if (!fs::is_directory(a.pred))
        throw DataError(a.pred.string() + " is not a directory");
    std::map<std::string, fs::path> preds;
    for (const auto& e : fs::directory_iterator(a.pred)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".hdr" || ext == ".raw"))
            preds.emplace(e.path().stem().string(), e.path());
    }
    std::vector<SceneMetrics> rows;
    for (const auto& [name, path] : preds) {
        fs::path truth = a.truth / (name + ".hdr");
        if (!fs::exists(truth))
            truth = a.truth / name / "gt.hdr";
        if (!fs::exists(truth)) {
            log_warning("no ground truth for " + name + "; skipped");
            continue;
        }
        const auto p = read_hdr_any(path);
        const auto t = read_hdr_any(truth);
        if (!p.pixels.same_shape(t.pixels)) {
            log_warning(name + ": prediction and truth differ in size; skipped");
            continue;
        }
        rows.push_back({name, evaluate(p, t, TonemapParams{a.mu})});
    }
    if (rows.empty()) {
        log_warning("no prediction/truth pairs to evaluate");
        return kExitData;
    }
    if (!a.out.empty())
        write_report_csv(a.out, rows);
    const auto m = average(rows);
    out << std::fixed << std::setprecision(4);
    for (const auto& r : rows)
        out << r.scene << " psnr_t " << r.metrics.psnr_t << " ssim_t " << r.metrics.ssim_t << " psnr_l "
            << r.metrics.psnr_l << " ssim_l " << r.metrics.ssim_l << "\n";
    out << "mean psnr_t " << m.psnr_t << " ssim_t " << m.ssim_t << " psnr_l " << m.psnr_l << " ssim_l " << m.ssim_l
        << " over " << rows.size() << " scenes\n";
    return kExitOk;
}

int cmd_synth(const SynthArgs& a, std::ostream& out)
{
    if (a.scenes < 1 || a.test < 0 || a.test > a.scenes)
        throw ParameterError("need --scenes >= 1 and 0 <= --test <= --scenes");
    fs::create_directories(a.out);
    SplitSpec split;
    for (int i = 0; i < a.scenes; ++i) {
        std::ostringstream name;
        name << "scene_" << std::setw(3) << std::setfill('0') << i;
        SyntheticSceneOptions o;
        o.width = a.width;
        o.height = a.height;
        o.camera_jitter = a.jitter;
        o.moving_object = !a.still;
        o.seed = static_cast<std::uint64_t>(a.seed) * 1000003u + static_cast<std::uint64_t>(i);
        save_scene(a.out / name.str(), synthesize_scene(name.str(), o).scene);
        (i < a.scenes - a.test ? split.train_scenes : split.test_scenes).push_back(name.str());
    }
    write_split(a.out / "split.json", split);
    out << "wrote " << a.scenes << " scenes and split.json to " << a.out.string() << "\n";
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"merge bracketed LDR exposures into HDR images with an encoder-decoder network", "hdrforge"};
    app.require_subcommand(1);
    bool quiet = false, verbose = false;
    app.add_flag("-q,--quiet", quiet, "only print errors");
    app.add_flag("-v,--verbose", verbose, "print progress");

    PrepareArgs pa;
    auto* prep = app.add_subcommand("prepare", "align scenes and write a patch store");
    prep->add_option("--data", pa.data, "dataset directory with one subdirectory per scene")->required();
    prep->add_option("--split", pa.split, "split JSON {\"train\": [...], \"test\": [...]}")->required();
    prep->add_option("--out", pa.out, "patch store to write")->required();
    prep->add_option("--subset", pa.subset, "which split list to use")->check(CLI::IsMember({"train", "test"}));
    prep->add_option("--patch", pa.patch, "patch size");
    prep->add_option("--stride", pa.stride, "patch stride");
    prep->add_option("--gamma", pa.gamma, "camera gamma");
    prep->add_option("--motion-threshold", pa.motion_threshold, "1 - SSIM above which a patch counts as motion");
    prep->add_option("--oversample", pa.oversample, "copies of each motion patch");
    prep->add_option("--crf", pa.crf, "inverse CRF table (CSV)");
    prep->add_flag("--no-align", pa.no_align, "skip homography alignment");
    prep->add_flag("--no-augment", pa.no_augment, "skip the 8 dihedral variants");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a network on a patch store");
    train->add_option("--store", ta.store, "patch store")->required();
    train->add_option("--out", ta.out, "checkpoint to write")->required();
    train->add_option("--config", ta.config, "training config JSON");
    train->add_option("--log", ta.log, "CSV loss log");
    train->add_option("--resume", ta.resume, "checkpoint to resume from");
    train->add_option("--variant", ta.variant, "unet or resnet")->check(CLI::IsMember({"unet", "resnet"}));
    train->add_option("--k", ta.k, "number of exposures per sample");
    train->add_option("--width-divisor", ta.width_divisor, "divide every channel count by this");
    train->add_option("--batch", ta.batch, "batch size");
    train->add_option("--lr", ta.lr, "Adam learning rate");
    train->add_option("--iterations", ta.iterations, "total iterations");
    train->add_option("--seed", ta.seed, "seed for initialization and batching");
    train->add_option("--mu", ta.mu, "mu-law compression");
    train->add_option("--loss", ta.loss, "sum_root or mean")->check(CLI::IsMember({"sum_root", "mean"}));
    train->add_option("--checkpoint-interval", ta.checkpoint_interval, "iterations between checkpoints");

    MergeArgs ma;
    auto* merge = app.add_subcommand("merge", "merge an exposure stack into an HDR image");
    merge->add_option("frames", ma.frames, "LDR frames (PNG/TIFF)")->required()->check(CLI::ExistingFile);
    merge->add_option("--checkpoint", ma.checkpoint, "trained network")->required();
    merge->add_option("--out", ma.out, "output .hdr")->required();
    merge->add_option("--exposures", ma.exposures, "exposure biases, one per line, frame order");
    merge->add_option("--biases", ma.biases, "exposure biases in stops, frame order")->delimiter(',');
    merge->add_option("--reference", ma.reference, "reference frame index after sorting by bias (default middle)");
    merge->add_option("--gamma", ma.gamma, "camera gamma");
    merge->add_option("--mu", ma.mu, "mu-law compression for --tonemap");
    merge->add_option("--crf", ma.crf, "inverse CRF table (CSV)");
    merge->add_option("--homographies", ma.homographies, "precomputed homographies, 9 numbers per line");
    merge->add_option("--tonemap", ma.tonemap, "also write a mu-law tonemapped PNG");
    merge->add_option("--raw", ma.raw, "also write raw float32 pixels");
    merge->add_option("--tile", ma.tile, "tile size");
    merge->add_option("--overlap", ma.overlap, "tile overlap");
    merge->add_flag("--no-align", ma.no_align, "skip homography alignment");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    eval->add_option("--pred", ea.pred, "directory of predicted .hdr/.raw files")->required();
    eval->add_option("--truth", ea.truth, "directory of <name>.hdr or <name>/gt.hdr")->required();
    eval->add_option("--out", ea.out, "CSV report");
    eval->add_option("--mu", ea.mu, "mu-law compression for the tonemapped metrics");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "write a synthetic dataset with ground truth");
    synth->add_option("--out", sa.out, "dataset directory")->required();
    synth->add_option("--scenes", sa.scenes, "number of scenes");
    synth->add_option("--test", sa.test, "scenes held out for testing");
    synth->add_option("--width", sa.width, "frame width");
    synth->add_option("--height", sa.height, "frame height");
    synth->add_option("--seed", sa.seed, "generator seed");
    synth->add_option("--jitter", sa.jitter, "camera shake in pixels");
    synth->add_flag("--still", sa.still, "no moving object");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        if (!app.get_subcommands().empty())
            err << app.get_subcommands().front()->help();
        return kExitUsage;
    }
    set_log_level(quiet ? LogLevel::Quiet : verbose ? LogLevel::Info : LogLevel::Warning);

    try {
        if (*prep)
            return cmd_prepare(pa, out);
        if (*train)
            return cmd_train(ta, *train, out);
        if (*merge)
            return cmd_merge(ma, out);
        if (*eval)
            return cmd_eval(ea, out);
        return cmd_synth(sa, out);
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

} // namespace hdrforge

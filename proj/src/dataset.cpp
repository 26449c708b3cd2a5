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

#include "hdrforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "hdrforge/error.hpp"
#include "hdrforge/image_io.hpp"
#include "hdrforge/log.hpp"
#include "hdrforge/metrics.hpp"

namespace hdrforge {

void SplitSpec::validate(const std::vector<std::string>& available) const
{
    const std::set<std::string> avail(available.begin(), available.end());
    std::set<std::string> train(train_scenes.begin(), train_scenes.end());
    for (const auto& name : test_scenes)
        if (train.count(name))
            throw DataError("scene '" + name + "' is in both the train and test split");
    for (const auto* list : {&train_scenes, &test_scenes})
        for (const auto& name : *list)
            if (!avail.count(name))
                throw DataError("split names unknown scene '" + name + "'");
}

SplitSpec read_split(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open split file " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        SplitSpec s;
        s.train_scenes = j.at("train").get<std::vector<std::string>>();
        s.test_scenes = j.value("test", std::vector<std::string>{});
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_split(const std::filesystem::path& path, const SplitSpec& split)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write split file " + path.string());
    out << nlohmann::json{{"train", split.train_scenes}, {"test", split.test_scenes}}.dump(2) << '\n';
}

std::vector<Region> patch_grid(int width, int height, int size, int stride)
{
    if (size <= 0 || stride <= 0)
        throw ParameterError("patch size and stride must be positive");
    std::vector<Region> grid;
    for (int y = 0; y + size <= height; y += stride)
        for (int x = 0; x + size <= width; x += stride)
            grid.push_back({x, y, size, size});
    return grid;
}

std::size_t for_each_patch(const Scene& scene, const PatchOptions& options,
                           const std::function<void(PatchRecord&&)>& visit)
{
    const auto& stack = scene.stack;
    validate_stack(stack);
    const int w = stack.frames[0].width(), h = stack.frames[0].height();
    if (scene.ground_truth.width() != w || scene.ground_truth.height() != h)
        throw ShapeError("scene " + scene.name + ": ground truth size differs from the frames");
    if (w < options.size || h < options.size) {
        log_warning("scene " + scene.name + " (" + std::to_string(w) + "x" + std::to_string(h) +
                    ") is smaller than a " + std::to_string(options.size) + " patch; skipped");
        return 0;
    }
    const NetworkInput input = build_network_input(stack, options.gamma);
    const int k = static_cast<int>(stack.frames.size());
    const int s = options.size;
    std::size_t count = 0;
    for (const Region& r : patch_grid(w, h, s, options.stride)) {
        PatchRecord rec;
        rec.k = k;
        rec.size = s;
        rec.inputs.resize(static_cast<std::size_t>(k) * s * s * 6);
        rec.target.resize(static_cast<std::size_t>(s) * s * 3);
        float* dst = rec.inputs.data();
        for (int f = 0; f < k; ++f)
            for (int y = 0; y < s; ++y) {
                const float* src = input.planes.data() +
                                   ((static_cast<std::size_t>(f) * h + (r.y + y)) * w + r.x) * 6;
                dst = std::copy_n(src, static_cast<std::size_t>(s) * 6, dst);
            }
        const auto gt = scene.ground_truth.pixels.data();
        for (int y = 0; y < s; ++y)
            std::copy_n(gt.data() + (static_cast<std::size_t>(r.y + y) * w + r.x) * 3, static_cast<std::size_t>(s) * 3,
                        rec.target.data() + static_cast<std::size_t>(y) * s * 3);
        rec.motion_score = k > 1 ? static_cast<float>(motion_score(stack, r, options.gamma)) : 0.0f;
        rec.motion_flag = rec.motion_score > options.motion_threshold;
        rec.provenance = scene.name + "@" + std::to_string(r.x) + "," + std::to_string(r.y) + "#0";
        visit(std::move(rec));
        ++count;
    }
    return count;
}

std::vector<PatchRecord> extract_patches(const Scene& scene, const PatchOptions& options)
{
    std::vector<PatchRecord> records;
    for_each_patch(scene, options, [&](PatchRecord&& r) { records.push_back(std::move(r)); });
    return records;
}

std::vector<float> dihedral_transform(const std::vector<float>& pixels, int size, int channels, int index)
{
    if (index < 0 || index > 7)
        throw ParameterError("dihedral element must be in [0, 7]");
    if (pixels.size() != static_cast<std::size_t>(size) * size * channels)
        throw ShapeError("dihedral transform needs a square image");
    const int turns = index % 4;
    const bool flip = index >= 4;
    std::vector<float> out(pixels.size());
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            int rr = r, cc = flip ? size - 1 - c : c;
            for (int t = 0; t < turns; ++t) {
                const int nr = cc, nc = size - 1 - rr;
                rr = nr;
                cc = nc;
            }
            std::copy_n(pixels.data() + (static_cast<std::size_t>(r) * size + c) * channels, channels,
                        out.data() + (static_cast<std::size_t>(rr) * size + cc) * channels);
        }
    return out;
}

std::vector<PatchRecord> augment(const PatchRecord& record)
{
    const std::size_t plane = static_cast<std::size_t>(record.size) * record.size * 6;
    if (record.inputs.size() != plane * static_cast<std::size_t>(record.k))
        throw ShapeError("patch record inputs do not match k x size x size x 6");
    std::vector<PatchRecord> out;
    out.reserve(8);
    const std::string base = record.provenance.substr(0, record.provenance.rfind('#'));
    for (int e = 0; e < 8; ++e) {
        PatchRecord rec = record;
        if (e != 0) {
            for (int f = 0; f < record.k; ++f) {
                const auto begin = record.inputs.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(f));
                const std::vector<float> src(begin, begin + static_cast<std::ptrdiff_t>(plane));
                const auto t = dihedral_transform(src, record.size, 6, e);
                std::copy(t.begin(), t.end(), rec.inputs.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(f)));
            }
            rec.target = dihedral_transform(record.target, record.size, 3, e);
        }
        rec.provenance = base + "#" + std::to_string(e);
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

// Separable Gaussian with clamped borders on a single-channel image.
Image blur(const Image& src, double sigma)
{
    const int r = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0;
    for (int i = -r; i <= r; ++i)
        sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k)
        v /= sum;
    const int w = src.width(), h = src.height();
    Image tmp(w, h, 1), out(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * src.at(y, std::clamp(x + i, 0, w - 1), 0);
            tmp.at(y, x, 0) = static_cast<float>(acc);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * tmp.at(std::clamp(y + i, 0, h - 1), x, 0);
            out.at(y, x, 0) = static_cast<float>(acc);
        }
    return out;
}

} // namespace

double motion_score(const ExposureStack& stack, const Region& region, double gamma)
{
    validate_stack(stack);
    const int w = stack.frames[0].width(), h = stack.frames[0].height();
    if (region.x < 0 || region.y < 0 || region.width <= 0 || region.height <= 0 || region.x + region.width > w ||
        region.y + region.height > h)
        throw ShapeError("motion region lies outside the frames");
    std::vector<Image> lum;
    for (const auto& f : stack.frames)
        lum.push_back(luminance(f.pixels.crop(region.x, region.y, region.width, region.height)));
    double worst = 1.0;
    for (std::size_t i = 0; i < lum.size(); ++i)
        for (std::size_t j = i + 1; j < lum.size(); ++j) {
            const double ti = stack.frames[i].exposure_time, tj = stack.frames[j].exposure_time;
            // both frames clip where the longer exposure saturates
            const double ceiling = std::min({1.0, 1.0 / ti, 1.0 / tj});
            auto normalize = [&](const Image& src, double t) {
                Image out = src;
                for (float& v : out.data()) {
                    const double radiance = std::min(ceiling, std::pow(static_cast<double>(v), gamma) / t);
                    v = static_cast<float>(std::pow(radiance / ceiling, 1.0 / gamma));
                }
                return out;
            };
            worst = std::min(worst, ssim(blur(normalize(lum[i], ti), kMotionBlurSigma),
                                         blur(normalize(lum[j], tj), kMotionBlurSigma)));
        }
    return std::clamp(1.0 - worst, 0.0, 1.0);
}

std::vector<PatchRecord> oversample(std::vector<PatchRecord> records, double threshold, int factor,
                                    std::uint64_t seed)
{
    if (factor < 1)
        throw ParameterError("oversample factor must be >= 1");
    std::vector<PatchRecord> out;
    out.reserve(records.size());
    for (auto& rec : records) {
        rec.motion_flag = rec.motion_score > threshold;
        const int copies = rec.motion_flag ? factor : 1;
        for (int c = 1; c < copies; ++c)
            out.push_back(rec);
        out.push_back(std::move(rec));
    }
    std::mt19937_64 rng(seed);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

Scene load_scene(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir))
        throw DataError("scene directory " + dir.string() + " does not exist");
    const auto exposures_path = dir / "exposures.txt";
    const auto gt_path = dir / "gt.hdr";
    if (!std::filesystem::exists(exposures_path))
        throw DataError(dir.string() + ": missing exposures.txt");
    if (!std::filesystem::exists(gt_path))
        throw DataError(dir.string() + ": missing gt.hdr");

    const std::regex pattern(R"(input_(\d+)\.(tif|tiff|png))", std::regex::icase);
    std::vector<std::pair<int, std::filesystem::path>> inputs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern))
            inputs.emplace_back(std::stoi(m[1].str()), entry.path());
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty())
        throw DataError(dir.string() + ": no input_<n>.tif frames");
    const auto biases = read_exposures(exposures_path);
    if (biases.size() != inputs.size())
        throw DataError(dir.string() + ": " + std::to_string(inputs.size()) + " frames but " +
                        std::to_string(biases.size()) + " exposure biases");

    Scene scene;
    scene.name = dir.filename().string();
    if (scene.name.empty())
        scene.name = dir.parent_path().filename().string();
    std::vector<std::size_t> order(inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return biases[a] < biases[b]; });
    for (std::size_t i : order)
        scene.stack.frames.push_back(LdrImage{read_ldr(inputs[i].second), biases[i], 1.0});
    scene.stack.reference_index = static_cast<int>(scene.stack.frames.size() / 2);
    normalize_exposure_times(scene.stack);
    validate_stack(scene.stack);

    Image gt = read_rgbe(gt_path);
    for (float& v : gt.data())
        v = std::clamp(v, 0.0f, 1.0f);
    scene.ground_truth = RadianceImage{std::move(gt)};
    if (scene.ground_truth.width() != scene.stack.frames[0].width() ||
        scene.ground_truth.height() != scene.stack.frames[0].height())
        throw DataError(dir.string() + ": gt.hdr size differs from the input frames");
    return scene;
}

void save_scene(const std::filesystem::path& dir, const Scene& scene)
{
    std::filesystem::create_directories(dir);
    std::vector<double> biases;
    for (std::size_t i = 0; i < scene.stack.frames.size(); ++i) {
        write_ldr(dir / ("input_" + std::to_string(i + 1) + ".tif"), scene.stack.frames[i].pixels, 16);
        biases.push_back(scene.stack.frames[i].exposure_bias);
    }
    write_exposures(dir / "exposures.txt", biases);
    write_rgbe(dir / "gt.hdr", scene.ground_truth.pixels);
}

} // namespace hdrforge

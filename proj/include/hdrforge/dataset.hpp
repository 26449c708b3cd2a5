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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hdrforge/image.hpp"
#include "hdrforge/radiance.hpp"

namespace hdrforge {

inline constexpr int kDefaultPatchSize = 256;
inline constexpr int kDefaultPatchStride = 64;
/// Motion is flagged when 1 - SSIM exceeds this (similarity below 0.8).
inline constexpr double kDefaultMotionThreshold = 0.2;
inline constexpr int kDefaultOversampleFactor = 2;
/// Luminance is low-passed before the SSIM comparison so sensor noise in flat
/// regions does not read as motion.
inline constexpr double kMotionBlurSigma = 2.0;

struct Region {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
    friend bool operator==(const Region&, const Region&) = default;
};

/// An aligned exposure stack with its ground-truth radiance.
struct Scene {
    std::string name;
    ExposureStack stack;
    RadianceImage ground_truth;
};

/// One training example. `inputs` holds k planes of size x size x 6
/// ([I | H] per pixel), `target` size x size x 3.
struct PatchRecord {
    int k = 0;
    int size = 0;
    std::vector<float> inputs;
    std::vector<float> target;
    bool motion_flag = false;
    std::string provenance;
    /// 1 - min pairwise SSIM; kept in memory only (stores persist the flag).
    float motion_score = 0.0f;

    /// Compares the persisted fields.
    friend bool operator==(const PatchRecord& a, const PatchRecord& b)
    {
        return a.k == b.k && a.size == b.size && a.inputs == b.inputs && a.target == b.target &&
               a.motion_flag == b.motion_flag && a.provenance == b.provenance;
    }
};

struct SplitSpec {
    std::vector<std::string> train_scenes;
    std::vector<std::string> test_scenes;

    /// Throws DataError if the lists overlap or name a scene not in `available`.
    void validate(const std::vector<std::string>& available) const;
};

SplitSpec read_split(const std::filesystem::path& path);
void write_split(const std::filesystem::path& path, const SplitSpec& split);

/// Top-left corners of every size x size window on the stride grid that fits
/// entirely inside the frame, row-major.
std::vector<Region> patch_grid(int width, int height, int size, int stride);

struct PatchOptions {
    int size = kDefaultPatchSize;
    int stride = kDefaultPatchStride;
    double gamma = kDefaultGamma;
    double motion_threshold = kDefaultMotionThreshold;
};

/// Cuts aligned input/target patches, scoring each for motion. Returns an
/// empty list (and logs a warning) when the frame is smaller than a patch.
std::vector<PatchRecord> extract_patches(const Scene& scene, const PatchOptions& options = {});

/// Streaming form of extract_patches: hands each record to `visit` in grid
/// order and returns how many were produced.
std::size_t for_each_patch(const Scene& scene, const PatchOptions& options,
                           const std::function<void(PatchRecord&&)>& visit);

/// Element `index` (0..7) of the dihedral group applied to a square
/// size x size image with `channels` interleaved values per pixel. Element
/// r + 4f is an optional horizontal flip (f) followed by r clockwise
/// quarter turns; a quarter turn moves (row, col) to (col, size - 1 - row).
std::vector<float> dihedral_transform(const std::vector<float>& pixels, int size, int channels, int index);

/// The eight dihedral variants of a record, identity first.
std::vector<PatchRecord> augment(const PatchRecord& record);

/// 1 - min over frame pairs of the SSIM between exposure-normalized
/// luminances inside `region`, clamped to [0,1].
double motion_score(const ExposureStack& stack, const Region& region, double gamma = kDefaultGamma);

/// Repeats each record whose motion score exceeds `threshold` `factor` times
/// in total, then shuffles deterministically from `seed`.
std::vector<PatchRecord> oversample(std::vector<PatchRecord> records, double threshold, int factor,
                                    std::uint64_t seed);

/// Loads `<dir>/input_*.tif|png`, `<dir>/exposures.txt` and `<dir>/gt.hdr`.
/// Frames are sorted by bias; the middle frame becomes the reference.
Scene load_scene(const std::filesystem::path& dir);

/// Writes a scene in the same layout (16-bit TIFF inputs).
void save_scene(const std::filesystem::path& dir, const Scene& scene);

} // namespace hdrforge

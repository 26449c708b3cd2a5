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

#include <cstddef>
#include <optional>
#include <vector>

#include "hdrforge/align.hpp"
#include "hdrforge/image.hpp"
#include "hdrforge/network.hpp"
#include "hdrforge/radiance.hpp"

namespace hdrforge {

/// Orders `stack` into the k input slots of a network. The reference frame
/// takes the middle slot (k / 2); slots below it take the nearest darker
/// frames, slots above the nearest brighter ones, and a side that runs out
/// repeats its outermost frame. Exposure times are renormalized to the
/// reference. Throws ParameterError when the stack holds more than k frames.
ExposureStack arrange_slots(const ExposureStack& stack, int k);

/// Mirror padding (edge sample not repeated) on the bottom and right of a
/// {k, H, W, C} tensor.
Tensor reflect_pad(const Tensor& planes, int pad_bottom, int pad_right);

struct TileOptions {
    int tile = 256;
    int overlap = 32;
};

/// Tile origins along one axis: step tile - overlap, last tile flush with the end.
std::vector<int> tile_origins(int extent, int tile, int overlap);

/// Inference on the full frame, padded to the network's divisibility.
/// `planes` is {k, H, W, 6}; the result is H x W.
RadianceImage infer_whole(const Network<float>& net, const Tensor& planes);

/// Tiled inference: the padded frame is cut into overlapping tiles, each
/// inferred independently, and overlaps are blended with linear ramps.
RadianceImage infer_tiled(const Network<float>& net, const Tensor& planes, const TileOptions& options = {});

struct MergeOptions {
    double gamma = kDefaultGamma;
    bool align = true;
    AlignOptions alignment;
    std::optional<std::vector<Homography>> homographies;
    TileOptions tiles;
};

struct MergeResult {
    RadianceImage hdr;
    std::vector<std::string> warnings;
};

/// Align, arrange into slots, build the network input and run tiled inference.
MergeResult merge_stack(const ExposureStack& stack, const Network<float>& net, const MergeOptions& options = {});

} // namespace hdrforge

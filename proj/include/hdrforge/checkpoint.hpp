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
#include <optional>
#include <vector>

#include "hdrforge/network.hpp"

namespace hdrforge {

/// Adam moments and progress counters, saved alongside the weights so a
/// run can resume exactly where it stopped.
struct OptimizerState {
    std::uint64_t iteration = 0;
    std::uint64_t step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Checkpoint layout (little-endian):
///
///   "HDRW" u32 version, u8 variant, u32 k, u32 patch, u32 width_divisor,
///   u32 input_channels, str output, 3 x (u32 count, layer entries),
///   u32 n_params then per parameter: str name, u32 rank, u32 dims[rank],
///   u64 length, float32[length]; same again for batch-norm running stats;
///   u8 has_optimizer [u64 iteration, u64 step, m blobs, v blobs].
///
/// Strings are u16 length + bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Network<float> network;
    std::optional<OptimizerState> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Network<float>& network,
                     const OptimizerState* optimizer = nullptr);

/// Throws DataError on malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace hdrforge

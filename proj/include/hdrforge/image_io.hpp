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

#include <filesystem>
#include <array>
#include <optional>
#include <vector>

#include "hdrforge/image.hpp"
#include "hdrforge/radiance.hpp"

namespace hdrforge {

/// 8- or 16-bit PNG/TIFF as RGB in [0,1] (divided by the bit-depth maximum).
Image read_ldr(const std::filesystem::path& path);

/// Quantizes [0,1] RGB to `bits` (8 or 16) and writes PNG or TIFF by extension.
void write_ldr(const std::filesystem::path& path, const Image& image, int bits = 8);

/// One exposure bias in stops per non-empty line.
std::vector<double> read_exposures(const std::filesystem::path& path);
void write_exposures(const std::filesystem::path& path, const std::vector<double>& biases);

/// CSV of inverse-response samples: rows of "r,g,b" on a uniform intensity
/// grid, or "intensity,r,g,b". Blank lines and lines starting with '#' or a
/// letter (header) are skipped.
CrfTable read_crf_csv(const std::filesystem::path& path);

/// Radiance RGBE (.hdr). Scanlines 8..32767 pixels wide are written with
/// run-length encoding; the reader accepts flat and RLE scanlines.
Image read_rgbe(const std::filesystem::path& path);
void write_rgbe(const std::filesystem::path& path, const Image& rgb);

/// Raw little-endian float32 dump: u32 width, u32 height, u32 channels, data.
void write_raw_float(const std::filesystem::path& path, const Image& image);
Image read_raw_float(const std::filesystem::path& path);

/// Homography sidecar: one row-major 3x3 matrix (9 numbers) per line.
std::vector<std::array<double, 9>> read_homographies(const std::filesystem::path& path);
void write_homographies(const std::filesystem::path& path, const std::vector<std::array<double, 9>>& rows);

} // namespace hdrforge

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

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hdrforge/dataset.hpp"
#include "hdrforge/image.hpp"

namespace hdrforge {

/// Camera model used to render LDR frames from radiance: the sensor sees
/// E = H t plus Gaussian noise with variance read^2 + shot * E, clips to
/// [0,1], applies the 1/gamma response and quantizes to `bits` (0 keeps
/// floats).
struct SensorModel {
    double gamma = kDefaultGamma;
    double read_noise = 0.0;
    double shot_noise = 0.0;
    int bits = 0;
};

/// Resolution-independent radiance field: rectangles, soft blobs and
/// gratings laid over a smooth gradient, spanning about four decades of
/// radiance in [1e-4, 1].
class ProceduralRadiance {
public:
    ProceduralRadiance(int width, int height, std::uint64_t seed);

    std::array<double, 3> operator()(double x, double y) const;

    /// Renders pixel (x, y) as the field at h(x, y) + (0.5, 0.5), i.e. pixel
    /// centres of the unwarped grid sit at half-integer field positions.
    /// Identity when `h` is empty.
    RadianceImage render(int width, int height, const std::vector<double>& h = {}) const;

private:
    struct Rect {
        double x0, y0, x1, y1, level;
        std::array<double, 3> tint;
    };
    struct Blob {
        double cx, cy, sigma, level;
        std::array<double, 3> tint;
    };
    struct Grating {
        double kx, ky, phase, level;
    };
    std::vector<Rect> rects_;
    std::vector<Blob> blobs_;
    std::vector<Grating> gratings_;
    double gx_ = 0, gy_ = 0, offset_ = 0;
    double lo_ = 0, hi_ = 1;

    std::array<double, 3> log_field(double x, double y) const;
};

/// LDR rendering of a radiance image at the given relative exposure time.
Image expose(const RadianceImage& radiance, double exposure_time, const SensorModel& sensor, std::mt19937_64& rng);

struct SyntheticSceneOptions {
    int width = 256;
    int height = 256;
    std::vector<double> biases{-2.0, 0.0, 2.0};
    SensorModel sensor{kDefaultGamma, 0.002, 0.0005, 8};
    /// A textured disc that sits at a different place in every non-reference frame.
    bool moving_object = true;
    double object_radius = 0.12; // fraction of min(width, height)
    double object_shift = 0.2;   // fraction of min(width, height)
    /// Largest corner displacement (pixels) of the random homography between
    /// each non-reference frame and the reference. 0 keeps frames aligned.
    double camera_jitter = 0.0;
    std::uint64_t seed = 0;
};

struct SyntheticScene {
    Scene scene;
    /// Per frame, the row-major homography h (pixel-index coordinates) with
    /// frame(p) = reference view at h(p).
    std::vector<std::vector<double>> motions;
};

/// Ground truth is the clean reference-view radiance, so the object appears
/// where the reference frame shows it.
SyntheticScene synthesize_scene(const std::string& name, const SyntheticSceneOptions& options);

} // namespace hdrforge

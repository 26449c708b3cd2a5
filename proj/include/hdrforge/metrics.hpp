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
#include <string>
#include <vector>

#include "hdrforge/image.hpp"
#include "hdrforge/radiance.hpp"

namespace hdrforge {

/// Reported in place of +inf when the two images are identical.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for unit peak, over all pixels and channels.
double psnr(const Image& a, const Image& b);
double psnr(const RadianceImage& a, const RadianceImage& b);

/// Mean SSIM over the valid positions of an 11x11 Gaussian window
/// (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2), averaged over channels.
double ssim(const Image& a, const Image& b);
double ssim(const RadianceImage& a, const RadianceImage& b);

/// SSIM of a single channel of two equally shaped images.
double ssim_channel(const Image& a, const Image& b, int channel);

struct MetricsReport {
    double psnr_t = 0.0;
    double ssim_t = 0.0;
    double psnr_l = 0.0;
    double ssim_l = 0.0;
};

/// Tonemapped (mu-law) and linear PSNR/SSIM of a prediction against truth.
MetricsReport evaluate(const RadianceImage& predicted, const RadianceImage& truth, const TonemapParams& params = {});

struct SceneMetrics {
    std::string scene;
    MetricsReport metrics;
};

/// Arithmetic mean of every field.
MetricsReport average(const std::vector<SceneMetrics>& rows);

/// CSV with header scene,psnr_t,ssim_t,psnr_l,ssim_l, one row per scene and
/// a final "mean" row.
void write_report_csv(const std::filesystem::path& path, const std::vector<SceneMetrics>& rows);

} // namespace hdrforge

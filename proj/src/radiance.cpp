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

#include "hdrforge/radiance.hpp"

#include <algorithm>
#include <string>

#include "hdrforge/error.hpp"

namespace hdrforge {

namespace {

void check_mu(double mu)
{
    if (!(mu > 0.0))
        throw ParameterError("tonemap mu must be positive, got " + std::to_string(mu));
}

template <typename Fn>
RadianceImage map_pixels(const Image& src, Fn fn)
{
    Image out = src;
    for (float& v : out.data())
        v = static_cast<float>(fn(static_cast<double>(v)));
    return RadianceImage{std::move(out)};
}

} // namespace

CrfTable::CrfTable(std::array<std::vector<double>, 3> irradiance, std::vector<double> intensity)
    : intensity_(std::move(intensity)), irradiance_(std::move(irradiance))
{
    const std::size_t n = irradiance_[0].size();
    if (n < 256)
        throw CalibrationError("CRF table needs at least 256 samples, got " + std::to_string(n));
    for (const auto& ch : irradiance_)
        if (ch.size() != n)
            throw CalibrationError("CRF channels have different sample counts");
    if (intensity_.empty()) {
        intensity_.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            intensity_[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    }
    if (intensity_.size() != n)
        throw CalibrationError("CRF intensity axis length does not match samples");
    for (std::size_t i = 1; i < n; ++i)
        if (!(intensity_[i] > intensity_[i - 1]))
            throw CalibrationError("CRF intensity axis must be strictly increasing");
    if (intensity_.front() != 0.0 || intensity_.back() != 1.0)
        throw CalibrationError("CRF intensity axis must span [0,1]");
    for (int c = 0; c < 3; ++c) {
        const auto& ch = irradiance_[static_cast<std::size_t>(c)];
        for (std::size_t i = 1; i < n; ++i)
            if (ch[i] < ch[i - 1])
                throw CalibrationError("CRF channel " + std::to_string(c) + " decreases at sample " +
                                       std::to_string(i));
        if (ch.front() != 0.0 || ch.back() != 1.0)
            throw CalibrationError("CRF channel " + std::to_string(c) + " must map 0->0 and 1->1");
    }
}

CrfTable CrfTable::identity(int samples)
{
    std::vector<double> ramp(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i)
        ramp[static_cast<std::size_t>(i)] = static_cast<double>(i) / (samples - 1);
    return CrfTable({ramp, ramp, ramp});
}

double CrfTable::apply(int channel, double intensity) const
{
    const auto& ys = irradiance_.at(static_cast<std::size_t>(channel));
    const double x = std::clamp(intensity, 0.0, 1.0);
    auto it = std::upper_bound(intensity_.begin(), intensity_.end(), x);
    if (it == intensity_.end())
        return ys.back();
    const auto hi = static_cast<std::size_t>(it - intensity_.begin());
    const auto lo = hi - 1;
    const double f = (x - intensity_[lo]) / (intensity_[hi] - intensity_[lo]);
    return ys[lo] + f * (ys[hi] - ys[lo]);
}

LdrImage linearize(const LdrImage& image, const std::optional<CrfTable>& crf)
{
    if (!crf)
        return image;
    LdrImage out = image;
    auto px = out.pixels.data();
    const int ch = out.pixels.channels();
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<float>(crf->apply(static_cast<int>(i % static_cast<std::size_t>(ch)) % 3, px[i]));
    return out;
}

double hdr_domain_value(double intensity, double gamma, double exposure_time)
{
    if (!(gamma > 1.0))
        throw ParameterError("gamma must exceed 1, got " + std::to_string(gamma));
    if (!(exposure_time > 0.0))
        throw ParameterError("exposure time must be positive");
    return std::clamp(std::pow(intensity, gamma) / exposure_time, 0.0, 1.0);
}

RadianceImage to_hdr_domain(const LdrImage& image, double gamma)
{
    // validate once so the per-pixel lambda cannot throw halfway through
    hdr_domain_value(0.0, gamma, image.exposure_time);
    const double t = image.exposure_time;
    return map_pixels(image.pixels, [&](double v) { return hdr_domain_value(v, gamma, t); });
}

RadianceImage tonemap(const RadianceImage& h, const TonemapParams& params)
{
    check_mu(params.mu);
    return map_pixels(h.pixels, [mu = params.mu](double v) { return mu_law(v, mu); });
}

RadianceImage tonemap_inverse(const RadianceImage& t, const TonemapParams& params)
{
    check_mu(params.mu);
    return map_pixels(t.pixels, [mu = params.mu](double v) { return mu_law_inverse(v, mu); });
}

NetworkInput build_network_input(const ExposureStack& stack, double gamma)
{
    validate_stack(stack);
    if (stack.frames.size() < 2)
        throw ShapeError("network input needs at least two frames");
    const int k = static_cast<int>(stack.frames.size());
    const int h = stack.frames[0].height();
    const int w = stack.frames[0].width();
    Tensor planes({k, h, w, 6});
    float* out = planes.data();
    for (const auto& frame : stack.frames) {
        if (frame.pixels.channels() != 3)
            throw ShapeError("network input frames must be RGB");
        const RadianceImage hdr = to_hdr_domain(frame, gamma);
        auto ldr = frame.pixels.data();
        auto rad = hdr.pixels.data();
        for (std::size_t p = 0; p < ldr.size() / 3; ++p) {
            for (int c = 0; c < 3; ++c)
                *out++ = ldr[3 * p + static_cast<std::size_t>(c)];
            for (int c = 0; c < 3; ++c)
                *out++ = rad[3 * p + static_cast<std::size_t>(c)];
        }
    }
    return NetworkInput{std::move(planes), stack.reference_index};
}

} // namespace hdrforge

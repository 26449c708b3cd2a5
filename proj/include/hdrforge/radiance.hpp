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
#include <cmath>
#include <optional>
#include <vector>

#include "hdrforge/image.hpp"
#include "hdrforge/tensor.hpp"

namespace hdrforge {

inline constexpr double kDefaultGamma = 2.2;
inline constexpr double kDefaultMu = 5000.0;

/// Inverse camera response: per channel, a monotone table mapping normalized
/// intensity to normalized linear irradiance. Sample i sits at intensity
/// i / (n - 1) unless explicit abscissae are supplied.
class CrfTable {
public:
    /// Throws CalibrationError unless every channel has the same number
    /// (>= 256) of non-decreasing samples spanning 0 -> 0 and 1 -> 1.
    explicit CrfTable(std::array<std::vector<double>, 3> irradiance,
                      std::vector<double> intensity = {});

    static CrfTable identity(int samples = 256);

    /// Piecewise-linear lookup.
    double apply(int channel, double intensity) const;

    std::size_t samples() const { return intensity_.size(); }

private:
    std::vector<double> intensity_;
    std::array<std::vector<double>, 3> irradiance_;
};

struct TonemapParams {
    double mu = kDefaultMu;
};

/// Mu-law range compression log(1 + mu h) / log(1 + mu). Shared by the
/// training loss and the tonemapped evaluation metrics.
template <typename T>
inline T mu_law(T h, T mu)
{
    return std::log1p(mu * h) / std::log1p(mu);
}

/// d mu_law / dh.
template <typename T>
inline T mu_law_derivative(T h, T mu)
{
    return mu / ((T{1} + mu * h) * std::log1p(mu));
}

template <typename T>
inline T mu_law_inverse(T t, T mu)
{
    return std::expm1(t * std::log1p(mu)) / mu;
}

/// Maps pixels through the inverse CRF; the pixels are returned unchanged
/// when no table is given (gamma stands in for the response curve).
LdrImage linearize(const LdrImage& image, const std::optional<CrfTable>& crf);

/// H = clamp(I^gamma / t, 0, 1). Throws ParameterError for gamma <= 1 or t <= 0.
RadianceImage to_hdr_domain(const LdrImage& image, double gamma = kDefaultGamma);

/// Scalar form of to_hdr_domain.
double hdr_domain_value(double intensity, double gamma, double exposure_time);

/// Throws ParameterError for mu <= 0.
RadianceImage tonemap(const RadianceImage& h, const TonemapParams& params = {});
RadianceImage tonemap_inverse(const RadianceImage& t, const TonemapParams& params = {});

/// Network input for one stack: tensor shaped k x H x W x 6 holding
/// [I_i | H_i] (R,G,B then R,G,B) per frame in stack order.
struct NetworkInput {
    Tensor planes;
    int reference_index = 0;
};

/// Throws ShapeError if frames differ in size or fewer than two are given.
NetworkInput build_network_input(const ExposureStack& stack, double gamma = kDefaultGamma);

} // namespace hdrforge

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

#include "hdrforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hdrforge/error.hpp"

namespace hdrforge {

namespace {

constexpr double kLogMin = -4.0; // log10 of the darkest radiance

std::array<double, 2> apply_h(const std::vector<double>& h, double x, double y)
{
    if (h.empty())
        return {x, y};
    const double w = h[6] * x + h[7] * y + h[8];
    return {(h[0] * x + h[1] * y + h[2]) / w, (h[3] * x + h[4] * y + h[5]) / w};
}

double smoothstep(double e0, double e1, double v)
{
    const double t = std::clamp((v - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

} // namespace

ProceduralRadiance::ProceduralRadiance(int width, int height, std::uint64_t seed)
{
    if (width <= 0 || height <= 0)
        throw ParameterError("procedural radiance needs a positive size");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double W = width, H = height, S = std::min(W, H);
    auto tint = [&] { return std::array<double, 3>{u(rng) * 0.6 - 0.3, u(rng) * 0.6 - 0.3, u(rng) * 0.6 - 0.3}; };

    gx_ = (u(rng) - 0.5) * 2.0 / W;
    gy_ = (u(rng) - 0.5) * 2.0 / H;
    offset_ = u(rng) - 0.5;
    const double area_scale = std::clamp(W * H / (128.0 * 128.0), 1.0, 6.0);
    const int n_rects = static_cast<int>((14 + u(rng) * 10) * area_scale);
    for (int i = 0; i < n_rects; ++i) {
        const double w = S * (0.04 + 0.25 * u(rng)), h = S * (0.04 + 0.25 * u(rng));
        const double x = u(rng) * (W - w), y = u(rng) * (H - h);
        rects_.push_back({x, y, x + w, y + h, (u(rng) - 0.5) * 3.0, tint()});
    }
    for (int i = 0; i < 10; ++i)
        blobs_.push_back({u(rng) * W, u(rng) * H, S * (0.03 + 0.12 * u(rng)), (u(rng) - 0.4) * 3.0, tint()});
    for (int i = 0; i < 3; ++i) {
        const double period = 6.0 + 20.0 * u(rng);
        const double angle = u(rng) * std::numbers::pi;
        const double k = 2.0 * std::numbers::pi / period;
        gratings_.push_back({k * std::cos(angle), k * std::sin(angle), u(rng) * 6.3, 0.15 + 0.25 * u(rng)});
    }

    // fix the affine map from the raw field onto [kLogMin, 0] from a coarse scan
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const auto v = log_field((x + 0.5) * W / 64, (y + 0.5) * H / 64);
            for (double c : v) {
                lo = std::min(lo, c);
                hi = std::max(hi, c);
            }
        }
    lo_ = lo;
    hi_ = hi > lo ? hi : lo + 1.0;
}

std::array<double, 3> ProceduralRadiance::log_field(double x, double y) const
{
    const double base = offset_ + gx_ * x + gy_ * y;
    std::array<double, 3> v{base, base, base};
    for (const auto& r : rects_) {
        // slightly soft edges keep corners sub-pixel accurate after resampling
        const double m = smoothstep(r.x0 - 0.5, r.x0 + 0.5, x) * (1 - smoothstep(r.x1 - 0.5, r.x1 + 0.5, x)) *
                         smoothstep(r.y0 - 0.5, r.y0 + 0.5, y) * (1 - smoothstep(r.y1 - 0.5, r.y1 + 0.5, y));
        if (m > 0)
            for (int c = 0; c < 3; ++c)
                v[c] += m * r.level * (1 + r.tint[c]);
    }
    for (const auto& b : blobs_) {
        const double d2 = ((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (2 * b.sigma * b.sigma);
        if (d2 < 30)
            for (int c = 0; c < 3; ++c)
                v[c] += std::exp(-d2) * b.level * (1 + b.tint[c]);
    }
    for (const auto& g : gratings_) {
        const double s = g.level * std::sin(g.kx * x + g.ky * y + g.phase);
        for (auto& c : v)
            c += s;
    }
    return v;
}

std::array<double, 3> ProceduralRadiance::operator()(double x, double y) const
{
    const auto v = log_field(x, y);
    std::array<double, 3> out;
    for (int c = 0; c < 3; ++c) {
        const double t = std::clamp((v[c] - lo_) / (hi_ - lo_), 0.0, 1.0);
        out[c] = std::pow(10.0, kLogMin * (1.0 - t));
    }
    return out;
}

RadianceImage ProceduralRadiance::render(int width, int height, const std::vector<double>& h) const
{
    if (!h.empty() && h.size() != 9)
        throw ParameterError("homography must have 9 entries");
    Image img(width, height, 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const auto [hx, hy] = apply_h(h, x, y);
            const auto v = (*this)(hx + 0.5, hy + 0.5);
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = static_cast<float>(v[c]);
        }
    return RadianceImage{std::move(img)};
}

Image expose(const RadianceImage& radiance, double exposure_time, const SensorModel& sensor, std::mt19937_64& rng)
{
    if (!(exposure_time > 0))
        throw ParameterError("exposure time must be positive");
    if (!(sensor.gamma > 0))
        throw ParameterError("sensor gamma must be positive");
    if (sensor.bits != 0 && (sensor.bits < 1 || sensor.bits > 16))
        throw ParameterError("sensor bit depth must be 0 or 1..16");
    std::normal_distribution<double> n(0.0, 1.0);
    const bool noisy = sensor.read_noise > 0 || sensor.shot_noise > 0;
    const double levels = sensor.bits ? std::exp2(sensor.bits) - 1.0 : 0.0;
    Image out = radiance.pixels;
    for (float& v : out.data()) {
        double e = std::max(0.0, static_cast<double>(v)) * exposure_time;
        if (noisy)
            e += n(rng) * std::sqrt(sensor.read_noise * sensor.read_noise + sensor.shot_noise * std::min(e, 1.0));
        double i = std::pow(std::clamp(e, 0.0, 1.0), 1.0 / sensor.gamma);
        if (levels > 0)
            i = std::round(i * levels) / levels;
        v = static_cast<float>(i);
    }
    return out;
}

SyntheticScene synthesize_scene(const std::string& name, const SyntheticSceneOptions& o)
{
    if (o.biases.size() < 2)
        throw ParameterError("a synthetic stack needs at least two exposures");
    if (o.width < 16 || o.height < 16)
        throw ParameterError("synthetic scenes must be at least 16x16");
    std::vector<double> biases = o.biases;
    std::sort(biases.begin(), biases.end());
    const int k = static_cast<int>(biases.size());
    const int ref = k / 2;

    std::mt19937_64 rng(o.seed ^ 0x5eed5eed5eedULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const ProceduralRadiance background(o.width, o.height, o.seed);
    const ProceduralRadiance texture(o.width, o.height, o.seed + 0x9e3779b97f4a7c15ULL);

    const double S = std::min(o.width, o.height);
    const double radius = o.object_radius * S;
    const double cx = radius + u(rng) * (o.width - 2 * radius), cy = radius + u(rng) * (o.height - 2 * radius);
    const double angle0 = u(rng) * 2 * std::numbers::pi;

    SyntheticScene out;
    out.scene.name = name;
    out.scene.stack.reference_index = ref;

    auto render_frame = [&](int f, const std::vector<double>& h) {
        // object centre for this frame: reference position, or displaced along
        // a per-frame direction
        double ox = cx, oy = cy;
        if (o.moving_object && f != ref) {
            const double a = angle0 + f * 2.1;
            ox += std::cos(a) * o.object_shift * S;
            oy += std::sin(a) * o.object_shift * S;
        }
        Image img(o.width, o.height, 3);
        for (int y = 0; y < o.height; ++y)
            for (int x = 0; x < o.width; ++x) {
                const auto [hx, hy] = apply_h(h, x, y);
                const double sx = hx + 0.5, sy = hy + 0.5;
                std::array<double, 3> v = background(sx, sy);
                if (o.moving_object) {
                    const double d = std::hypot(sx - ox, sy - oy);
                    const double m = 1 - smoothstep(radius - 0.5, radius + 0.5, d);
                    if (m > 0) {
                        const auto t = texture(sx - ox + cx, sy - oy + cy);
                        for (int c = 0; c < 3; ++c)
                            v[c] = (1 - m) * v[c] + m * t[c];
                    }
                }
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = static_cast<float>(v[c]);
            }
        return RadianceImage{std::move(img)};
    };

    for (int f = 0; f < k; ++f) {
        std::vector<double> h;
        if (o.camera_jitter > 0 && f != ref) {
            // homography from jittered corners by a direct 4-point solve
            const double W = o.width, H = o.height;
            const double src[4][2] = {{0, 0}, {W - 1, 0}, {W - 1, H - 1}, {0, H - 1}};
            double dst[4][2];
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 2; ++j)
                    dst[i][j] = src[i][j] + (u(rng) * 2 - 1) * o.camera_jitter;
            // solve for h mapping src -> dst with h8 = 1 (8x8 Gaussian elimination)
            double A[8][9] = {};
            for (int i = 0; i < 4; ++i) {
                const double x = src[i][0], y = src[i][1], X = dst[i][0], Y = dst[i][1];
                double r1[9] = {x, y, 1, 0, 0, 0, -X * x, -X * y, X};
                double r2[9] = {0, 0, 0, x, y, 1, -Y * x, -Y * y, Y};
                std::copy(r1, r1 + 9, A[2 * i]);
                std::copy(r2, r2 + 9, A[2 * i + 1]);
            }
            for (int c = 0; c < 8; ++c) {
                int piv = c;
                for (int r = c + 1; r < 8; ++r)
                    if (std::abs(A[r][c]) > std::abs(A[piv][c]))
                        piv = r;
                std::swap(A[c], A[piv]);
                for (int r = 0; r < 8; ++r) {
                    if (r == c)
                        continue;
                    const double f2 = A[r][c] / A[c][c];
                    for (int j = c; j < 9; ++j)
                        A[r][j] -= f2 * A[c][j];
                }
            }
            h.resize(9);
            for (int i = 0; i < 8; ++i)
                h[static_cast<std::size_t>(i)] = A[i][8] / A[i][i];
            h[8] = 1.0;
        }
        const RadianceImage radiance = render_frame(f, h);
        const double t = std::exp2(biases[static_cast<std::size_t>(f)] - biases[static_cast<std::size_t>(ref)]);
        out.scene.stack.frames.push_back(LdrImage{expose(radiance, t, o.sensor, rng), biases[static_cast<std::size_t>(f)], t});
        if (f == ref)
            out.scene.ground_truth = radiance;
        out.motions.push_back(h.empty() ? std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1} : h);
    }
    return out;
}

} // namespace hdrforge

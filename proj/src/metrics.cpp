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

#include "hdrforge/metrics.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "hdrforge/error.hpp"

namespace hdrforge {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_taps()
{
    std::array<double, kWindow> taps{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += taps[static_cast<std::size_t>(i)];
    }
    for (auto& t : taps)
        t /= sum;
    return taps;
}

void check_same(const Image& a, const Image& b)
{
    if (!a.same_shape(b))
        throw ShapeError("metric operands differ in shape: " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                         std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                         std::to_string(b.channels()));
}

// Valid-mode separable filtering of a w x h plane.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::array<double, kWindow>& taps)
{
    const int ow = w - kWindow + 1, oh = h - kWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            const double* p = src.data() + static_cast<std::size_t>(y) * w + x;
            for (int t = 0; t < kWindow; ++t)
                s += taps[static_cast<std::size_t>(t)] * p[t];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int t = 0; t < kWindow; ++t)
                s += taps[static_cast<std::size_t>(t)] * tmp[static_cast<std::size_t>(y + t) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

} // namespace

double psnr(const Image& a, const Image& b)
{
    check_same(a, b);
    auto pa = a.data();
    auto pb = b.data();
    if (pa.empty())
        throw ShapeError("psnr of empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(pa.size());
    if (mse == 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double psnr(const RadianceImage& a, const RadianceImage& b)
{
    return psnr(a.pixels, b.pixels);
}

double ssim_channel(const Image& a, const Image& b, int channel)
{
    check_same(a, b);
    const int w = a.width(), h = a.height();
    if (w < kWindow || h < kWindow)
        throw ShapeError("ssim needs images of at least 11x11 pixels");
    if (channel < 0 || channel >= a.channels())
        throw ShapeError("ssim channel out of range");
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    const int nc = a.channels();
    auto pa = a.data();
    auto pb = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = pa[i * static_cast<std::size_t>(nc) + static_cast<std::size_t>(channel)];
        y[i] = pb[i * static_cast<std::size_t>(nc) + static_cast<std::size_t>(channel)];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto taps = gaussian_taps();
    const auto mx = filter_valid(x, w, h, taps);
    const auto my = filter_valid(y, w, h, taps);
    const auto sxx = filter_valid(xx, w, h, taps);
    const auto syy = filter_valid(yy, w, h, taps);
    const auto sxy = filter_valid(xy, w, h, taps);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cxy = sxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
    }
    return total / static_cast<double>(mx.size());
}

double ssim(const Image& a, const Image& b)
{
    check_same(a, b);
    double sum = 0.0;
    for (int c = 0; c < a.channels(); ++c)
        sum += ssim_channel(a, b, c);
    return sum / a.channels();
}

double ssim(const RadianceImage& a, const RadianceImage& b)
{
    return ssim(a.pixels, b.pixels);
}

MetricsReport evaluate(const RadianceImage& predicted, const RadianceImage& truth, const TonemapParams& params)
{
    check_same(predicted.pixels, truth.pixels);
    const RadianceImage tp = tonemap(predicted, params);
    const RadianceImage tt = tonemap(truth, params);
    return MetricsReport{psnr(tp, tt), ssim(tp, tt), psnr(predicted, truth), ssim(predicted, truth)};
}

MetricsReport average(const std::vector<SceneMetrics>& rows)
{
    MetricsReport m;
    if (rows.empty())
        return m;
    for (const auto& r : rows) {
        m.psnr_t += r.metrics.psnr_t;
        m.ssim_t += r.metrics.ssim_t;
        m.psnr_l += r.metrics.psnr_l;
        m.ssim_l += r.metrics.ssim_l;
    }
    const double n = static_cast<double>(rows.size());
    return {m.psnr_t / n, m.ssim_t / n, m.psnr_l / n, m.ssim_l / n};
}

void write_report_csv(const std::filesystem::path& path, const std::vector<SceneMetrics>& rows)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write report " + path.string());
    out << "scene,psnr_t,ssim_t,psnr_l,ssim_l\n" << std::setprecision(10);
    auto line = [&](const std::string& name, const MetricsReport& m) {
        out << name << ',' << m.psnr_t << ',' << m.ssim_t << ',' << m.psnr_l << ',' << m.ssim_l << '\n';
    };
    for (const auto& r : rows)
        line(r.scene, r.metrics);
    line("mean", average(rows));
}

} // namespace hdrforge

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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hdrforge/error.hpp"
#include "hdrforge/metrics.hpp"

using namespace hdrforge;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed)
{
    Image img(w, h, c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : img.data())
        v = u(rng);
    return img;
}

// Direct windowed SSIM: every valid 11x11 window summed from scratch.
double ssim_oracle(const Image& a, const Image& b)
{
    double g[11], gs = 0;
    for (int i = 0; i < 11; ++i) {
        g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
        gs += g[i];
    }
    const double C1 = 1e-4, C2 = 9e-4;
    double total = 0;
    for (int c = 0; c < a.channels(); ++c) {
        double acc = 0;
        int n = 0;
        for (int y = 0; y + 11 <= a.height(); ++y)
            for (int x = 0; x + 11 <= a.width(); ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double w = g[i] * g[j] / (gs * gs);
                        const double va = a.at(y + i, x + j, c), vb = b.at(y + i, x + j, c);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
                acc += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                ++n;
            }
        total += acc / n;
    }
    return total / a.channels();
}

} // namespace

TEST_CASE("psnr closed forms")
{
    Image a(32, 24, 3, 0.25f);
    CHECK(psnr(a, a) == kPsnrCap);
    std::mt19937 rng(2);
    for (double d : {0.1, 0.01}) {
        Image b = a;
        // alternating signs: every pixel differs by exactly d in magnitude
        for (float& v : b.data())
            v = static_cast<float>(0.25 + ((rng() & 1) ? d : -d));
        const double expect = d == 0.1 ? 20.0 : 40.0;
        CHECK(std::abs(psnr(a, b) - expect) < 1e-5);
        CHECK(psnr(a, b) == psnr(b, a));
    }
    double prev = 1e9;
    for (double d = 0.001; d < 0.5; d *= 1.7) {
        Image b = a;
        for (float& v : b.data())
            v = static_cast<float>(0.25 + d);
        const double p = psnr(a, b);
        CHECK(p < prev);
        prev = p;
    }
    CHECK_THROWS_AS(psnr(a, Image(32, 25, 3)), ShapeError);
}

TEST_CASE("ssim matches direct summation")
{
    for (int trial = 0; trial < 20; ++trial) {
        const int w = 11 + trial * 2, h = 30 - trial / 2;
        Image a = random_image(w, h, 3, 100 + trial);
        Image b = a;
        std::mt19937_64 rng(200 + trial);
        std::normal_distribution<float> n(0.0f, 0.02f + 0.02f * (trial % 5));
        for (float& v : b.data())
            v = std::clamp(v + n(rng), 0.0f, 1.0f);
        const double fast = ssim(a, b);
        CHECK(std::abs(fast - ssim_oracle(a, b)) < 1e-6);
        CHECK(fast == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    }
}

TEST_CASE("ssim trivia")
{
    const Image a = random_image(40, 30, 3, 1);
    CHECK(ssim(a, a) == 1.0);
    Image neg = a;
    for (float& v : neg.data())
        v = 1.0f - v;
    CHECK(ssim(a, neg) < 0.2);
    CHECK_THROWS_AS(ssim(Image(10, 30, 1), Image(10, 30, 1)), ShapeError);
    CHECK_THROWS_AS(ssim(a, Image(40, 31, 3)), ShapeError);
}

TEST_CASE("evaluate reports tonemapped and linear pairs")
{
    RadianceImage t{random_image(24, 20, 3, 5)};
    for (float& v : t.pixels.data())
        v = v * v * v;
    const auto same = evaluate(t, t);
    CHECK(same.psnr_t == kPsnrCap);
    CHECK(same.psnr_l == kPsnrCap);
    CHECK(same.ssim_t == 1.0);
    CHECK(same.ssim_l == 1.0);

    RadianceImage p = t;
    for (std::size_t i = 0; i < p.pixels.size(); i += 5)
        p.pixels.data()[i] = std::min(1.0f, p.pixels.data()[i] * 1.3f + 0.001f);
    const auto r = evaluate(p, t);
    // float64 recomputation of the four numbers
    double se_l = 0, se_t = 0;
    Image tp(24, 20, 3), tt(24, 20, 3);
    for (std::size_t i = 0; i < p.pixels.size(); ++i) {
        const double a = p.pixels.data()[i], b = t.pixels.data()[i];
        const double ta = std::log1p(5000 * a) / std::log1p(5000.0), tb = std::log1p(5000 * b) / std::log1p(5000.0);
        se_l += (a - b) * (a - b);
        se_t += (ta - tb) * (ta - tb);
        tp.data()[i] = static_cast<float>(ta);
        tt.data()[i] = static_cast<float>(tb);
    }
    const double n = static_cast<double>(p.pixels.size());
    CHECK(r.psnr_l == doctest::Approx(10 * std::log10(n / se_l)).epsilon(1e-9));
    CHECK(r.psnr_t == doctest::Approx(10 * std::log10(n / se_t)).epsilon(1e-5));
    CHECK(r.ssim_l == doctest::Approx(ssim_oracle(p.pixels, t.pixels)).epsilon(1e-6));
    CHECK(r.ssim_t == doctest::Approx(ssim_oracle(tp, tt)).epsilon(1e-6));
}

TEST_CASE("report csv has a mean row")
{
    const auto path = std::filesystem::temp_directory_path() / "hdrforge_report.csv";
    write_report_csv(path, {{"a", {30, 0.9, 40, 0.95}}, {"b", {20, 0.7, 30, 0.85}}});
    std::ifstream in(path);
    std::string header, a, b, mean;
    std::getline(in, header);
    std::getline(in, a);
    std::getline(in, b);
    std::getline(in, mean);
    CHECK(header == "scene,psnr_t,ssim_t,psnr_l,ssim_l");
    CHECK(mean.rfind("mean,25", 0) == 0);
    const auto avg = average({{"a", {30, 0.9, 40, 0.95}}, {"b", {20, 0.7, 30, 0.85}}});
    CHECK(avg.ssim_t == doctest::Approx(0.8));
}

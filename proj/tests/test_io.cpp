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
#include <cstring>
#include <random>

#include "hdrforge/error.hpp"
#include "hdrforge/image_io.hpp"
#include "hdrforge/patch_store.hpp"

using namespace hdrforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / "hdrforge_test_io";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream(p) << s;
}

Image random_image(int w, int h, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f)
{
    Image img(w, h, 3);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(lo, hi);
    for (float& v : img.data())
        v = u(rng);
    return img;
}

std::vector<PatchRecord> sample_records(int n)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<PatchRecord> recs;
    for (int i = 0; i < n; ++i) {
        PatchRecord r;
        r.k = 2 + i % 2;
        r.size = 8;
        r.inputs.resize(static_cast<std::size_t>(r.k) * 8 * 8 * 6);
        r.target.resize(8 * 8 * 3);
        for (auto& v : r.inputs)
            v = u(rng);
        for (auto& v : r.target)
            v = u(rng);
        // awkward floats survive bit for bit
        r.target[0] = std::nextafter(0.5f, 1.0f);
        r.target[1] = 1e-39f;
        r.motion_flag = i % 3 == 0;
        r.provenance = "scene" + std::to_string(i) + "@0,64#" + std::to_string(i % 8);
        recs.push_back(std::move(r));
    }
    return recs;
}

} // namespace

TEST_CASE("LDR round trips at 8 and 16 bits")
{
    const Image img = random_image(23, 17, 1);
    for (auto [name, bits] : {std::pair{"a.png", 8}, {"a16.png", 16}, {"a.tif", 8}, {"a16.tif", 16}}) {
        write_ldr(scratch(name), img, bits);
        const Image back = read_ldr(scratch(name));
        REQUIRE(back.same_shape(img));
        const double levels = bits == 8 ? 255.0 : 65535.0;
        for (std::size_t i = 0; i < img.size(); ++i)
            REQUIRE(back.data()[i] == static_cast<float>(std::round(img.data()[i] * levels) / levels));
    }
    CHECK_THROWS_AS(read_ldr(scratch("missing.png")), DataError);
    CHECK_THROWS_AS(write_ldr(scratch("x.png"), img, 12), ParameterError);
}

TEST_CASE("RGBE decode follows the shared-exponent formula")
{
    // hand-built file: 2 pixels, flat scanline
    const auto p = scratch("tiny.hdr");
    {
        std::ofstream out(p, std::ios::binary);
        out << "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n";
        const unsigned char px[] = {128, 64, 0, 129, 0, 0, 0, 0};
        out.write(reinterpret_cast<const char*>(px), sizeof px);
    }
    const Image img = read_rgbe(p);
    REQUIRE(img.width() == 2);
    // (m + 0.5) * 2^(e - 136)
    CHECK(img.at(0, 0, 0) == doctest::Approx(128.5 / 128.0));
    CHECK(img.at(0, 0, 1) == doctest::Approx(64.5 / 128.0));
    CHECK(img.at(0, 0, 2) == doctest::Approx(0.5 / 128.0));
    CHECK(img.at(0, 1, 0) == 0.0f);
}

TEST_CASE("RGBE round trips through RLE and flat scanlines")
{
    for (int w : {5, 8, 64, 300}) {
        Image img = random_image(w, 7, static_cast<std::uint64_t>(w), 0.0f, 4.0f);
        // long runs exercise the run-length path
        for (int x = 0; x < w / 2; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(3, x, c) = 0.75f;
        img.at(2, 0, 0) = 0.0f;
        img.at(2, 0, 1) = 0.0f;
        img.at(2, 0, 2) = 0.0f;
        write_rgbe(scratch("rt.hdr"), img);
        const Image back = read_rgbe(scratch("rt.hdr"));
        REQUIRE(back.same_shape(img));
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < w; ++x) {
                const float peak = std::max({img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)});
                for (int c = 0; c < 3; ++c)
                    REQUIRE(std::abs(back.at(y, x, c) - img.at(y, x, c)) <= peak / 128.0f);
            }
        CHECK(back.at(2, 0, 0) == 0.0f);
        CHECK(back.at(3, 0, 0) == back.at(3, w / 2 - 1, 0));
    }
    if (fs::exists(scratch("rt.hdr"))) {
        fs::resize_file(scratch("rt.hdr"), fs::file_size(scratch("rt.hdr")) - 50);
        CHECK_THROWS_AS(read_rgbe(scratch("rt.hdr")), DataError);
    }
    write_text(scratch("bad.hdr"), "P6\n2 2\n");
    CHECK_THROWS_AS(read_rgbe(scratch("bad.hdr")), DataError);
}

TEST_CASE("raw float images are bit exact")
{
    const Image img = random_image(9, 4, 7, -3.0f, 3.0f);
    write_raw_float(scratch("a.raw"), img);
    CHECK(read_raw_float(scratch("a.raw")) == img);
    fs::resize_file(scratch("a.raw"), 20);
    CHECK_THROWS_AS(read_raw_float(scratch("a.raw")), DataError);
}

TEST_CASE("exposure files")
{
    write_text(scratch("exp.txt"), "-2\n0.0\n\n  2.5 \n");
    CHECK(read_exposures(scratch("exp.txt")) == std::vector<double>{-2.0, 0.0, 2.5});
    write_exposures(scratch("exp2.txt"), {-1.5, 1.0 / 3.0});
    CHECK(read_exposures(scratch("exp2.txt")) == std::vector<double>{-1.5, 1.0 / 3.0});
    write_text(scratch("bad.txt"), "-2\nbright\n");
    CHECK_THROWS_AS(read_exposures(scratch("bad.txt")), DataError);
    write_text(scratch("empty.txt"), "\n");
    CHECK_THROWS_AS(read_exposures(scratch("empty.txt")), DataError);
}

TEST_CASE("CRF csv in both layouts")
{
    std::string three = "r,g,b\n", four;
    for (int i = 0; i < 256; ++i) {
        const double x = i / 255.0;
        three += std::to_string(x * x) + "," + std::to_string(x) + "," + std::to_string(std::sqrt(x)) + "\n";
        four += std::to_string(x) + "," + std::to_string(x * x) + "," + std::to_string(x * x) + "," +
                std::to_string(x * x) + "\n";
    }
    write_text(scratch("crf3.csv"), three);
    write_text(scratch("crf4.csv"), four);
    const auto a = read_crf_csv(scratch("crf3.csv"));
    CHECK(a.apply(0, 0.5) == doctest::Approx(0.25).epsilon(1e-3));
    CHECK(a.apply(1, 0.5) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(a.apply(2, 0.25) == doctest::Approx(0.5).epsilon(1e-2));
    const auto b = read_crf_csv(scratch("crf4.csv"));
    CHECK(b.apply(2, 0.5) == doctest::Approx(0.25).epsilon(1e-3));
    write_text(scratch("crf_short.csv"), "0,0,0\n1,1,1\n");
    CHECK_THROWS_AS(read_crf_csv(scratch("crf_short.csv")), CalibrationError);
    write_text(scratch("crf_cols.csv"), "0,0\n1,1\n");
    CHECK_THROWS_AS(read_crf_csv(scratch("crf_cols.csv")), CalibrationError);
}

TEST_CASE("homography sidecar")
{
    const std::vector<std::array<double, 9>> rows{{1, 0, 0, 0, 1, 0, 0, 0, 1}, {1.01, 0.002, -3.5, -0.001, 0.99, 2.25, 1e-5, -2e-6, 1}};
    write_homographies(scratch("h.txt"), rows);
    CHECK(read_homographies(scratch("h.txt")) == rows);
    write_text(scratch("hbad.txt"), "1 0 0 0 1 0 0 0\n");
    CHECK_THROWS_AS(read_homographies(scratch("hbad.txt")), DataError);
}

TEST_CASE("patch store round trip is bit identical")
{
    const auto recs = sample_records(7);
    write_patch_store(scratch("p.hdrp"), recs);
    const auto back = read_patch_store(scratch("p.hdrp"));
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i] == recs[i]);
        CHECK(std::memcmp(back[i].target.data(), recs[i].target.data(), recs[i].target.size() * 4) == 0);
    }
    PatchStoreReader reader(scratch("p.hdrp"));
    CHECK(reader.size() == 7);
    CHECK(reader.read(5) == recs[5]);
    CHECK(reader.read(0) == recs[0]);
    CHECK_THROWS_AS(reader.read(7), ParameterError);

    // file layout: header, then the first record's k and size
    std::ifstream in(scratch("p.hdrp"), std::ios::binary);
    char head[15];
    in.read(head, 15);
    CHECK(std::string(head, 4) == "HDRP");
    std::uint32_t version, count;
    std::memcpy(&version, head + 4, 4);
    std::memcpy(&count, head + 8, 4);
    CHECK(version == 1);
    CHECK(count == 7);
    CHECK(static_cast<int>(head[12]) == 2);
}

TEST_CASE("patch store corruption is reported with offsets")
{
    const auto recs = sample_records(3);
    write_patch_store(scratch("c.hdrp"), recs);
    const auto size = fs::file_size(scratch("c.hdrp"));
    fs::copy_file(scratch("c.hdrp"), scratch("t.hdrp"), fs::copy_options::overwrite_existing);
    fs::resize_file(scratch("t.hdrp"), size - 3);
    try {
        PatchStoreReader r(scratch("t.hdrp"));
        FAIL("truncation not detected");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    {
        std::fstream f(scratch("c.hdrp"), std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("HDRX", 4);
    }
    CHECK_THROWS_AS(PatchStoreReader(scratch("c.hdrp")), DataError);
    {
        std::ofstream f(scratch("c.hdrp"), std::ios::binary | std::ios::app);
        f.write("junk", 4);
    }
    write_patch_store(scratch("d.hdrp"), recs);
    {
        std::ofstream f(scratch("d.hdrp"), std::ios::binary | std::ios::app);
        f.write("junk", 4);
    }
    CHECK_THROWS_AS(PatchStoreReader(scratch("d.hdrp")), DataError);
}

TEST_CASE("patch store writer validates records")
{
    PatchStoreWriter w(scratch("w.hdrp"));
    auto r = sample_records(1).front();
    r.target.pop_back();
    CHECK_THROWS_AS(w.write(r), ShapeError);
    w.close();
    CHECK_THROWS_AS(w.write(sample_records(1).front()), StateError);
    CHECK(PatchStoreReader(scratch("w.hdrp")).size() == 0);
}

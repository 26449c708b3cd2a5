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

#include "hdrforge/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "hdrforge/error.hpp"

namespace hdrforge {

namespace {

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in)
{
    std::ifstream in(path, mode);
    if (!in)
        throw DataError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out)
{
    std::ofstream out(path, mode);
    if (!out)
        throw DataError("cannot write " + path.string());
    return out;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void put_u32(std::ostream& out, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in)
{
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError("unexpected end of file");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::array<unsigned char, 4> to_rgbe(float r, float g, float b)
{
    const float v = std::max({r, g, b});
    if (!(v > 1e-32f))
        return {0, 0, 0, 0};
    int e = 0;
    const float scale = std::frexp(v, &e) * 256.0f / v;
    auto q = [&](float c) { return static_cast<unsigned char>(std::clamp(c * scale, 0.0f, 255.0f)); };
    return {q(r), q(g), q(b), static_cast<unsigned char>(e + 128)};
}

void from_rgbe(const unsigned char* rgbe, float* rgb)
{
    if (rgbe[3] == 0) {
        rgb[0] = rgb[1] = rgb[2] = 0.0f;
        return;
    }
    const float f = std::ldexp(1.0f, static_cast<int>(rgbe[3]) - (128 + 8));
    for (int c = 0; c < 3; ++c)
        rgb[c] = (static_cast<float>(rgbe[c]) + 0.5f) * f;
}

// New-style RLE of one channel of a scanline.
void write_rle_channel(std::ostream& out, const unsigned char* data, int n)
{
    constexpr int kMinRun = 4;
    int cur = 0;
    while (cur < n) {
        int beg_run = cur;
        int run_count = 0, old_run_count = 0;
        while (run_count < kMinRun && beg_run < n) {
            beg_run += run_count;
            old_run_count = run_count;
            run_count = 1;
            while (beg_run + run_count < n && run_count < 127 && data[beg_run] == data[beg_run + run_count])
                ++run_count;
        }
        // short run just before a long run: emit it as a run as well
        if (old_run_count > 1 && old_run_count == beg_run - cur) {
            const unsigned char buf[2] = {static_cast<unsigned char>(128 + old_run_count), data[cur]};
            out.write(reinterpret_cast<const char*>(buf), 2);
            cur = beg_run;
        }
        while (cur < beg_run) {
            const int nonrun = std::min(128, beg_run - cur);
            const unsigned char count = static_cast<unsigned char>(nonrun);
            out.write(reinterpret_cast<const char*>(&count), 1);
            out.write(reinterpret_cast<const char*>(data + cur), nonrun);
            cur += nonrun;
        }
        if (run_count >= kMinRun) {
            const unsigned char buf[2] = {static_cast<unsigned char>(128 + run_count), data[beg_run]};
            out.write(reinterpret_cast<const char*>(buf), 2);
            cur += run_count;
        }
    }
}

} // namespace

Image read_ldr(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw DataError("missing image " + path.string());
    const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty())
        throw DataError("cannot decode image " + path.string());
    double maxv = 0.0;
    switch (raw.depth()) {
    case CV_8U:
        maxv = 255.0;
        break;
    case CV_16U:
        maxv = 65535.0;
        break;
    default:
        throw DataError(path.string() + ": only 8- and 16-bit images are supported");
    }
    cv::Mat rgb;
    switch (raw.channels()) {
    case 1:
        cv::merge(std::vector<cv::Mat>{raw, raw, raw}, rgb);
        break;
    case 3:
        rgb = raw;
        break;
    case 4: {
        std::vector<cv::Mat> ch;
        cv::split(raw, ch);
        ch.pop_back();
        cv::merge(ch, rgb);
        break;
    }
    default:
        throw DataError(path.string() + ": unsupported channel count");
    }
    cv::Mat f;
    // integer codes convert to float exactly; divide in double so the result
    // is the correctly rounded q / maxv
    rgb.convertTo(f, CV_32FC3);
    Image out(f.cols, f.rows, 3);
    for (int y = 0; y < f.rows; ++y) {
        const auto* row = f.ptr<cv::Vec3f>(y);
        for (int x = 0; x < f.cols; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = static_cast<float>(row[x][2 - c] / maxv); // OpenCV stores BGR
    }
    return out;
}

void write_ldr(const std::filesystem::path& path, const Image& image, int bits)
{
    if (bits != 8 && bits != 16)
        throw ParameterError("LDR bit depth must be 8 or 16");
    if (image.channels() != 3)
        throw ShapeError("write_ldr expects an RGB image");
    const double maxv = bits == 8 ? 255.0 : 65535.0;
    cv::Mat m(image.height(), image.width(), bits == 8 ? CV_8UC3 : CV_16UC3);
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::round(std::clamp<double>(image.at(y, x, c), 0.0, 1.0) * maxv);
                if (bits == 8)
                    m.at<cv::Vec3b>(y, x)[2 - c] = static_cast<unsigned char>(v);
                else
                    m.at<cv::Vec3w>(y, x)[2 - c] = static_cast<std::uint16_t>(v);
            }
    if (!cv::imwrite(path.string(), m))
        throw DataError("cannot write " + path.string());
}

std::vector<double> read_exposures(const std::filesystem::path& path)
{
    auto in = open_in(path);
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#')
            continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(line, &used));
            if (used != line.size())
                throw std::invalid_argument(line);
        } catch (const std::exception&) {
            throw DataError(path.string() + ": malformed exposure bias '" + line + "'");
        }
    }
    if (out.empty())
        throw DataError(path.string() + ": no exposure biases");
    return out;
}

void write_exposures(const std::filesystem::path& path, const std::vector<double>& biases)
{
    auto out = open_out(path);
    out.precision(17);
    for (double b : biases)
        out << b << '\n';
}

CrfTable read_crf_csv(const std::filesystem::path& path)
{
    auto in = open_in(path);
    std::array<std::vector<double>, 3> channels;
    std::vector<double> intensity;
    std::string line;
    int columns = 0;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0])))
            continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            try {
                vals.push_back(std::stod(trim(cell)));
            } catch (const std::exception&) {
                throw CalibrationError(path.string() + ": bad number '" + cell + "'");
            }
        if (columns == 0)
            columns = static_cast<int>(vals.size());
        if ((columns != 3 && columns != 4) || static_cast<int>(vals.size()) != columns)
            throw CalibrationError(path.string() + ": expected 3 or 4 columns per row");
        const std::size_t off = columns == 4 ? 1 : 0;
        if (columns == 4)
            intensity.push_back(vals[0]);
        for (std::size_t c = 0; c < 3; ++c)
            channels[c].push_back(vals[off + c]);
    }
    return CrfTable(std::move(channels), std::move(intensity));
}

Image read_rgbe(const std::filesystem::path& path)
{
    auto in = open_in(path, std::ios::binary);
    std::string line;
    std::getline(in, line);
    if (line.rfind("#?", 0) != 0)
        throw DataError(path.string() + ": not a Radiance HDR file");
    bool format_ok = true;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            break;
        if (line.rfind("FORMAT=", 0) == 0)
            format_ok = trim(line) == "FORMAT=32-bit_rle_rgbe";
    }
    if (!format_ok)
        throw DataError(path.string() + ": unsupported pixel format (only 32-bit_rle_rgbe)");
    std::getline(in, line);
    int height = 0, width = 0;
    char ysign = 0, xsign = 0;
    if (std::sscanf(line.c_str(), "%cY %d %cX %d", &ysign, &height, &xsign, &width) != 4 || ysign != '-' ||
        xsign != '+' || width <= 0 || height <= 0)
        throw DataError(path.string() + ": unsupported resolution line '" + line + "'");

    Image out(width, height, 3);
    std::vector<unsigned char> scan(static_cast<std::size_t>(width) * 4);
    auto fail = [&](const std::string& what) {
        return DataError(path.string() + ": " + what + " at byte " + std::to_string(static_cast<long long>(in.tellg())));
    };
    for (int y = 0; y < height; ++y) {
        unsigned char head[4];
        if (!in.read(reinterpret_cast<char*>(head), 4))
            throw fail("truncated scanline");
        const bool rle = width >= 8 && width <= 32767 && head[0] == 2 && head[1] == 2 && !(head[2] & 0x80);
        if (!rle) {
            std::memcpy(scan.data(), head, 4);
            if (width > 1 && !in.read(reinterpret_cast<char*>(scan.data() + 4), static_cast<std::streamsize>(width - 1) * 4))
                throw fail("truncated flat scanline");
        } else {
            if (((head[2] << 8) | head[3]) != width)
                throw fail("scanline width mismatch");
            std::vector<unsigned char> planes(static_cast<std::size_t>(width) * 4);
            for (int c = 0; c < 4; ++c) {
                unsigned char* dst = planes.data() + static_cast<std::size_t>(c) * width;
                int x = 0;
                while (x < width) {
                    unsigned char count = 0;
                    if (!in.read(reinterpret_cast<char*>(&count), 1))
                        throw fail("truncated run");
                    if (count > 128) {
                        const int n = count - 128;
                        unsigned char v = 0;
                        if (n > width - x || !in.read(reinterpret_cast<char*>(&v), 1))
                            throw fail("bad run");
                        std::fill(dst + x, dst + x + n, v);
                        x += n;
                    } else {
                        if (count == 0 || count > width - x ||
                            !in.read(reinterpret_cast<char*>(dst + x), count))
                            throw fail("bad literal run");
                        x += count;
                    }
                }
            }
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < 4; ++c)
                    scan[static_cast<std::size_t>(x) * 4 + static_cast<std::size_t>(c)] =
                        planes[static_cast<std::size_t>(c) * width + static_cast<std::size_t>(x)];
        }
        for (int x = 0; x < width; ++x)
            from_rgbe(scan.data() + static_cast<std::size_t>(x) * 4, &out.at(y, x, 0));
    }
    return out;
}

void write_rgbe(const std::filesystem::path& path, const Image& rgb)
{
    if (rgb.channels() != 3)
        throw ShapeError("write_rgbe expects an RGB image");
    auto out = open_out(path, std::ios::binary);
    const int w = rgb.width(), h = rgb.height();
    out << "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " << h << " +X " << w << "\n";
    const bool rle = w >= 8 && w <= 32767;
    std::vector<unsigned char> planes(static_cast<std::size_t>(w) * 4);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto e = to_rgbe(rgb.at(y, x, 0), rgb.at(y, x, 1), rgb.at(y, x, 2));
            for (int c = 0; c < 4; ++c) {
                if (rle)
                    planes[static_cast<std::size_t>(c) * w + static_cast<std::size_t>(x)] = e[static_cast<std::size_t>(c)];
                else
                    planes[static_cast<std::size_t>(x) * 4 + static_cast<std::size_t>(c)] = e[static_cast<std::size_t>(c)];
            }
        }
        if (!rle) {
            out.write(reinterpret_cast<const char*>(planes.data()), static_cast<std::streamsize>(planes.size()));
            continue;
        }
        const unsigned char head[4] = {2, 2, static_cast<unsigned char>(w >> 8), static_cast<unsigned char>(w & 0xff)};
        out.write(reinterpret_cast<const char*>(head), 4);
        for (int c = 0; c < 4; ++c)
            write_rle_channel(out, planes.data() + static_cast<std::size_t>(c) * w, w);
    }
    if (!out)
        throw DataError("failed writing " + path.string());
}

void write_raw_float(const std::filesystem::path& path, const Image& image)
{
    static_assert(std::endian::native == std::endian::little, "raw float dumps assume a little-endian host");
    auto out = open_out(path, std::ios::binary);
    put_u32(out, static_cast<std::uint32_t>(image.width()));
    put_u32(out, static_cast<std::uint32_t>(image.height()));
    put_u32(out, static_cast<std::uint32_t>(image.channels()));
    out.write(reinterpret_cast<const char*>(image.data().data()),
              static_cast<std::streamsize>(image.size() * sizeof(float)));
}

Image read_raw_float(const std::filesystem::path& path)
{
    auto in = open_in(path, std::ios::binary);
    const auto w = get_u32(in), h = get_u32(in), c = get_u32(in);
    std::vector<float> data(static_cast<std::size_t>(w) * h * c);
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float))))
        throw DataError(path.string() + ": truncated raw float image");
    return Image(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), std::move(data));
}

std::vector<std::array<double, 9>> read_homographies(const std::filesystem::path& path)
{
    auto in = open_in(path);
    std::vector<std::array<double, 9>> rows;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#')
            continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::stringstream ss(line);
        std::array<double, 9> m{};
        for (double& v : m)
            if (!(ss >> v))
                throw DataError(path.string() + ": homography rows need 9 numbers");
        rows.push_back(m);
    }
    return rows;
}

void write_homographies(const std::filesystem::path& path, const std::vector<std::array<double, 9>>& rows)
{
    auto out = open_out(path);
    out.precision(17);
    for (const auto& m : rows) {
        for (std::size_t i = 0; i < 9; ++i)
            out << (i ? " " : "") << m[i];
        out << '\n';
    }
}

} // namespace hdrforge

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

#include "hdrforge/merge.hpp"

#include <algorithm>
#include <string>

#include "hdrforge/error.hpp"
#include "hdrforge/parallel.hpp"

namespace hdrforge {

ExposureStack arrange_slots(const ExposureStack& stack, int k)
{
    validate_stack(stack);
    if (k < 1)
        throw ParameterError("slot count must be positive");
    const int n = static_cast<int>(stack.size());
    if (n > k)
        throw ParameterError("stack has " + std::to_string(n) + " frames but the network takes " +
                             std::to_string(k));
    const int ref = stack.reference_index;
    const int mid = k / 2;
    ExposureStack out;
    out.frames.resize(static_cast<std::size_t>(k));
    out.reference_index = mid;
    for (int s = 0; s < k; ++s) {
        // offset from the reference, clamped to the frames that exist
        const int src = std::clamp(ref + (s - mid), 0, n - 1);
        out.frames[static_cast<std::size_t>(s)] = stack.frames[static_cast<std::size_t>(src)];
    }
    normalize_exposure_times(out);
    return out;
}

Tensor reflect_pad(const Tensor& planes, int pad_bottom, int pad_right)
{
    if (planes.rank() != 4)
        throw ShapeError("reflect_pad expects {k, H, W, C}, got " + shape_string(planes.shape()));
    const int k = planes.dim(0), h = planes.dim(1), w = planes.dim(2), c = planes.dim(3);
    if (pad_bottom < 0 || pad_right < 0)
        throw ParameterError("padding must be non-negative");
    if ((pad_bottom > 0 && pad_bottom >= h) || (pad_right > 0 && pad_right >= w))
        throw ShapeError("reflection padding must be smaller than the frame");
    if (pad_bottom == 0 && pad_right == 0)
        return planes;
    const int H = h + pad_bottom, W = w + pad_right;
    Tensor out({k, H, W, c});
    for (int f = 0; f < k; ++f)
        for (int y = 0; y < H; ++y) {
            const int sy = y < h ? y : 2 * (h - 1) - y;
            for (int x = 0; x < W; ++x) {
                const int sx = x < w ? x : 2 * (w - 1) - x;
                const float* s = planes.data() + ((static_cast<std::size_t>(f) * h + sy) * w + sx) * c;
                float* d = out.data() + ((static_cast<std::size_t>(f) * H + y) * W + x) * c;
                std::copy(s, s + c, d);
            }
        }
    return out;
}

std::vector<int> tile_origins(int extent, int tile, int overlap)
{
    if (tile <= overlap || overlap < 0)
        throw ParameterError("tile must be larger than its overlap");
    if (extent <= tile)
        return {0};
    std::vector<int> o;
    for (int p = 0; p + tile < extent; p += tile - overlap)
        o.push_back(p);
    o.push_back(extent - tile);
    return o;
}

namespace {

int round_up(int v, int m)
{
    return (v + m - 1) / m * m;
}

Tensor crop_planes(const Tensor& planes, int y0, int x0, int h, int w)
{
    const int k = planes.dim(0), H = planes.dim(1), W = planes.dim(2), c = planes.dim(3);
    Tensor out({k, h, w, c});
    for (int f = 0; f < k; ++f)
        for (int y = 0; y < h; ++y) {
            const float* s = planes.data() + ((static_cast<std::size_t>(f) * H + y0 + y) * W + x0) * c;
            std::copy(s, s + static_cast<std::size_t>(w) * c,
                      out.data() + (static_cast<std::size_t>(f) * h + y) * w * c);
        }
    return out;
}

Tensor pad_to_divisibility(const Tensor& planes, int d)
{
    const int h = planes.dim(1), w = planes.dim(2);
    return reflect_pad(planes, round_up(h, d) - h, round_up(w, d) - w);
}

void check_planes(const Network<float>& net, const Tensor& planes)
{
    if (planes.rank() != 4 || planes.dim(3) != net.spec().input_channels)
        throw ShapeError("network input must be {k, H, W, 6}, got " + shape_string(planes.shape()));
    if (planes.dim(0) != net.spec().k_inputs)
        throw ShapeError("network takes " + std::to_string(net.spec().k_inputs) + " frames, input has " +
                         std::to_string(planes.dim(0)));
}

// Weight of position i in a tile of length n; ramps only where a neighbour overlaps.
float ramp(int i, int n, int overlap, bool ramp_low, bool ramp_high)
{
    float w = 1.0f;
    if (overlap > 0) {
        if (ramp_low)
            w = std::min(w, (i + 0.5f) / overlap);
        if (ramp_high)
            w = std::min(w, (n - i - 0.5f) / overlap);
    }
    return w;
}

} // namespace

RadianceImage infer_whole(const Network<float>& net, const Tensor& planes)
{
    check_planes(net, planes);
    const int h = planes.dim(1), w = planes.dim(2);
    const Tensor out = net.infer(pad_to_divisibility(planes, net.spec().divisibility()));
    const int W = out.dim(1);
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        std::copy(out.data() + static_cast<std::size_t>(y) * W * 3, out.data() + (static_cast<std::size_t>(y) * W + w) * 3,
                  img.data().data() + static_cast<std::size_t>(y) * w * 3);
    return RadianceImage{std::move(img)};
}

RadianceImage infer_tiled(const Network<float>& net, const Tensor& planes, const TileOptions& o)
{
    check_planes(net, planes);
    const int d = net.spec().divisibility();
    if (o.tile <= 0 || o.tile % d != 0)
        throw ParameterError("tile size " + std::to_string(o.tile) + " is not a multiple of " + std::to_string(d));
    const int h = planes.dim(1), w = planes.dim(2);
    const Tensor padded = pad_to_divisibility(planes, d);
    const int H = padded.dim(1), W = padded.dim(2);
    const int th = std::min(o.tile, H), tw = std::min(o.tile, W);
    const auto ys = tile_origins(H, th, o.overlap), xs = tile_origins(W, tw, o.overlap);

    std::vector<Tensor> outs(ys.size() * xs.size());
    parallel_for(outs.size(), [&](std::size_t t) {
        outs[t] = net.infer(crop_planes(padded, ys[t / xs.size()], xs[t % xs.size()], th, tw));
    });

    std::vector<double> acc(static_cast<std::size_t>(H) * W * 3, 0.0), weight(static_cast<std::size_t>(H) * W, 0.0);
    for (std::size_t t = 0; t < outs.size(); ++t) {
        const std::size_t ty = t / xs.size(), tx = t % xs.size();
        const int y0 = ys[ty], x0 = xs[tx];
        for (int y = 0; y < th; ++y) {
            const float wy = ramp(y, th, o.overlap, ty > 0, ty + 1 < ys.size());
            for (int x = 0; x < tw; ++x) {
                const float wgt = wy * ramp(x, tw, o.overlap, tx > 0, tx + 1 < xs.size());
                const std::size_t p = static_cast<std::size_t>(y0 + y) * W + x0 + x;
                const float* v = outs[t].data() + (static_cast<std::size_t>(y) * tw + x) * 3;
                for (int c = 0; c < 3; ++c)
                    acc[p * 3 + c] += double(wgt) * v[c];
                weight[p] += wgt;
            }
        }
    }
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * W + x;
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = static_cast<float>(acc[p * 3 + c] / weight[p]);
        }
    return RadianceImage{std::move(img)};
}

MergeResult merge_stack(const ExposureStack& stack, const Network<float>& net, const MergeOptions& o)
{
    validate_stack(stack);
    MergeResult r;
    ExposureStack aligned = stack;
    if (o.homographies || (o.align && stack.size() > 1)) {
        auto report = align_stack(stack, o.alignment, o.homographies);
        aligned = std::move(report.stack);
        r.warnings = std::move(report.warnings);
    }
    const ExposureStack slots = arrange_slots(aligned, net.spec().k_inputs);
    const NetworkInput input = build_network_input(slots, o.gamma);
    r.hdr = infer_tiled(net, input.planes, o.tiles);
    return r;
}

} // namespace hdrforge

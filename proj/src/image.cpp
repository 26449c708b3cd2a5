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

#include "hdrforge/image.hpp"

#include <cmath>
#include <string>

#include "hdrforge/error.hpp"

namespace hdrforge {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels)
{
    if (width < 0 || height < 0 || channels <= 0)
        throw ShapeError("invalid image dimensions");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data))
{
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
        throw ShapeError("image buffer does not match " + std::to_string(width) + "x" +
                         std::to_string(height) + "x" + std::to_string(channels));
}

Image Image::crop(int x, int y, int w, int h) const
{
    if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > width_ || y + h > height_)
        throw ShapeError("crop rectangle outside image");
    Image out(w, h, channels_);
    for (int r = 0; r < h; ++r) {
        const float* src = data_.data() + index(y + r, x, 0);
        std::copy(src, src + static_cast<std::size_t>(w) * channels_,
                  out.data_.data() + static_cast<std::size_t>(r) * w * channels_);
    }
    return out;
}

void validate_stack(const ExposureStack& stack)
{
    if (stack.frames.empty())
        throw ShapeError("empty exposure stack");
    if (stack.reference_index < 0 || stack.reference_index >= static_cast<int>(stack.frames.size()))
        throw ParameterError("reference index " + std::to_string(stack.reference_index) +
                             " out of range");
    const auto& first = stack.frames.front().pixels;
    for (std::size_t i = 0; i < stack.frames.size(); ++i) {
        const auto& f = stack.frames[i];
        if (!f.pixels.same_shape(first))
            throw ShapeError("frame " + std::to_string(i) + " is " + std::to_string(f.width()) + "x" +
                             std::to_string(f.height()) + ", expected " + std::to_string(first.width()) +
                             "x" + std::to_string(first.height()));
        if (i > 0 && f.exposure_bias < stack.frames[i - 1].exposure_bias)
            throw ParameterError("frames must be sorted by ascending exposure bias");
        if (!(f.exposure_time > 0.0))
            throw ParameterError("exposure time must be positive");
    }
}

void normalize_exposure_times(ExposureStack& stack)
{
    const double ref_bias = stack.reference().exposure_bias;
    for (auto& f : stack.frames)
        f.exposure_time = std::exp2(f.exposure_bias - ref_bias);
}

Image luminance(const Image& rgb)
{
    if (rgb.channels() != 3)
        throw ShapeError("luminance expects 3 channels");
    Image out(rgb.width(), rgb.height(), 1);
    auto src = rgb.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] = 0.2126f * src[3 * i] + 0.7152f * src[3 * i + 1] + 0.0722f * src[3 * i + 2];
    return out;
}

} // namespace hdrforge

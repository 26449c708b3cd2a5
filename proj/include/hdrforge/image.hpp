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

#include <cstddef>
#include <span>
#include <vector>

namespace hdrforge {

/// Interleaved float image, row-major, `channels` values per pixel.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels = 3, float fill = 0.0f);
    Image(int width, int height, int channels, std::vector<float> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
    float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    std::vector<float>& storage() { return data_; }

    bool same_shape(const Image& other) const
    {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    /// Copy of the rectangle [x, x + w) x [y, y + h).
    Image crop(int x, int y, int w, int h) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const
    {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// A low-dynamic-range frame. Pixels are normalized to [0,1]; the exposure
/// time is relative to the reference frame of the stack it belongs to.
struct LdrImage {
    Image pixels;
    double exposure_bias = 0.0; // stops
    double exposure_time = 1.0; // seconds, relative

    int width() const { return pixels.width(); }
    int height() const { return pixels.height(); }
};

/// HDR-domain RGB image bounded to [0,1].
struct RadianceImage {
    Image pixels;

    int width() const { return pixels.width(); }
    int height() const { return pixels.height(); }
};

/// Ordered bracket of frames, ascending exposure bias.
struct ExposureStack {
    std::vector<LdrImage> frames;
    int reference_index = 0;

    std::size_t size() const { return frames.size(); }
    const LdrImage& reference() const { return frames.at(static_cast<std::size_t>(reference_index)); }
};

/// Throws ShapeError / ParameterError when the stack breaks its invariants.
void validate_stack(const ExposureStack& stack);

/// Sets exposure_time = 2^(bias - reference bias) on every frame.
void normalize_exposure_times(ExposureStack& stack);

/// Rec. 709 luma of an RGB image, single channel.
Image luminance(const Image& rgb);

} // namespace hdrforge

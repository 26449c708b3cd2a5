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
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hdrforge/image.hpp"
#include "hdrforge/radiance.hpp"

namespace hdrforge {

/// Projective map between pixel-index coordinates, stored with m(2,2) = 1.
class Homography {
public:
    Homography() : m_(Eigen::Matrix3d::Identity()) {}
    /// Normalizes by m(2,2). Throws AlignmentError when m(2,2) is ~0 or the
    /// matrix is singular (|det| <= 1e-12 after normalization).
    explicit Homography(const Eigen::Matrix3d& m);

    static Homography identity() { return {}; }
    static Homography translation(double dx, double dy);
    static Homography from_array(const std::array<double, 9>& rowmajor);
    std::array<double, 9> to_array() const;

    const Eigen::Matrix3d& matrix() const { return m_; }
    Eigen::Vector2d apply(const Eigen::Vector2d& p) const;
    Homography inverse() const;
    friend Homography operator*(const Homography& a, const Homography& b);

private:
    Eigen::Matrix3d m_;
};

/// Mean distance between a(p) and b(p) over an n x n grid spanning a
/// width x height frame.
double reprojection_error(const Homography& a, const Homography& b, int width, int height, int n = 16);

struct Corner {
    double x = 0;
    double y = 0;
    double response = 0;
};

struct CornerOptions {
    int max_corners = 1000;
    /// Harris response threshold relative to the strongest response.
    double relative_threshold = 3e-4;
    /// Non-maximum suppression radius in pixels.
    int suppression_radius = 3;
    /// Corners closer than this to the border are dropped.
    int border = 7;
    double harris_k = 0.04;
};

/// Harris corners with sub-pixel (quadratic) refinement, strongest first.
/// `gray` must have one channel.
std::vector<Corner> detect_corners(const Image& gray, const CornerOptions& options = {});

struct Match {
    Eigen::Vector2d source;
    Eigen::Vector2d target;
    double score = 0;
};

struct MatchSet {
    std::vector<Match> pairs;
    std::vector<bool> inlier_mask;

    std::size_t inlier_count() const;
};

struct MatchOptions {
    /// Side of the normalized cross-correlation window (odd).
    int window = 11;
    double min_score = 0.7;
    /// Candidates farther than this (pixels) are ignored; 0 searches everywhere.
    double search_radius = 64;
};

/// Mutual best NCC matches from corners of `source` to corners of `target`.
MatchSet match_corners(const Image& source, const std::vector<Corner>& source_corners, const Image& target,
                       const std::vector<Corner>& target_corners, const MatchOptions& options = {});

struct RansacOptions {
    int max_iterations = 2000;
    double threshold = 2.0;
    double confidence = 0.995;
    std::uint64_t seed = 0;
    /// Gauss-Newton refinement of the transfer error over the final inliers.
    bool refine = true;
};

/// Normalized DLT through every pair (at least 4). Throws AlignmentError
/// on degenerate input.
Homography fit_homography_dlt(const std::vector<Eigen::Vector2d>& source, const std::vector<Eigen::Vector2d>& target);

/// Robust fit mapping source points onto target points. Fills
/// matches.inlier_mask; throws AlignmentError with fewer than 4 inliers.
Homography fit_homography_ransac(MatchSet& matches, const RansacOptions& options = {});

struct AlignOptions {
    CornerOptions corners;
    MatchOptions matching;
    RansacOptions ransac;
    double gamma = kDefaultGamma;
};

/// Single-channel, exposure-normalized view of a frame used for matching:
/// luminance taken to the linear domain, clipped to the range both frames
/// can represent, and gamma-lifted back.
Image matching_view(const LdrImage& frame, double ceiling, double gamma = kDefaultGamma);

/// H with warp(moving, H) ~ reference. Throws AlignmentError when fewer
/// than 4 inlier matches survive.
Homography estimate_homography(const LdrImage& moving, const LdrImage& reference, const AlignOptions& options = {});

/// Output pixel p takes the bilinear sample of `image` at h^-1(p), with
/// coordinates clamped to the frame edge.
Image warp(const Image& image, const Homography& h);
LdrImage warp(const LdrImage& image, const Homography& h);

struct AlignReport {
    ExposureStack stack;
    /// Per frame; identity for the reference and for failed frames.
    std::vector<Homography> homographies;
    std::vector<bool> aligned;
    std::vector<std::string> warnings;
};

/// Warps every non-reference frame onto the reference. With `given`, those
/// homographies (one per frame) are applied instead of estimated. Failures
/// leave the frame unwarped and add a warning.
AlignReport align_stack(const ExposureStack& stack, const AlignOptions& options = {},
                        const std::optional<std::vector<Homography>>& given = std::nullopt);

} // namespace hdrforge

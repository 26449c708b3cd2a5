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

#include "hdrforge/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include <Eigen/Dense>

#include "hdrforge/error.hpp"
#include "hdrforge/parallel.hpp"

namespace hdrforge {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

Homography::Homography(const Matrix3d& m)
{
    if (!m.allFinite())
        throw AlignmentError("homography has non-finite entries");
    if (std::abs(m(2, 2)) < 1e-12)
        throw AlignmentError("homography has m(2,2) ~ 0 and cannot be normalized");
    m_ = m / m(2, 2);
    if (std::abs(m_.determinant()) <= 1e-12)
        throw AlignmentError("homography is singular");
}

Homography Homography::translation(double dx, double dy)
{
    Matrix3d m = Matrix3d::Identity();
    m(0, 2) = dx;
    m(1, 2) = dy;
    return Homography(m);
}

Homography Homography::from_array(const std::array<double, 9>& r)
{
    Matrix3d m;
    m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
    return Homography(m);
}

std::array<double, 9> Homography::to_array() const
{
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r[static_cast<std::size_t>(i * 3 + j)] = m_(i, j);
    return r;
}

Vector2d Homography::apply(const Vector2d& p) const
{
    const Vector3d q = m_ * Vector3d(p.x(), p.y(), 1.0);
    return q.head<2>() / q.z();
}

Homography Homography::inverse() const
{
    return Homography(m_.inverse());
}

Homography operator*(const Homography& a, const Homography& b)
{
    return Homography(a.m_ * b.m_);
}

double reprojection_error(const Homography& a, const Homography& b, int width, int height, int n)
{
    if (n < 2)
        throw ParameterError("reprojection grid needs at least 2 points per side");
    double sum = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const Vector2d p((width - 1) * j / double(n - 1), (height - 1) * i / double(n - 1));
            sum += (a.apply(p) - b.apply(p)).norm();
        }
    return sum / (n * n);
}

std::size_t MatchSet::inlier_count() const
{
    return static_cast<std::size_t>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

// ---------------------------------------------------------------------------
// Corners

namespace {

std::vector<float> gaussian_blur(const std::vector<float>& src, int w, int h, double sigma)
{
    const int r = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double ks = 0;
    for (int i = -r; i <= r; ++i)
        ks += k[static_cast<std::size_t>(i + r)] = std::exp(-i * i / (2 * sigma * sigma));
    for (auto& v : k)
        v /= ks;
    std::vector<float> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * src[static_cast<std::size_t>(y * w + std::clamp(x + i, 0, w - 1))];
            tmp[static_cast<std::size_t>(y * w + x)] = static_cast<float>(acc);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1) * w + x)];
            out[static_cast<std::size_t>(y * w + x)] = static_cast<float>(acc);
        }
    return out;
}

} // namespace

std::vector<Corner> detect_corners(const Image& gray, const CornerOptions& o)
{
    if (gray.channels() != 1)
        throw ShapeError("corner detection expects a single-channel image");
    const int w = gray.width(), h = gray.height();
    if (w < 3 || h < 3)
        return {};
    auto at = [&](int y, int x) { return gray.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1), 0); };
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<float> ixx(n), iyy(n), ixy(n);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1) - at(y - 1, x - 1) -
                              2 * at(y, x - 1) - at(y + 1, x - 1)) / 8.0f;
            const float gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1) - at(y - 1, x - 1) -
                              2 * at(y - 1, x) - at(y - 1, x + 1)) / 8.0f;
            const std::size_t i = static_cast<std::size_t>(y * w + x);
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    ixx = gaussian_blur(ixx, w, h, 1.5);
    iyy = gaussian_blur(iyy, w, h, 1.5);
    ixy = gaussian_blur(ixy, w, h, 1.5);
    std::vector<double> R(n);
    double peak = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = ixx[i], b = iyy[i], c = ixy[i];
        R[i] = a * b - c * c - o.harris_k * (a + b) * (a + b);
        peak = std::max(peak, R[i]);
    }
    if (!(peak > 0))
        return {};
    const double thr = o.relative_threshold * peak;
    const int rad = o.suppression_radius;
    const int border = std::max(o.border, 1);
    std::vector<Corner> out;
    for (int y = border; y < h - border; ++y)
        for (int x = border; x < w - border; ++x) {
            const double r = R[static_cast<std::size_t>(y * w + x)];
            if (r <= thr)
                continue;
            bool is_max = true;
            for (int dy = -rad; dy <= rad && is_max; ++dy)
                for (int dx = -rad; dx <= rad; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if ((dy == 0 && dx == 0) || yy < 0 || yy >= h || xx < 0 || xx >= w)
                        continue;
                    const double q = R[static_cast<std::size_t>(yy * w + xx)];
                    // plateaus keep their first pixel in raster order
                    if (q > r || (q == r && (dy < 0 || (dy == 0 && dx < 0)))) {
                        is_max = false;
                        break;
                    }
                }
            if (!is_max)
                continue;
            auto Rv = [&](int yy, int xx) { return R[static_cast<std::size_t>(yy * w + xx)]; };
            auto peak_offset = [](double m, double c, double p) {
                const double d = m - 2 * c + p;
                return d < 0 ? std::clamp(0.5 * (m - p) / d, -0.5, 0.5) : 0.0;
            };
            const double ox = peak_offset(Rv(y, x - 1), r, Rv(y, x + 1));
            const double oy = peak_offset(Rv(y - 1, x), r, Rv(y + 1, x));
            out.push_back({x + ox, y + oy, r});
        }
    std::stable_sort(out.begin(), out.end(), [](const Corner& a, const Corner& b) { return a.response > b.response; });
    if (o.max_corners > 0 && out.size() > static_cast<std::size_t>(o.max_corners))
        out.resize(static_cast<std::size_t>(o.max_corners));
    return out;
}

// ---------------------------------------------------------------------------
// Matching

namespace {

struct Descriptor {
    std::size_t corner;
    std::vector<float> v;
};

std::vector<Descriptor> describe(const Image& img, const std::vector<Corner>& corners, int window)
{
    const int r = window / 2;
    std::vector<Descriptor> out;
    for (std::size_t i = 0; i < corners.size(); ++i) {
        const int cx = static_cast<int>(std::lround(corners[i].x)), cy = static_cast<int>(std::lround(corners[i].y));
        if (cx - r < 0 || cy - r < 0 || cx + r >= img.width() || cy + r >= img.height())
            continue;
        std::vector<float> v;
        v.reserve(static_cast<std::size_t>(window * window));
        double mean = 0;
        for (int y = -r; y <= r; ++y)
            for (int x = -r; x <= r; ++x) {
                v.push_back(img.at(cy + y, cx + x, 0));
                mean += v.back();
            }
        mean /= static_cast<double>(v.size());
        double ss = 0;
        for (auto& e : v) {
            e = static_cast<float>(e - mean);
            ss += double(e) * e;
        }
        if (ss < 1e-12)
            continue;
        const float inv = static_cast<float>(1.0 / std::sqrt(ss));
        for (auto& e : v)
            e *= inv;
        out.push_back({i, std::move(v)});
    }
    return out;
}

double ncc_at(const Image& a, int ax, int ay, const Image& b, int bx, int by, int r)
{
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            const double va = a.at(ay + y, ax + x, 0), vb = b.at(by + y, bx + x, 0);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    const double n = (2 * r + 1) * (2 * r + 1);
    const double den = std::sqrt(std::max(0.0, saa - sa * sa / n) * std::max(0.0, sbb - sb * sb / n));
    return den > 1e-12 ? (sab - sa * sb / n) / den : -1.0;
}

double bilinear(const Image& img, double x, double y)
{
    const int w = img.width(), h = img.height();
    x = std::clamp(x, 0.0, w - 1.0);
    y = std::clamp(y, 0.0, h - 1.0);
    const int x0 = std::min(static_cast<int>(x), w - 2 < 0 ? 0 : w - 2);
    const int y0 = std::min(static_cast<int>(y), h - 2 < 0 ? 0 : h - 2);
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fy) * ((1 - fx) * img.at(y0, x0, 0) + fx * img.at(y0, x1, 0)) +
           fy * ((1 - fx) * img.at(y1, x0, 0) + fx * img.at(y1, x1, 0));
}

// Integer NCC search around (tx, ty), then Gauss-Newton on translation plus
// gain and offset. nullopt when the search leaves the image or diverges.
std::optional<Vector2d> locate(const Image& src, int sx, int sy, const Image& tgt, int tx, int ty, int r, int reach)
{
    int bx = tx, by = ty;
    double best = -2;
    for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
            const int x = tx + dx, y = ty + dy;
            if (x - r < 1 || y - r < 1 || x + r >= tgt.width() - 1 || y + r >= tgt.height() - 1)
                continue;
            const double c = ncc_at(src, sx, sy, tgt, x, y, r);
            if (c > best) {
                best = c;
                bx = x;
                by = y;
            }
        }
    if (best <= -2)
        return std::nullopt;
    Vector2d p(bx, by);
    double gain = 1, bias = 0;
    for (int it = 0; it < 20; ++it) {
        Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
        Eigen::Vector4d g = Eigen::Vector4d::Zero();
        for (int y = -r; y <= r; ++y)
            for (int x = -r; x <= r; ++x) {
                const double qx = p.x() + x, qy = p.y() + y;
                const double v = bilinear(tgt, qx, qy);
                const double ix = 0.5 * (bilinear(tgt, qx + 1, qy) - bilinear(tgt, qx - 1, qy));
                const double iy = 0.5 * (bilinear(tgt, qx, qy + 1) - bilinear(tgt, qx, qy - 1));
                const Eigen::Vector4d j(gain * ix, gain * iy, v, 1.0);
                const double res = src.at(sy + y, sx + x, 0) - (gain * v + bias);
                A += j * j.transpose();
                g += j * res;
            }
        const Eigen::Vector4d d = A.ldlt().solve(g);
        if (!d.allFinite())
            return std::nullopt;
        p += d.head<2>();
        gain += d(2);
        bias += d(3);
        if ((p - Vector2d(bx, by)).cwiseAbs().maxCoeff() > 1.5 || !(gain > 0))
            return std::nullopt;
        if (d.head<2>().norm() < 1e-4)
            break;
    }
    return p;
}

} // namespace

MatchSet match_corners(const Image& source, const std::vector<Corner>& sc, const Image& target,
                       const std::vector<Corner>& tc, const MatchOptions& o)
{
    if (o.window < 3 || o.window % 2 == 0)
        throw ParameterError("match window must be odd and >= 3");
    if (source.channels() != 1 || target.channels() != 1)
        throw ShapeError("matching expects single-channel images");
    const auto sd = describe(source, sc, o.window);
    const auto td = describe(target, tc, o.window);
    const double r2 = o.search_radius > 0 ? o.search_radius * o.search_radius : std::numeric_limits<double>::infinity();
    std::vector<int> best_t(sd.size(), -1), best_s(td.size(), -1);
    std::vector<double> score_t(sd.size(), -2), score_s(td.size(), -2);
    for (std::size_t i = 0; i < sd.size(); ++i) {
        const Corner& a = sc[sd[i].corner];
        for (std::size_t j = 0; j < td.size(); ++j) {
            const Corner& b = tc[td[j].corner];
            const double dx = a.x - b.x, dy = a.y - b.y;
            if (dx * dx + dy * dy > r2)
                continue;
            double s = 0;
            for (std::size_t k = 0; k < sd[i].v.size(); ++k)
                s += sd[i].v[k] * td[j].v[k];
            if (s > score_t[i]) {
                score_t[i] = s;
                best_t[i] = static_cast<int>(j);
            }
            if (s > score_s[j]) {
                score_s[j] = s;
                best_s[j] = static_cast<int>(i);
            }
        }
    }
    MatchSet m;
    for (std::size_t i = 0; i < sd.size(); ++i) {
        const int j = best_t[i];
        if (j < 0 || best_s[static_cast<std::size_t>(j)] != static_cast<int>(i) || score_t[i] < o.min_score)
            continue;
        const Corner& a = sc[sd[i].corner];
        const Corner& b = tc[td[static_cast<std::size_t>(j)].corner];
        const int ax = static_cast<int>(std::lround(a.x)), ay = static_cast<int>(std::lround(a.y));
        const auto t = locate(source, ax, ay, target, static_cast<int>(std::lround(b.x)),
                              static_cast<int>(std::lround(b.y)), o.window / 2, 2);
        if (!t)
            continue;
        m.pairs.push_back({Vector2d(ax, ay), *t, score_t[i]});
    }
    m.inlier_mask.assign(m.pairs.size(), true);
    return m;
}

// ---------------------------------------------------------------------------
// Estimation

namespace {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Matrix3d normalizer(const std::vector<Vector2d>& pts)
{
    Vector2d c = Vector2d::Zero();
    for (const auto& p : pts)
        c += p;
    c /= static_cast<double>(pts.size());
    double d = 0;
    for (const auto& p : pts)
        d += (p - c).norm();
    d /= static_cast<double>(pts.size());
    const double s = d > 0 ? std::sqrt(2.0) / d : 1.0;
    Matrix3d T;
    T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
    return T;
}

Vector2d project(const Matrix3d& m, const Vector2d& p)
{
    const Vector3d q = m * Vector3d(p.x(), p.y(), 1.0);
    return q.head<2>() / q.z();
}

double cross(const Vector2d& a, const Vector2d& b, const Vector2d& c)
{
    return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
}

bool degenerate(const std::array<Vector2d, 4>& p)
{
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            for (int k = j + 1; k < 4; ++k)
                if (std::abs(cross(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)], p[static_cast<std::size_t>(k)])) < 1.0)
                    return true;
    return false;
}

// Levenberg-Marquardt on the forward transfer error, in normalized coordinates.
Homography refine(const Homography& h0, const std::vector<Vector2d>& src, const std::vector<Vector2d>& dst)
{
    const Matrix3d Ts = normalizer(src), Td = normalizer(dst);
    std::vector<Vector2d> s(src.size()), d(dst.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        s[i] = project(Ts, src[i]);
        d[i] = project(Td, dst[i]);
    }
    Matrix3d m = Td * h0.matrix() * Ts.inverse();
    m /= m(2, 2);
    auto cost = [&](const Matrix3d& mm) {
        double c = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            c += (project(mm, s[i]) - d[i]).squaredNorm();
        return c;
    };
    double lambda = 1e-3;
    double current = cost(m);
    for (int it = 0; it < 30; ++it) {
        Eigen::Matrix<double, 8, 8> JtJ = Eigen::Matrix<double, 8, 8>::Zero();
        Eigen::Matrix<double, 8, 1> Jtr = Eigen::Matrix<double, 8, 1>::Zero();
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double x = s[i].x(), y = s[i].y();
            const double w = m(2, 0) * x + m(2, 1) * y + 1.0;
            const double u = (m(0, 0) * x + m(0, 1) * y + m(0, 2)) / w;
            const double v = (m(1, 0) * x + m(1, 1) * y + m(1, 2)) / w;
            Eigen::Matrix<double, 2, 8> J;
            J << x / w, y / w, 1 / w, 0, 0, 0, -u * x / w, -u * y / w,
                 0, 0, 0, x / w, y / w, 1 / w, -v * x / w, -v * y / w;
            const Vector2d r(u - d[i].x(), v - d[i].y());
            JtJ += J.transpose() * J;
            Jtr += J.transpose() * r;
        }
        bool improved = false;
        for (int attempt = 0; attempt < 8 && !improved; ++attempt) {
            Eigen::Matrix<double, 8, 8> A = JtJ;
            A.diagonal() *= 1.0 + lambda;
            const Eigen::Matrix<double, 8, 1> delta = A.ldlt().solve(-Jtr);
            Matrix3d trial = m;
            trial(0, 0) += delta(0);
            trial(0, 1) += delta(1);
            trial(0, 2) += delta(2);
            trial(1, 0) += delta(3);
            trial(1, 1) += delta(4);
            trial(1, 2) += delta(5);
            trial(2, 0) += delta(6);
            trial(2, 1) += delta(7);
            const double c = cost(trial);
            if (std::isfinite(c) && c < current) {
                const double gain = (current - c) / std::max(current, 1e-300);
                m = trial;
                current = c;
                lambda = std::max(lambda / 10, 1e-12);
                improved = true;
                if (gain < 1e-12)
                    it = 1000;
            } else {
                lambda *= 10;
            }
        }
        if (!improved)
            break;
    }
    return Homography(Td.inverse() * m * Ts);
}

std::vector<bool> inliers_of(const Homography& h, const MatchSet& m, double threshold, std::size_t& count, double& sse)
{
    std::vector<bool> mask(m.pairs.size(), false);
    count = 0;
    sse = 0;
    const double t2 = threshold * threshold;
    for (std::size_t i = 0; i < m.pairs.size(); ++i) {
        const double e = (project(h.matrix(), m.pairs[i].source) - m.pairs[i].target).squaredNorm();
        if (std::isfinite(e) && e < t2) {
            mask[i] = true;
            ++count;
            sse += e;
        }
    }
    return mask;
}

} // namespace

Homography fit_homography_dlt(const std::vector<Vector2d>& src, const std::vector<Vector2d>& dst)
{
    if (src.size() != dst.size())
        throw ParameterError("DLT needs equally many source and target points");
    if (src.size() < 4)
        throw AlignmentError("DLT needs at least 4 correspondences, got " + std::to_string(src.size()));
    const Matrix3d Ts = normalizer(src), Td = normalizer(dst);
    Eigen::MatrixXd A(2 * src.size(), 9);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Vector2d s = project(Ts, src[i]), d = project(Td, dst[i]);
        const double x = s.x(), y = s.y(), u = d.x(), v = d.y();
        const Eigen::Index r = static_cast<Eigen::Index>(2 * i);
        A.row(r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        A.row(r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // a second vanishing singular value means the points do not pin H down
    if (sv(7) < 1e-10 * std::max(sv(0), 1e-300))
        throw AlignmentError("degenerate correspondences");
    const Eigen::VectorXd hv = svd.matrixV().col(8);
    Matrix3d hn;
    hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
    return Homography(Td.inverse() * hn * Ts);
}

Homography fit_homography_ransac(MatchSet& m, const RansacOptions& o)
{
    const std::size_t n = m.pairs.size();
    m.inlier_mask.assign(n, false);
    if (n < 4)
        throw AlignmentError("only " + std::to_string(n) + " matches; need at least 4");
    if (!(o.threshold > 0) || o.max_iterations < 1 || !(o.confidence > 0 && o.confidence < 1))
        throw ParameterError("invalid RANSAC options");

    std::mt19937_64 rng(o.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::optional<Homography> best;
    std::size_t best_count = 0;
    double best_sse = 0;
    long needed = o.max_iterations;
    for (long it = 0; it < std::min<long>(needed, o.max_iterations); ++it) {
        std::array<std::size_t, 4> idx{};
        for (int k = 0; k < 4; ++k) {
            bool fresh;
            do {
                idx[static_cast<std::size_t>(k)] = pick(rng);
                fresh = std::find(idx.begin(), idx.begin() + k, idx[static_cast<std::size_t>(k)]) == idx.begin() + k;
            } while (!fresh);
        }
        std::array<Vector2d, 4> ps, pt;
        for (int k = 0; k < 4; ++k) {
            ps[static_cast<std::size_t>(k)] = m.pairs[idx[static_cast<std::size_t>(k)]].source;
            pt[static_cast<std::size_t>(k)] = m.pairs[idx[static_cast<std::size_t>(k)]].target;
        }
        if (degenerate(ps) || degenerate(pt))
            continue;
        Homography h;
        try {
            h = fit_homography_dlt({ps.begin(), ps.end()}, {pt.begin(), pt.end()});
        } catch (const AlignmentError&) {
            continue;
        }
        std::size_t count;
        double sse;
        inliers_of(h, m, o.threshold, count, sse);
        if (count > best_count || (count == best_count && count > 0 && sse < best_sse)) {
            best = h;
            best_count = count;
            best_sse = sse;
            const double w = static_cast<double>(count) / static_cast<double>(n);
            const double p_fail = 1.0 - std::pow(w, 4);
            if (p_fail <= 0)
                needed = it + 1;
            else
                needed = std::min<long>(o.max_iterations,
                                        static_cast<long>(std::ceil(std::log(1 - o.confidence) / std::log(p_fail))));
        }
    }
    if (!best || best_count < 4)
        throw AlignmentError("RANSAC found " + std::to_string(best_count) + " inliers; need at least 4");

    // re-fit on the consensus set until it stops growing
    Homography h = *best;
    std::size_t count;
    double sse;
    auto mask = inliers_of(h, m, o.threshold, count, sse);
    for (int round = 0; round < 5; ++round) {
        std::vector<Vector2d> s, t;
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) {
                s.push_back(m.pairs[i].source);
                t.push_back(m.pairs[i].target);
            }
        Homography refit;
        try {
            refit = fit_homography_dlt(s, t);
            if (o.refine)
                refit = refine(refit, s, t);
        } catch (const AlignmentError&) {
            break;
        }
        std::size_t c2;
        double e2;
        auto m2 = inliers_of(refit, m, o.threshold, c2, e2);
        if (c2 < count || (c2 == count && e2 >= sse))
            break;
        h = refit;
        mask = std::move(m2);
        count = c2;
        sse = e2;
    }
    if (count < 4)
        throw AlignmentError("only " + std::to_string(count) + " inliers after refinement");
    m.inlier_mask = std::move(mask);
    return h;
}

Image matching_view(const LdrImage& frame, double ceiling, double gamma)
{
    if (!(ceiling > 0) || !(frame.exposure_time > 0))
        throw ParameterError("matching view needs positive exposure time and ceiling");
    Image lum = luminance(frame.pixels);
    for (float& v : lum.data()) {
        const double l = std::min(ceiling, std::pow(std::max(0.0f, v), gamma) / frame.exposure_time);
        v = static_cast<float>(std::pow(l / ceiling, 1.0 / gamma));
    }
    return lum;
}

Homography estimate_homography(const LdrImage& moving, const LdrImage& reference, const AlignOptions& o)
{
    if (moving.pixels.width() != reference.pixels.width() || moving.pixels.height() != reference.pixels.height())
        throw ShapeError("alignment needs equally sized frames");
    const double ceiling = std::min(1.0 / moving.exposure_time, 1.0 / reference.exposure_time);
    const Image a = matching_view(moving, ceiling, o.gamma);
    const Image b = matching_view(reference, ceiling, o.gamma);
    const auto ca = detect_corners(a, o.corners);
    const auto cb = detect_corners(b, o.corners);
    MatchSet m = match_corners(a, ca, b, cb, o.matching);
    return fit_homography_ransac(m, o.ransac);
}

Image warp(const Image& image, const Homography& h)
{
    const int w = image.width(), hh = image.height(), C = image.channels();
    const Matrix3d inv = h.matrix().inverse();
    Image out(w, hh, C);
    for (int y = 0; y < hh; ++y)
        for (int x = 0; x < w; ++x) {
            const Vector3d q = inv * Vector3d(x, y, 1.0);
            double qx = q.x() / q.z(), qy = q.y() / q.z();
            if (!std::isfinite(qx) || !std::isfinite(qy))
                qx = qy = 0;
            qx = std::clamp(qx, 0.0, double(w - 1));
            qy = std::clamp(qy, 0.0, double(hh - 1));
            const int x0 = static_cast<int>(std::floor(qx)), y0 = static_cast<int>(std::floor(qy));
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, hh - 1);
            const double fx = qx - x0, fy = qy - y0;
            for (int c = 0; c < C; ++c) {
                const double top = image.at(y0, x0, c) * (1 - fx) + image.at(y0, x1, c) * fx;
                const double bot = image.at(y1, x0, c) * (1 - fx) + image.at(y1, x1, c) * fx;
                out.at(y, x, c) = static_cast<float>(top * (1 - fy) + bot * fy);
            }
        }
    return out;
}

LdrImage warp(const LdrImage& image, const Homography& h)
{
    return LdrImage{warp(image.pixels, h), image.exposure_bias, image.exposure_time};
}

AlignReport align_stack(const ExposureStack& stack, const AlignOptions& o,
                        const std::optional<std::vector<Homography>>& given)
{
    validate_stack(stack);
    const std::size_t k = stack.frames.size();
    if (given && given->size() != k)
        throw ParameterError("expected " + std::to_string(k) + " homographies, got " + std::to_string(given->size()));
    AlignReport r;
    r.stack = stack;
    r.homographies.assign(k, Homography::identity());
    r.aligned.assign(k, true);
    std::vector<std::string> warning(k);
    const auto ref = static_cast<std::size_t>(stack.reference_index);
    parallel_for(k, [&](std::size_t f) {
        if (f == ref)
            return;
        try {
            const Homography h = given ? (*given)[f] : estimate_homography(stack.frames[f], stack.frames[ref], o);
            r.stack.frames[f] = warp(stack.frames[f], h);
            r.homographies[f] = h;
        } catch (const AlignmentError& e) {
            r.aligned[f] = false;
            warning[f] = "frame " + std::to_string(f) + " left unaligned: " + e.what();
        }
    });
    for (auto& w : warning)
        if (!w.empty())
            r.warnings.push_back(std::move(w));
    return r;
}

} // namespace hdrforge

// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Pinhole camera model, rigid transforms and differentiable view warping.
//
// Conventions: camera frame x right, y down, z forward. Pixel (u, v) has its
// center at integer coordinates with the origin at the top-left pixel. Images
// are H x W x C row-major tensors; depth maps are H x W.

#include "xvc/bilinear.hpp"
#include "xvc/config.hpp"
#include "xvc/tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace xvc {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>; // row-major

inline Vec3 matvec(const Mat3 &m, const Vec3 &v) {
    return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

inline Mat3 matmul(const Mat3 &a, const Mat3 &b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 3; ++k) {
                c[3 * i + j] += a[3 * i + k] * b[3 * k + j];
            }
        }
    }
    return c;
}

inline Mat3 transpose(const Mat3 &m) { return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}; }

inline double determinant(const Mat3 &m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double u0 = 0.0;
    double v0 = 0.0;

    void validate() const {
        detail::require(fx > 0.0 && fy > 0.0, "CameraIntrinsics: focal lengths must be positive");
    }

    Mat3 matrix() const { return {fx, 0.0, u0, 0.0, fy, v0, 0.0, 0.0, 1.0}; }

    static CameraIntrinsics from_config(const ConfigSection &s) {
        CameraIntrinsics k{s.require_double("fx"), s.require_double("fy"), s.require_double("u0"),
                           s.require_double("v0")};
        if (!(k.fx > 0.0 && k.fy > 0.0)) {
            throw ConfigError("intrinsics: fx and fy must be positive");
        }
        return k;
    }
};

/// x -> R x + t.
struct RigidTransform {
    Mat3 rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Vec3 translation{0, 0, 0};

    static RigidTransform identity() { return {}; }

    static RigidTransform from_translation(const Vec3 &t) { return {Mat3{1, 0, 0, 0, 1, 0, 0, 0, 1}, t}; }

    /// Rotation of `angle` radians about unit `axis` (Rodrigues), then translation.
    static RigidTransform from_axis_angle(Vec3 axis, double angle, const Vec3 &t = {0, 0, 0}) {
        const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        detail::require(n > 0.0, "RigidTransform: zero rotation axis");
        for (auto &a : axis) {
            a /= n;
        }
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double C = 1.0 - c;
        const auto [x, y, z] = axis;
        return {Mat3{c + x * x * C, x * y * C - z * s, x * z * C + y * s, y * x * C + z * s, c + y * y * C,
                     y * z * C - x * s, z * x * C - y * s, z * y * C + x * s, c + z * z * C},
                t};
    }

    Vec3 apply(const Vec3 &p) const {
        const auto r = matvec(rotation, p);
        return {r[0] + translation[0], r[1] + translation[1], r[2] + translation[2]};
    }

    /// (this ∘ other)(x) = this(other(x)).
    RigidTransform compose(const RigidTransform &other) const {
        return {matmul(rotation, other.rotation), apply(other.translation)};
    }

    RigidTransform inverse() const {
        const Mat3 rt = transpose(rotation);
        const auto t = matvec(rt, translation);
        return {rt, {-t[0], -t[1], -t[2]}};
    }

    /// Max deviation of RᵀR from I and of det(R) from 1.
    double orthonormality_error() const {
        const Mat3 rtr = matmul(transpose(rotation), rotation);
        double err = std::abs(determinant(rotation) - 1.0);
        for (int i = 0; i < 9; ++i) {
            err = std::max(err, std::abs(rtr[static_cast<std::size_t>(i)] - (i % 4 == 0 ? 1.0 : 0.0)));
        }
        return err;
    }

    void validate(double tol = 1e-9) const {
        detail::require(orthonormality_error() <= tol, "RigidTransform: rotation is not orthonormal");
    }

    /// Keys `rotation` (9 row-major values, default identity) and `translation`.
    static RigidTransform from_config(const ConfigSection &s) {
        RigidTransform t;
        if (s.has("rotation")) {
            const auto r = s.require_doubles("rotation", 9);
            std::copy(r.begin(), r.end(), t.rotation.begin());
        }
        if (s.has("translation")) {
            const auto v = s.require_doubles("translation", 3);
            std::copy(v.begin(), v.end(), t.translation.begin());
        }
        if (t.orthonormality_error() > 1e-9) {
            throw ConfigError("pose: rotation is not orthonormal within 1e-9");
        }
        return t;
    }
};

/// H x W depth in meters with a validity mask (1 = valid).
struct DepthMap {
    Tensor values;
    std::vector<std::uint8_t> mask;

    DepthMap() = default;

    DepthMap(Tensor v, std::vector<std::uint8_t> m) : values(std::move(v)), mask(std::move(m)) {
        detail::require(values.rank() == 2, "DepthMap: values must be H x W, got " + shape_str(values.shape()));
        detail::require(mask.size() == values.numel(), "DepthMap: mask size does not match");
    }

    /// Valid wherever the depth is positive.
    static DepthMap from_values(Tensor v) {
        std::vector<std::uint8_t> m(v.numel());
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = v.value(i) > 0.0;
        }
        return DepthMap(std::move(v), std::move(m));
    }

    std::size_t height() const { return values.dim(0); }
    std::size_t width() const { return values.dim(1); }
    std::size_t valid_count() const {
        std::size_t n = 0;
        for (auto m : mask) {
            n += m;
        }
        return n;
    }
};

/// n x 3 points in camera coordinates. `pixels` holds the flat source pixel
/// index of each point when the cloud came from backprojection.
struct PointCloud {
    Tensor points;
    std::vector<std::size_t> pixels;

    PointCloud() = default;
    explicit PointCloud(Tensor p, std::vector<std::size_t> px = {}) : points(std::move(p)), pixels(std::move(px)) {
        detail::require(points.rank() == 2 && points.dim(1) == 3,
                        "PointCloud: points must be n x 3, got " + shape_str(points.shape()));
    }

    std::size_t size() const { return points.dim(0); }
    Vec3 point(std::size_t i) const {
        return {points.value(3 * i), points.value(3 * i + 1), points.value(3 * i + 2)};
    }

    static PointCloud from_points(const std::vector<Vec3> &pts) {
        std::vector<double> d;
        d.reserve(pts.size() * 3);
        for (const auto &p : pts) {
            d.insert(d.end(), p.begin(), p.end());
        }
        return PointCloud(Tensor({pts.size(), 3}, std::move(d)));
    }
};

/// Depth of every pixel times its ray K⁻¹[u v 1]ᵀ, as an (H·W) x 3 tensor.
/// No validity checks; differentiable with respect to `depth`.
inline Tensor backproject_grid(const Tensor &depth, const CameraIntrinsics &K) {
    detail::require(depth.rank() == 2, "backproject: depth must be H x W");
    K.validate();
    const std::size_t H = depth.dim(0);
    const std::size_t W = depth.dim(1);
    auto rays = std::make_shared<std::vector<double>>(H * W * 2);
    std::vector<double> out(H * W * 3);
    for (std::size_t v = 0; v < H; ++v) {
        for (std::size_t u = 0; u < W; ++u) {
            const std::size_t i = v * W + u;
            const double rx = (static_cast<double>(u) - K.u0) / K.fx;
            const double ry = (static_cast<double>(v) - K.v0) / K.fy;
            (*rays)[2 * i] = rx;
            (*rays)[2 * i + 1] = ry;
            const double d = depth.value(i);
            out[3 * i] = d * rx;
            out[3 * i + 1] = d * ry;
            out[3 * i + 2] = d;
        }
    }
    return Tensor::make_op("backproject", {H * W, 3}, std::move(out), {depth},
                           [rays](std::span<const double>, std::span<const double> g, std::span<double *const> gi) {
                               const auto &r = *rays;
                               for (std::size_t i = 0; i < r.size() / 2; ++i) {
                                   gi[0][i] += g[3 * i] * r[2 * i] + g[3 * i + 1] * r[2 * i + 1] + g[3 * i + 2];
                               }
                           });
}

/// P = D(p)·K⁻¹·p̃ for every valid pixel, in row-major pixel order.
inline PointCloud backproject(const DepthMap &depth, const CameraIntrinsics &K) {
    const std::size_t W = depth.width();
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < depth.mask.size(); ++i) {
        if (!depth.mask[i]) {
            continue;
        }
        if (!(depth.values.value(i) > 0.0)) {
            detail::contract("backproject: non-positive depth " + std::to_string(depth.values.value(i)) +
                             " at valid pixel (u=" + std::to_string(i % W) + ", v=" + std::to_string(i / W) + ")");
        }
        rows.push_back(i);
    }
    detail::require(!rows.empty(), "backproject: depth map has no valid pixels");
    Tensor grid = backproject_grid(depth.values, K);
    if (rows.size() == depth.mask.size()) {
        return PointCloud(std::move(grid), std::move(rows));
    }
    Tensor pts = index_select(grid, rows);
    return PointCloud(std::move(pts), std::move(rows));
}

/// R·P + t for every row of an n x 3 tensor.
inline Tensor transform_points(const Tensor &points, const RigidTransform &T) {
    detail::require(points.rank() == 2 && points.dim(1) == 3, "transform_points: points must be n x 3");
    const std::size_t n = points.dim(0);
    const auto &R = T.rotation;
    std::vector<double> out(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        const auto q = T.apply({points.value(3 * i), points.value(3 * i + 1), points.value(3 * i + 2)});
        std::copy(q.begin(), q.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
    return Tensor::make_op("transform_points", {n, 3}, std::move(out), {points},
                           [R](std::span<const double>, std::span<const double> g, std::span<double *const> gi) {
                               for (std::size_t i = 0; i < g.size() / 3; ++i) {
                                   const double *gp = &g[3 * i];
                                   for (int c = 0; c < 3; ++c) {
                                       gi[0][3 * i + static_cast<std::size_t>(c)] +=
                                           R[static_cast<std::size_t>(c)] * gp[0] + R[3 + c] * gp[1] + R[6 + c] * gp[2];
                                   }
                               }
                           });
}

inline PointCloud transform_points(const PointCloud &pc, const RigidTransform &T) {
    return PointCloud(transform_points(pc.points, T), pc.pixels);
}

struct Projection {
    Tensor pixels;                    // n x 2, (u, v)
    Tensor depths;                    // n
    std::vector<std::uint8_t> valid;  // in front of the camera
};

inline constexpr double kMinProjectDepth = 1e-12;

/// u = fx·X/Z + u0, v = fy·Y/Z + v0. Points with Z <= 1e-12 are flagged
/// invalid; their pixel values are placeholders with zero gradient.
inline Projection project(const Tensor &points, const CameraIntrinsics &K) {
    detail::require(points.rank() == 2 && points.dim(1) == 3, "project: points must be n x 3");
    K.validate();
    const std::size_t n = points.dim(0);
    std::vector<double> px(n * 2);
    std::vector<std::uint8_t> valid(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double X = points.value(3 * i);
        const double Y = points.value(3 * i + 1);
        const double Z = points.value(3 * i + 2);
        valid[i] = Z > kMinProjectDepth;
        const double z = valid[i] ? Z : 1.0;
        px[2 * i] = K.fx * X / z + K.u0;
        px[2 * i + 1] = K.fy * Y / z + K.v0;
    }
    auto flags = std::make_shared<const std::vector<std::uint8_t>>(valid);
    Tensor pixels = Tensor::make_op(
        "project", {n, 2}, std::move(px), {points},
        [points, flags, K](std::span<const double>, std::span<const double> g, std::span<double *const> gi) {
            for (std::size_t i = 0; i < flags->size(); ++i) {
                if (!(*flags)[i]) {
                    continue;
                }
                const double X = points.value(3 * i);
                const double Y = points.value(3 * i + 1);
                const double Z = points.value(3 * i + 2);
                const double gu = g[2 * i] * K.fx / Z;
                const double gv = g[2 * i + 1] * K.fy / Z;
                gi[0][3 * i] += gu;
                gi[0][3 * i + 1] += gv;
                gi[0][3 * i + 2] -= (gu * X + gv * Y) / Z;
            }
        });
    std::vector<std::size_t> zcol(n);
    for (std::size_t i = 0; i < n; ++i) {
        zcol[i] = 3 * i + 2;
    }
    Tensor depths = detail::gather("depth_of", points, {n}, std::move(zcol));
    return {std::move(pixels), std::move(depths), std::move(valid)};
}

inline Projection project(const PointCloud &pc, const CameraIntrinsics &K) { return project(pc.points, K); }

/// Coordinates within this distance outside [0, size-1] still count as inside.
inline constexpr double kBoundsTolerance = 1e-9;

struct SampleResult {
    Tensor values;                        // n x C
    std::vector<std::uint8_t> in_bounds;  // per sample
};

/// Bilinear lookup of an H x W x C image at n (u, v) coordinates. Coordinates
/// are clamped to the image; clamped samples are reported out of bounds and
/// pass no gradient to their coordinates. Differentiable w.r.t. image and coords.
inline SampleResult bilinear_sample(const Tensor &image, const Tensor &coords) {
    detail::require(image.rank() == 3, "bilinear_sample: image must be H x W x C");
    detail::require(coords.rank() == 2 && coords.dim(1) == 2, "bilinear_sample: coords must be n x 2");
    const std::size_t H = image.dim(0);
    const std::size_t W = image.dim(1);
    const std::size_t C = image.dim(2);
    const std::size_t n = coords.dim(0);

    auto taps = std::make_shared<std::vector<detail::BilinearTap>>(n);
    std::vector<std::uint8_t> inside(n);
    std::vector<double> out(n * C);
    const auto img = image.data();
    const double wmax = static_cast<double>(W - 1);
    const double hmax = static_cast<double>(H - 1);
    for (std::size_t s = 0; s < n; ++s) {
        const double x = coords.value(2 * s);
        const double y = coords.value(2 * s + 1);
        const detail::BilinearTap t = detail::bilinear_tap(x, y, H, W);
        inside[s] = x >= -kBoundsTolerance && x <= wmax + kBoundsTolerance && y >= -kBoundsTolerance &&
                    y <= hmax + kBoundsTolerance;
        for (std::size_t c = 0; c < C; ++c) {
            const double a = img[t.i00 * C + c];
            const double b = img[t.i01 * C + c];
            const double d = img[t.i10 * C + c];
            const double e = img[t.i11 * C + c];
            out[s * C + c] = (1 - t.ay) * ((1 - t.ax) * a + t.ax * b) + t.ay * ((1 - t.ax) * d + t.ax * e);
        }
        (*taps)[s] = t;
    }
    Tensor values = Tensor::make_op(
        "bilinear_sample", {n, C}, std::move(out), {image, coords},
        [image, taps, C](std::span<const double>, std::span<const double> g, std::span<double *const> gi) {
            const auto img = image.data();
            for (std::size_t s = 0; s < taps->size(); ++s) {
                const detail::BilinearTap &t = (*taps)[s];
                double gx = 0.0;
                double gy = 0.0;
                for (std::size_t c = 0; c < C; ++c) {
                    const double up = g[s * C + c];
                    if (gi[0]) {
                        gi[0][t.i00 * C + c] += up * (1 - t.ay) * (1 - t.ax);
                        gi[0][t.i01 * C + c] += up * (1 - t.ay) * t.ax;
                        gi[0][t.i10 * C + c] += up * t.ay * (1 - t.ax);
                        gi[0][t.i11 * C + c] += up * t.ay * t.ax;
                    }
                    const double a = img[t.i00 * C + c];
                    const double b = img[t.i01 * C + c];
                    const double d = img[t.i10 * C + c];
                    const double e = img[t.i11 * C + c];
                    gx += up * ((1 - t.ay) * (b - a) + t.ay * (e - d));
                    gy += up * ((1 - t.ax) * (d - a) + t.ax * (e - b));
                }
                if (gi[1]) {
                    if (!t.clamp_x) {
                        gi[1][2 * s] += gx;
                    }
                    if (!t.clamp_y) {
                        gi[1][2 * s + 1] += gy;
                    }
                }
            }
        });
    return {std::move(values), std::move(inside)};
}

struct WarpResult {
    Tensor warped;                 // H x W x C
    std::vector<std::uint8_t> mask; // H x W
    Tensor coords;                 // (H·W) x 2 source-image coordinates
};

/// Reconstructs the reference view from `src`: every reference pixel is
/// backprojected with `depth_ref`, moved by `ref_to_src`, projected into the
/// source image and sampled bilinearly. Pixels with invalid depth, behind the
/// source camera or outside the source image are masked out.
inline WarpResult warp_image(const Tensor &src, const DepthMap &depth_ref, const RigidTransform &ref_to_src,
                             const CameraIntrinsics &K) {
    detail::require(src.rank() == 3, "warp_image: src must be H x W x C");
    detail::require(src.dim(0) == depth_ref.height() && src.dim(1) == depth_ref.width(),
                    "warp_image: src " + shape_str(src.shape()) + " and depth " +
                        shape_str(depth_ref.values.shape()) + " differ in H, W");
    const std::size_t H = src.dim(0);
    const std::size_t W = src.dim(1);
    Tensor pts = transform_points(backproject_grid(depth_ref.values, K), ref_to_src);
    Projection proj = project(pts, K);
    SampleResult sampled = bilinear_sample(src, proj.pixels);
    std::vector<std::uint8_t> mask(H * W);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = depth_ref.mask[i] && proj.valid[i] && sampled.in_bounds[i];
    }
    return {reshape(sampled.values, src.shape()), std::move(mask), std::move(proj.pixels)};
}

} // namespace xvc

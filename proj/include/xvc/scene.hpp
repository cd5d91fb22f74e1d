// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Synthetic scenes of textured axis-aligned rectangles and boxes, ray cast
// analytically into exact image/depth pairs.

#include "xvc/camera.hpp"
#include "xvc/config.hpp"
#include "xvc/parallel.hpp"
#include "xvc/tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace xvc {

enum class TextureKind { gradient, checker, noise };

/// Procedural RGB texture over 2D surface coordinates (meters). `gradient`
/// and `checker` are band-limited; `noise` is lattice value noise with cell
/// size `period`, meant as a high-frequency stress fixture.
struct Texture {
    TextureKind kind = TextureKind::gradient;
    double period = 2.0;
    double base = 0.5;
    double contrast = 0.25;
    double sharpness = 2.0; // checker edge steepness
    std::uint64_t seed = 0;

    std::array<double, 3> eval(double s, double t) const {
        constexpr double two_pi = 2.0 * std::numbers::pi;
        std::array<double, 3> rgb{};
        for (std::size_t c = 0; c < 3; ++c) {
            const double phase = 0.9 * static_cast<double>(c) + 0.37 * static_cast<double>(seed % 97);
            double v = 0.0;
            switch (kind) {
            case TextureKind::gradient:
                v = 0.5 * std::sin(two_pi * s / period + phase) + 0.5 * std::sin(two_pi * 0.8 * t / period + 2.0 * phase);
                break;
            case TextureKind::checker:
                v = std::tanh(sharpness * std::sin(two_pi * s / period + phase) * std::sin(two_pi * t / period)) /
                    std::tanh(sharpness);
                break;
            case TextureKind::noise: v = 2.0 * lattice_noise(s / period, t / period, c) - 1.0; break;
            }
            rgb[c] = base + contrast * v;
        }
        return rgb;
    }

  private:
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    double lattice(long i, long j, std::size_t c) const {
        const auto h = mix(seed ^ mix(static_cast<std::uint64_t>(i) * 73856093ULL ^
                                      static_cast<std::uint64_t>(j) * 19349663ULL ^ (c * 83492791ULL)));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    }

    double lattice_noise(double x, double y, std::size_t c) const {
        const double fx = std::floor(x);
        const double fy = std::floor(y);
        const auto i = static_cast<long>(fx);
        const auto j = static_cast<long>(fy);
        auto smooth = [](double a) { return a * a * (3.0 - 2.0 * a); };
        const double ax = smooth(x - fx);
        const double ay = smooth(y - fy);
        const double top = (1 - ax) * lattice(i, j, c) + ax * lattice(i + 1, j, c);
        const double bot = (1 - ax) * lattice(i, j + 1, c) + ax * lattice(i + 1, j + 1, c);
        return (1 - ay) * top + ay * bot;
    }
};

enum class PrimitiveKind { plane, box };

/// Axis-aligned rectangle (`plane`, zero extent along `normal_axis`) or box.
/// Textures are attached in object-local coordinates so they move with it.
struct Primitive {
    std::string id;
    PrimitiveKind kind = PrimitiveKind::box;
    Vec3 center{0, 0, 0};
    Vec3 half_extent{0.5, 0.5, 0.5};
    std::size_t normal_axis = 2; // planes only
    Texture texture;
};

struct SyntheticScene {
    std::vector<Primitive> primitives;
    double light_scale = 1.0;

    const Primitive *find(const std::string &id) const {
        for (const auto &p : primitives) {
            if (p.id == id) {
                return &p;
            }
        }
        return nullptr;
    }

    std::optional<std::size_t> index_of(const std::string &id) const {
        for (std::size_t i = 0; i < primitives.size(); ++i) {
            if (primitives[i].id == id) {
                return i;
            }
        }
        return std::nullopt;
    }

    static SyntheticScene from_config(const Config &cfg);
};

struct Hit {
    double t = std::numeric_limits<double>::infinity(); // ray parameter
    int primitive = -1;
    std::array<double, 3> color{};
};

namespace detail {

inline constexpr double kRayEpsilon = 1e-9;

inline std::optional<double> intersect(const Primitive &p, const Vec3 &o, const Vec3 &d) {
    if (p.kind == PrimitiveKind::plane) {
        const std::size_t a = p.normal_axis;
        if (d[a] == 0.0) {
            return std::nullopt;
        }
        const double t = (p.center[a] - o[a]) / d[a];
        if (!(t > kRayEpsilon)) {
            return std::nullopt;
        }
        for (std::size_t k = 0; k < 3; ++k) {
            if (k != a && std::abs(o[k] + t * d[k] - p.center[k]) > p.half_extent[k]) {
                return std::nullopt;
            }
        }
        return t;
    }
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < 3; ++k) {
        const double lo = p.center[k] - p.half_extent[k];
        const double hi = p.center[k] + p.half_extent[k];
        if (d[k] == 0.0) {
            if (o[k] < lo || o[k] > hi) {
                return std::nullopt;
            }
            continue;
        }
        double t0 = (lo - o[k]) / d[k];
        double t1 = (hi - o[k]) / d[k];
        if (t0 > t1) {
            std::swap(t0, t1);
        }
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
    }
    if (t_near > t_far) {
        return std::nullopt;
    }
    if (t_near > kRayEpsilon) {
        return t_near;
    }
    if (t_far > kRayEpsilon) {
        return t_far;
    }
    return std::nullopt;
}

/// 2D texture coordinates of a local hit point: the two axes spanning the
/// face that was hit.
inline std::pair<double, double> surface_coords(const Primitive &p, const Vec3 &local) {
    std::size_t face = p.normal_axis;
    if (p.kind == PrimitiveKind::box) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < 3; ++k) {
            const double gap = std::abs(std::abs(local[k]) - p.half_extent[k]);
            if (gap < best) {
                best = gap;
                face = k;
            }
        }
    }
    switch (face) {
    case 0: return {local[2], local[1]};
    case 1: return {local[0], local[2]};
    default: return {local[0], local[1]};
    }
}

} // namespace detail

/// Nearest intersection along o + t·d.
inline Hit cast_ray(const SyntheticScene &scene, const Vec3 &o, const Vec3 &d) {
    Hit hit;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        if (auto t = detail::intersect(scene.primitives[i], o, d); t && *t < hit.t) {
            hit.t = *t;
            hit.primitive = static_cast<int>(i);
        }
    }
    if (hit.primitive >= 0) {
        const auto &p = scene.primitives[static_cast<std::size_t>(hit.primitive)];
        const Vec3 local{o[0] + hit.t * d[0] - p.center[0], o[1] + hit.t * d[1] - p.center[1],
                         o[2] + hit.t * d[2] - p.center[2]};
        const auto [s, t] = detail::surface_coords(p, local);
        hit.color = p.texture.eval(s, t);
        for (auto &c : hit.color) {
            c *= scene.light_scale;
        }
    }
    return hit;
}

struct RenderResult {
    Tensor image;                 // H x W x 3
    DepthMap depth;               // z-depth, invalid where nothing was hit
    std::vector<int> primitive;   // H x W, index into scene.primitives or -1
};

/// Ray casts one ray per pixel center. `cam_pose` maps camera coordinates to
/// world coordinates. Depth is the z-distance in the camera frame.
inline RenderResult render(const SyntheticScene &scene, const CameraIntrinsics &K, const RigidTransform &cam_pose,
                           std::size_t H, std::size_t W) {
    K.validate();
    detail::require(H > 0 && W > 0, "render: image size must be positive");
    std::vector<double> image(H * W * 3, 0.0);
    std::vector<double> depth(H * W, 0.0);
    std::vector<int> prim(H * W, -1);
    parallel_for(H, [&](std::size_t v) {
        for (std::size_t u = 0; u < W; ++u) {
            // Camera ray with unit z, so the hit parameter equals z-depth.
            const Vec3 dc{(static_cast<double>(u) - K.u0) / K.fx, (static_cast<double>(v) - K.v0) / K.fy, 1.0};
            const Hit hit = cast_ray(scene, cam_pose.translation, matvec(cam_pose.rotation, dc));
            const std::size_t i = v * W + u;
            if (hit.primitive < 0) {
                continue;
            }
            depth[i] = hit.t;
            prim[i] = hit.primitive;
            std::copy(hit.color.begin(), hit.color.end(), image.begin() + static_cast<std::ptrdiff_t>(3 * i));
        }
    });
    if (std::none_of(prim.begin(), prim.end(), [](int p) { return p >= 0; })) {
        throw DomainError("render: no geometry visible from this camera");
    }
    std::vector<std::uint8_t> mask(H * W);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = prim[i] >= 0;
    }
    return {Tensor({H, W, 3}, std::move(image)), DepthMap(Tensor({H, W}, std::move(depth)), std::move(mask)),
            std::move(prim)};
}

/// Copy of `scene` with object `object_id` translated by `delta`.
inline SyntheticScene perturb(const SyntheticScene &scene, const std::string &object_id, const Vec3 &delta) {
    const auto idx = scene.index_of(object_id);
    detail::require(idx.has_value(), "perturb: unknown object '" + object_id + "'");
    SyntheticScene out = scene;
    for (std::size_t k = 0; k < 3; ++k) {
        out.primitives[*idx].center[k] += delta[k];
    }
    return out;
}

/// Whether world point `p` can be seen from `camera_center` (nothing in the
/// scene lies strictly between them, up to `tol` meters).
inline bool visible_from(const SyntheticScene &scene, const Vec3 &camera_center, const Vec3 &p, double tol = 1e-6) {
    const Vec3 d{p[0] - camera_center[0], p[1] - camera_center[1], p[2] - camera_center[2]};
    const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if (len == 0.0) {
        return true;
    }
    const Vec3 u{d[0] / len, d[1] / len, d[2] / len};
    const Hit hit = cast_ray(scene, camera_center, u);
    return hit.primitive < 0 || hit.t >= len - tol;
}

/// Reference pixels whose surface point is hidden from the source camera in
/// `src_scene`. Pixels without geometry are reported as not occluded.
inline std::vector<std::uint8_t> occlusion_mask(const SyntheticScene &src_scene, const DepthMap &depth_ref,
                                                const CameraIntrinsics &K, const RigidTransform &ref_pose,
                                                const RigidTransform &src_pose) {
    const std::size_t H = depth_ref.height();
    const std::size_t W = depth_ref.width();
    std::vector<std::uint8_t> occluded(H * W, 0);
    parallel_for(H, [&](std::size_t v) {
        for (std::size_t u = 0; u < W; ++u) {
            const std::size_t i = v * W + u;
            if (!depth_ref.mask[i]) {
                continue;
            }
            const double d = depth_ref.values.value(i);
            const Vec3 pc{d * (static_cast<double>(u) - K.u0) / K.fx, d * (static_cast<double>(v) - K.v0) / K.fy, d};
            occluded[i] = !visible_from(src_scene, src_pose.translation, ref_pose.apply(pc), 1e-6 * (1.0 + d));
        }
    });
    return occluded;
}

namespace detail {

inline Vec3 config_vec3(const ConfigSection &s, const std::string &key, Vec3 fallback) {
    if (!s.has(key)) {
        return fallback;
    }
    const auto v = s.require_doubles(key, 3);
    return {v[0], v[1], v[2]};
}

inline Texture texture_from_config(const ConfigSection &s) {
    Texture t;
    const auto kind = s.get_string("texture", "gradient");
    if (kind == "gradient") {
        t.kind = TextureKind::gradient;
    } else if (kind == "checker") {
        t.kind = TextureKind::checker;
    } else if (kind == "noise") {
        t.kind = TextureKind::noise;
    } else {
        throw ConfigError("unknown texture '" + kind + "'");
    }
    t.period = s.get_double("period", t.period);
    t.base = s.get_double("base", t.base);
    t.contrast = s.get_double("contrast", t.contrast);
    t.sharpness = s.get_double("sharpness", t.sharpness);
    t.seed = static_cast<std::uint64_t>(s.get_int("seed", 0));
    if (!(t.period > 0.0)) {
        throw ConfigError("texture period must be positive");
    }
    return t;
}

} // namespace detail

/// Global `light_scale`; one `[plane]` section per rectangle (keys id, axis =
/// x|y|z, center, half_extent) and one `[box]` per box (id, center,
/// half_extent). Both take texture, period, base, contrast, sharpness, seed.
inline SyntheticScene SyntheticScene::from_config(const Config &cfg) {
    SyntheticScene scene;
    scene.light_scale = cfg.section("scene").get_double("light_scale", cfg.global().get_double("light_scale", 1.0));
    for (const auto &s : cfg.all()) {
        if (s.name() != "plane" && s.name() != "box") {
            continue;
        }
        Primitive p;
        p.id = s.get_string("id", s.name() + std::to_string(scene.primitives.size()));
        p.center = detail::config_vec3(s, "center", {0, 0, 0});
        p.half_extent = detail::config_vec3(s, "half_extent", {0.5, 0.5, 0.5});
        p.texture = detail::texture_from_config(s);
        if (s.name() == "plane") {
            p.kind = PrimitiveKind::plane;
            const auto axis = s.get_string("axis", "z");
            if (axis == "x") {
                p.normal_axis = 0;
            } else if (axis == "y") {
                p.normal_axis = 1;
            } else if (axis == "z") {
                p.normal_axis = 2;
            } else {
                throw ConfigError("plane axis must be x, y or z");
            }
            p.half_extent[p.normal_axis] = 0.0;
        } else {
            p.kind = PrimitiveKind::box;
            for (double h : p.half_extent) {
                if (!(h > 0.0)) {
                    throw ConfigError("box '" + p.id + "': half extents must be positive");
                }
            }
        }
        if (scene.find(p.id)) {
            throw ConfigError("duplicate primitive id '" + p.id + "'");
        }
        scene.primitives.push_back(std::move(p));
    }
    if (!(scene.light_scale > 0.0)) {
        throw ConfigError("light_scale must be positive");
    }
    return scene;
}

} // namespace xvc

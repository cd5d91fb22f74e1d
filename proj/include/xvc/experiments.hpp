// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Desk-scale experiments behind the command-line harness. Each run reads an
// effective config, writes CSV (plus images) into an output directory and
// returns the outcome of its declared checks.

#include "xvc/camera.hpp"
#include "xvc/config.hpp"
#include "xvc/deformable.hpp"
#include "xvc/gradcheck.hpp"
#include "xvc/image_io.hpp"
#include "xvc/metrics.hpp"
#include "xvc/parallel.hpp"
#include "xvc/photometric.hpp"
#include "xvc/scene.hpp"
#include "xvc/tensor_io.hpp"
#include "xvc/voxel.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace xvc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Total loss

struct LossWeights {
    double alpha = 1.0;  // photometric
    double beta = 0.01;  // smoothness
    double gamma = 0.05; // depth feature alignment
    double eta = 0.05;   // voxel density alignment

    static LossWeights from_config(const ConfigSection &s) {
        LossWeights w;
        w.alpha = s.get_double("alpha", w.alpha);
        w.beta = s.get_double("beta", w.beta);
        w.gamma = s.get_double("gamma", w.gamma);
        w.eta = s.get_double("eta", w.eta);
        return w;
    }
};

struct LossTerms {
    double photometric = 0.0;
    double smoothness = 0.0;
    double dfa = 0.0;
    double vda = 0.0;
};

struct LossBreakdownRow {
    std::string term;
    double raw = 0.0;
    double weight = 0.0;
    double weighted = 0.0;
};

struct TotalLoss {
    std::vector<LossBreakdownRow> rows;
    double total = 0.0;
};

/// α·photometric + β·smoothness + γ·dfa + η·vda, with each term listed
/// before and after weighting.
inline TotalLoss total_loss(const LossTerms &t, const LossWeights &w = {}) {
    TotalLoss out;
    out.rows = {{"photometric", t.photometric, w.alpha, w.alpha * t.photometric},
                {"smoothness", t.smoothness, w.beta, w.beta * t.smoothness},
                {"dfa", t.dfa, w.gamma, w.gamma * t.dfa},
                {"vda", t.vda, w.eta, w.eta * t.vda}};
    for (const auto &r : out.rows) {
        out.total += r.weighted;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run plumbing

struct Check {
    std::string name;
    double value = 0.0;
    std::string relation; // "<", ">", "==", "<="
    double threshold = 0.0;
    bool pass = false;
};

inline Check check_less(std::string name, double value, double threshold) {
    return {std::move(name), value, "<", threshold, value < threshold};
}

inline Check check_greater(std::string name, double value, double threshold) {
    return {std::move(name), value, ">", threshold, value > threshold};
}

inline Check check_equal(std::string name, double value, double expected) {
    return {std::move(name), value, "==", expected, value == expected};
}

/// |value - expected| <= tol; `threshold` holds the tolerance.
inline Check check_near(std::string name, double value, double expected, double tol) {
    return {std::move(name), value - expected, "|d|<=", tol, std::abs(value - expected) <= tol};
}

struct ExperimentResult {
    std::string experiment;
    std::vector<Check> checks;
    std::vector<fs::path> files;
    std::vector<std::string> warnings;

    bool ok() const {
        for (const auto &c : checks) {
            if (!c.pass) {
                return false;
            }
        }
        return true;
    }
};

struct RunContext {
    std::string experiment;
    Config config;               // effective config: file contents, seed and sweep overrides
    fs::path out_dir = ".";
    fs::path base_dir = ".";     // relative paths in the config resolve against this
    bool gnuplot = false;

    std::uint64_t seed() const { return static_cast<std::uint64_t>(config.global().get_int("seed", 0)); }

    /// Global keys overlaid with the experiment's own section.
    ConfigSection params() const {
        ConfigSection p(experiment);
        for (const auto &[k, v] : config.global().entries()) {
            p.set(k, v);
        }
        for (const auto *s : config.sections(experiment)) {
            for (const auto &[k, v] : s->entries()) {
                p.set(k, v);
            }
        }
        return p;
    }

    fs::path resolve(const std::string &path) const {
        const fs::path p(path);
        return p.is_absolute() ? p : base_dir / p;
    }

    fs::path output(const std::string &name) const { return out_dir / name; }
};

/// Keys of each experiment that take a list and may be swept.
inline std::set<std::string> sweepable_keys(const std::string &experiment) {
    if (experiment == "photometric") {
        return {"light_scales"};
    }
    if (experiment == "robustness") {
        return {"deltas"};
    }
    if (experiment == "voxelsweep") {
        return {"grids"};
    }
    if (experiment == "gradcheck") {
        return {"ops"};
    }
    return {};
}

inline const std::vector<std::string> &experiment_names() {
    static const std::vector<std::string> names = {"gradcheck", "photometric", "robustness",
                                                   "voxelsweep", "totalloss",   "metrics"};
    return names;
}

/// Builds the effective config: `seed` overrides the global seed, and each
/// sweep "k=v1,v2,..." replaces list key k of the experiment.
inline RunContext make_context(const std::string &experiment, Config cfg, const fs::path &out_dir,
                               const fs::path &base_dir = ".", std::optional<std::uint64_t> seed = std::nullopt,
                               const std::vector<std::string> &sweeps = {}) {
    RunContext ctx;
    ctx.experiment = experiment;
    if (seed) {
        cfg.global().set("seed", std::to_string(*seed));
    }
    const auto allowed = sweepable_keys(experiment);
    for (const auto &item : sweeps) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--sweep expects k=v1,v2,..., got '" + item + "'");
        }
        const std::string key(detail::trim(std::string_view(item).substr(0, eq)));
        if (!allowed.count(key)) {
            std::string list;
            for (const auto &k : allowed) {
                list += (list.empty() ? "" : ", ") + k;
            }
            throw ConfigError("'" + key + "' is not a sweepable key of " + experiment +
                              (list.empty() ? " (it has none)" : " (expected one of: " + list + ")"));
        }
        cfg.section_mut(experiment).set(key, std::string(detail::trim(std::string_view(item).substr(eq + 1))));
    }
    ctx.config = std::move(cfg);
    ctx.out_dir = out_dir;
    ctx.base_dir = base_dir;
    fs::create_directories(out_dir);
    return ctx;
}

/// %.17g, round-trippable.
inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes "# config_hash=<hash>", the header and the rows with LF endings.
inline void write_csv(const fs::path &path, const std::string &config_hash, const std::string &header,
                      const std::vector<std::string> &rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << "# config_hash=" << config_hash << '\n' << header << '\n';
    for (const auto &r : rows) {
        out << r << '\n';
    }
}

inline std::string join(const std::vector<std::string> &cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        s += (i ? "," : "") + cells[i];
    }
    return s;
}

/// Items separated by commas, semicolons or whitespace; the three components
/// of an item are separated by ':' or 'x', e.g. "0.1:0:0, 0.6:0:0".
inline std::vector<Vec3> parse_triples(const std::string &text, const std::string &what) {
    std::vector<Vec3> out;
    std::string item;
    auto flush = [&] {
        if (item.empty()) {
            return;
        }
        std::vector<double> parts;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= item.size(); ++i) {
            if (i == item.size() || item[i] == ':' || item[i] == 'x') {
                parts.push_back(detail::parse_double(item.substr(start, i - start), what));
                start = i + 1;
            }
        }
        if (parts.size() != 3) {
            throw ConfigError(what + ": expected triples like a:b:c, got '" + item + "'");
        }
        out.push_back({parts[0], parts[1], parts[2]});
        item.clear();
    };
    for (char c : text) {
        if (c == ',' || c == ';' || c == ' ' || c == '\t') {
            flush();
        } else {
            item += c;
        }
    }
    flush();
    return out;
}

namespace detail {

inline std::string triple_str(const Vec3 &v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%g:%g:%g", v[0], v[1], v[2]);
    return buf;
}

inline void maybe_gnuplot(const RunContext &ctx, ExperimentResult &res, const std::string &script) {
    if (!ctx.gnuplot && !ctx.params().get_bool("gnuplot", false)) {
        return;
    }
    const auto path = ctx.output(ctx.experiment + ".gp");
    std::ofstream out(path, std::ios::binary);
    out << script;
    res.files.push_back(path);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Scenes and camera rigs

/// A reference camera, a source camera and a scene with a movable object.
struct ViewSetup {
    SyntheticScene scene;
    std::string object = "object";
    CameraIntrinsics K;
    std::size_t height = 48;
    std::size_t width = 64;
    RigidTransform ref_pose;  // camera -> world
    RigidTransform src_pose;  // camera -> world

    /// Maps reference-camera coordinates into source-camera coordinates.
    RigidTransform ref_to_src() const { return src_pose.inverse().compose(ref_pose); }
};

namespace detail {

inline Primitive make_plane(std::string id, std::size_t axis, Vec3 center, Vec3 half, Texture tex) {
    Primitive p;
    p.id = std::move(id);
    p.kind = PrimitiveKind::plane;
    p.normal_axis = axis;
    p.center = center;
    p.half_extent = half;
    p.half_extent[axis] = 0.0;
    p.texture = tex;
    return p;
}

inline Primitive make_box(std::string id, Vec3 center, Vec3 half, Texture tex) {
    Primitive p;
    p.id = std::move(id);
    p.kind = PrimitiveKind::box;
    p.center = center;
    p.half_extent = half;
    p.texture = tex;
    return p;
}

} // namespace detail

/// Back wall, floor and a textured box in front of the wall.
inline ViewSetup default_street_setup() {
    ViewSetup v;
    Texture wall{TextureKind::gradient, 6.0, 0.5, 0.3, 2.0, 1};
    Texture floor{TextureKind::gradient, 6.0, 0.45, 0.25, 2.0, 2};
    Texture obj{TextureKind::checker, 0.8, 0.55, 0.35, 1.5, 3};
    v.scene.primitives = {detail::make_plane("wall", 2, {0, 0, 12}, {8, 5, 0}, wall),
                          detail::make_plane("floor", 1, {0, 1.5, 6}, {8, 0, 6}, floor),
                          detail::make_box("object", {-0.4, 0.6, 6.0}, {0.6, 0.6, 0.6}, obj)};
    v.K = {64.0, 64.0, 31.5, 23.5};
    v.src_pose = RigidTransform::from_axis_angle({0, 1, 0}, 0.012, {0.23, -0.04, 0.15});
    return v;
}

/// Back wall and a 0.2 m box centered in a 0.5 m voxel of the default
/// robustness grid.
inline ViewSetup default_small_box_setup() {
    ViewSetup v;
    Texture wall{TextureKind::gradient, 2.0, 0.5, 0.3, 2.0, 4};
    Texture obj{TextureKind::checker, 0.1, 0.55, 0.35, 1.5, 5};
    v.scene.primitives = {detail::make_plane("wall", 2, {0, 0, 12}, {8, 5, 0}, wall),
                          detail::make_box("object", {0.25, 0.25, 5.75}, {0.1, 0.1, 0.1}, obj)};
    v.K = {200.0, 200.0, 31.5, 23.5};
    v.src_pose = RigidTransform::from_translation({0.1, 0.0, 0.0});
    return v;
}

/// Scene from `scene = path` (or inline [plane]/[box] sections), camera from
/// fx, fy, u0, v0, width, height, source pose from source_translation and
/// source_rotation (9 values, row-major). Unset keys keep `defaults`.
inline ViewSetup load_setup(const RunContext &ctx, const ConfigSection &p, ViewSetup defaults) {
    ViewSetup v = std::move(defaults);
    if (p.has("scene")) {
        v.scene = SyntheticScene::from_config(Config::load(ctx.resolve(p.require_string("scene"))));
    } else if (!ctx.config.sections("plane").empty() || !ctx.config.sections("box").empty()) {
        v.scene = SyntheticScene::from_config(ctx.config);
    }
    v.object = p.get_string("object", v.object);
    v.K.fx = p.get_double("fx", v.K.fx);
    v.K.fy = p.get_double("fy", v.K.fy);
    v.K.u0 = p.get_double("u0", v.K.u0);
    v.K.v0 = p.get_double("v0", v.K.v0);
    v.width = static_cast<std::size_t>(p.get_int("width", static_cast<long>(v.width)));
    v.height = static_cast<std::size_t>(p.get_int("height", static_cast<long>(v.height)));
    if (!(v.K.fx > 0.0 && v.K.fy > 0.0) || v.width < 4 || v.height < 4) {
        throw ConfigError("camera: need fx, fy > 0 and an image of at least 4 x 4");
    }
    if (p.has("source_translation") || p.has("source_rotation")) {
        ConfigSection pose;
        if (p.has("source_translation")) {
            pose.set("translation", p.require_string("source_translation"));
        }
        if (p.has("source_rotation")) {
            pose.set("rotation", p.require_string("source_rotation"));
        }
        v.src_pose = RigidTransform::from_config(pose);
    }
    if (!v.scene.find(v.object)) {
        throw ConfigError("scene has no object '" + v.object + "'");
    }
    return v;
}

/// Backprojected reference cloud in reference-camera coordinates, with a
/// per-point flag for points on `object`.
struct LabeledCloud {
    PointCloud cloud;
    std::vector<std::uint8_t> on_object;
    std::size_t object_points = 0;
};

inline LabeledCloud labeled_reference_cloud(const ViewSetup &v, const RenderResult &ref) {
    LabeledCloud out;
    out.cloud = backproject(ref.depth, v.K);
    const auto obj = static_cast<int>(*v.scene.index_of(v.object));
    out.on_object.resize(out.cloud.size());
    for (std::size_t i = 0; i < out.cloud.size(); ++i) {
        out.on_object[i] = ref.primitive[out.cloud.pixels[i]] == obj;
        out.object_points += out.on_object[i];
    }
    return out;
}

/// Copy of `pts` (n x 3) with flagged rows displaced by `delta`.
inline Tensor displace(const Tensor &pts, const std::vector<std::uint8_t> &which, const Vec3 &delta) {
    std::vector<double> v(pts.data().begin(), pts.data().end());
    for (std::size_t i = 0; i < which.size(); ++i) {
        if (which[i]) {
            for (std::size_t c = 0; c < 3; ++c) {
                v[3 * i + c] += delta[c];
            }
        }
    }
    return Tensor(pts.shape(), std::move(v));
}

// ---------------------------------------------------------------------------
// Gradient checks

struct GradCheckCase {
    std::string name;
    /// Returns the max relative error; `corrupt` routes the checked input
    /// through a deliberately wrong backward.
    std::function<double(std::mt19937_64 &rng, bool corrupt, double eps)> run;
};

namespace detail {

inline Tensor uniform_tensor(Shape shape, std::mt19937_64 &rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto &x : v) {
        x = d(rng);
    }
    return Tensor(std::move(shape), std::move(v));
}

/// Uniform in [lo, hi] with random sign.
inline Tensor signed_tensor(Shape shape, std::mt19937_64 &rng, double lo, double hi) {
    Tensor t = uniform_tensor(shape, rng, lo, hi);
    std::bernoulli_distribution flip(0.5);
    std::vector<double> v(t.data().begin(), t.data().end());
    for (auto &x : v) {
        x = flip(rng) ? -x : x;
    }
    return Tensor(std::move(shape), std::move(v));
}

inline Tensor maybe_corrupt(const Tensor &t, bool corrupt) { return corrupt ? corrupt_backward(t) : t; }

/// Random projection of any tensor to a scalar, so that every output
/// element's gradient is exercised with a distinct weight.
inline Tensor probe(const Tensor &y, std::uint64_t salt) {
    std::mt19937_64 rng(0x51ed27u ^ salt);
    return sum(y * uniform_tensor(y.shape(), rng, -1.0, 1.0));
}

inline Tensor smooth_image(std::size_t H, std::size_t W, std::size_t C, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> ph(0.0, 6.0);
    const double a = ph(rng);
    const double b = ph(rng);
    std::vector<double> v(H * W * C);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t c = 0; c < C; ++c) {
                v[(y * W + x) * C + c] =
                    0.5 + 0.25 * std::sin(0.7 * static_cast<double>(x) + a + c) * std::cos(0.5 * static_cast<double>(y) + b);
            }
        }
    }
    return Tensor({H, W, C}, std::move(v));
}

inline ConvStack random_conv_stack(std::size_t cout, std::size_t cin, std::size_t k, std::mt19937_64 &rng) {
    return ConvStack{{ConvLayer{uniform_tensor({cout, cin, k, k}, rng, -0.3, 0.3), uniform_tensor({cout}, rng, -0.1, 0.1)}}};
}

} // namespace detail

/// Every differentiable operation, checked at 8 x 8 scale. Straight-through
/// operations are compared against their declared surrogates.
inline const std::vector<GradCheckCase> &gradcheck_registry() {
    using detail::maybe_corrupt;
    using detail::probe;
    using detail::signed_tensor;
    using detail::uniform_tensor;
    static const std::vector<GradCheckCase> cases = [] {
        std::vector<GradCheckCase> c;
        constexpr std::size_t S = 8;
        auto unary = [&](std::string name, std::function<Tensor(const Tensor &)> op, double lo, double hi,
                         bool signed_input) {
            c.push_back({std::move(name), [op, lo, hi, signed_input](std::mt19937_64 &rng, bool bad, double eps) {
                             Tensor x = signed_input ? signed_tensor({S, S}, rng, lo, hi) : uniform_tensor({S, S}, rng, lo, hi);
                             return finite_difference_check(
                                 [&](const Tensor &t) { return probe(op(maybe_corrupt(t, bad)), 1); }, x, eps);
                         }});
        };
        auto binary = [&](std::string name, std::function<Tensor(const Tensor &, const Tensor &)> op, double lo,
                          double hi) {
            c.push_back({name + "/lhs", [op, lo, hi](std::mt19937_64 &rng, bool bad, double eps) {
                             Tensor a = uniform_tensor({S, S}, rng, lo, hi);
                             Tensor b = uniform_tensor({S}, rng, lo, hi); // broadcast along rows
                             return finite_difference_check(
                                 [&](const Tensor &t) { return probe(op(maybe_corrupt(t, bad), b), 2); }, a, eps);
                         }});
            c.push_back({name + "/rhs", [op, lo, hi](std::mt19937_64 &rng, bool bad, double eps) {
                             Tensor a = uniform_tensor({S, S}, rng, lo, hi);
                             Tensor b = uniform_tensor({S}, rng, lo, hi);
                             return finite_difference_check(
                                 [&](const Tensor &t) { return probe(op(a, maybe_corrupt(t, bad)), 3); }, b, eps);
                         }});
        };
        binary("add", [](const Tensor &a, const Tensor &b) { return add(a, b); }, -1.0, 1.0);
        binary("sub", [](const Tensor &a, const Tensor &b) { return sub(a, b); }, -1.0, 1.0);
        binary("mul", [](const Tensor &a, const Tensor &b) { return mul(a, b); }, -1.0, 1.0);
        binary("div", [](const Tensor &a, const Tensor &b) { return div(a, b); }, 0.5, 2.0);
        unary("neg", [](const Tensor &t) { return neg(t); }, 0.1, 1.0, true);
        unary("abs", [](const Tensor &t) { return abs(t); }, 0.1, 1.0, true);
        unary("exp", [](const Tensor &t) { return exp(t); }, 0.0, 1.0, true);
        unary("log", [](const Tensor &t) { return log(t); }, 0.2, 2.0, false);
        unary("sqrt", [](const Tensor &t) { return sqrt(t); }, 0.2, 2.0, false);
        unary("clip", [](const Tensor &t) { return clip(t, -0.5, 0.5); }, 0.05, 0.45, true);
        c.push_back({"clip/saturated", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({S, S}, rng, 0.6, 1.5);
                         return finite_difference_check(
                             [&](const Tensor &t) { return probe(clip(maybe_corrupt(t, bad), -0.5, 0.5), 4); }, x, eps);
                     }});
        c.push_back({"floor_ste", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({S, S}, rng, 0.1, 0.9) + uniform_tensor({S, S}, rng, 0.0, 3.0).detach();
                         return finite_difference_check([&](const Tensor &t) { return probe(floor_ste(maybe_corrupt(t, bad)), 5); },
                                                        [&](const Tensor &t) { return probe(t, 5); }, x, eps);
                     }});
        c.push_back({"sign_ste", [](std::mt19937_64 &rng, bool bad, double eps) {
                         // Inside and outside the surrogate's clip band (0, 1).
                         Tensor x = uniform_tensor({S, S}, rng, -0.8, 1.8);
                         std::vector<double> v(x.data().begin(), x.data().end());
                         for (auto &e : v) {
                             if (std::abs(e) < 0.05 || std::abs(e - 1.0) < 0.05) {
                                 e += 0.1;
                             }
                         }
                         return finite_difference_check(
                             [&](const Tensor &t) { return probe(sign_ste(maybe_corrupt(t, bad)), 6); },
                             [&](const Tensor &t) { return probe(clip(2.0 * t - 1.0, -1.0, 1.0), 6); }, Tensor(x.shape(), v), eps);
                     }});
        const std::vector<std::pair<std::string, ReduceOp>> reductions = {
            {"sum", ReduceOp::sum}, {"mean", ReduceOp::mean}, {"l1_norm", ReduceOp::l1_norm}, {"l2_norm_sq", ReduceOp::l2_norm_sq}};
        for (const auto &[name, op] : reductions) {
            c.push_back({"reduce/" + name, [op = op](std::mt19937_64 &rng, bool bad, double eps) {
                             Tensor x = signed_tensor({S, S, 2}, rng, 0.1, 1.0);
                             return finite_difference_check(
                                 [&](const Tensor &t) {
                                     return probe(reduce(op, maybe_corrupt(t, bad), std::vector<std::size_t>{0, 2}), 7) +
                                            reduce(op, t);
                                 },
                                 x, eps);
                         }});
        }
        c.push_back({"reshape", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({S, S}, rng, -1, 1);
                         return finite_difference_check([&](const Tensor &t) { return probe(reshape(maybe_corrupt(t, bad), {4, 16}), 8); }, x, eps);
                     }});
        c.push_back({"broadcast_to", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({1, S}, rng, -1, 1);
                         return finite_difference_check([&](const Tensor &t) { return probe(broadcast_to(maybe_corrupt(t, bad), {S, S}), 9); }, x, eps);
                     }});
        c.push_back({"permute", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({S, S, 3}, rng, -1, 1);
                         return finite_difference_check([&](const Tensor &t) { return probe(permute(maybe_corrupt(t, bad), {2, 0, 1}), 10); }, x, eps);
                     }});
        c.push_back({"slice", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({S, S}, rng, -1, 1);
                         return finite_difference_check([&](const Tensor &t) { return probe(slice(maybe_corrupt(t, bad), 1, 2, 5), 11); }, x, eps);
                     }});
        c.push_back({"index_select", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({S, S}, rng, -1, 1);
                         const std::vector<std::size_t> rows = {7, 0, 3, 3, 5};
                         return finite_difference_check([&](const Tensor &t) { return probe(index_select(maybe_corrupt(t, bad), rows), 12); }, x, eps);
                     }});
        c.push_back({"concat", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({S, S}, rng, -1, 1);
                         Tensor y = uniform_tensor({3, S}, rng, -1, 1);
                         return finite_difference_check([&](const Tensor &t) { return probe(concat({y, maybe_corrupt(t, bad), t}), 13); }, x, eps);
                     }});

        // Camera geometry.
        const CameraIntrinsics K{8.0, 8.0, 3.5, 3.5};
        const auto pose = RigidTransform::from_axis_angle({0.2, 1.0, 0.1}, 0.02, {0.0731, 0.0417, 0.05});
        c.push_back({"backproject", [K](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor d = uniform_tensor({S, S}, rng, 2.0, 6.0);
                         return finite_difference_check([&](const Tensor &t) { return probe(backproject_grid(maybe_corrupt(t, bad), K), 14); }, d, eps);
                     }});
        c.push_back({"transform_points", [pose](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor p = uniform_tensor({S * S, 3}, rng, -2.0, 2.0);
                         return finite_difference_check([&](const Tensor &t) { return probe(transform_points(maybe_corrupt(t, bad), pose), 15); }, p, eps);
                     }});
        c.push_back({"project", [K](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor p = uniform_tensor({S * S, 3}, rng, -1.0, 1.0) + Tensor({3}, {0.0, 0.0, 4.0});
                         return finite_difference_check(
                             [&](const Tensor &t) {
                                 Projection pr = project(maybe_corrupt(t, bad), K);
                                 return probe(pr.pixels, 16) + probe(pr.depths, 17);
                             },
                             p.detach(), eps);
                     }});
        auto sample_coords = [](std::mt19937_64 &rng) {
            Tensor xy = uniform_tensor({S * S, 2}, rng, 0.2, 6.8);
            std::vector<double> v(xy.data().begin(), xy.data().end());
            for (auto &e : v) {
                const double f = e - std::floor(e);
                if (f < 0.05 || f > 0.95) {
                    e += 0.3; // keep away from cell edges
                }
            }
            return Tensor(xy.shape(), std::move(v));
        };
        c.push_back({"bilinear_sample/image", [sample_coords](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor img = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         Tensor xy = sample_coords(rng);
                         return finite_difference_check([&](const Tensor &t) { return probe(bilinear_sample(maybe_corrupt(t, bad), xy).values, 18); }, img, eps);
                     }});
        c.push_back({"bilinear_sample/coords", [sample_coords](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor img = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         Tensor xy = sample_coords(rng);
                         return finite_difference_check([&](const Tensor &t) { return probe(bilinear_sample(img, maybe_corrupt(t, bad)).values, 19); }, xy, eps);
                     }});
        c.push_back({"warp_image/source", [K, pose](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor src = detail::smooth_image(S, S, 3, rng);
                         DepthMap d = DepthMap::from_values(uniform_tensor({S, S}, rng, 3.0, 5.0));
                         return finite_difference_check([&](const Tensor &t) { return probe(warp_image(maybe_corrupt(t, bad), d, pose, K).warped, 20); }, src, eps);
                     }});
        c.push_back({"warp_image/depth", [K, pose](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor src = detail::smooth_image(S, S, 3, rng);
                         Tensor d = uniform_tensor({S, S}, rng, 3.0, 5.0);
                         return finite_difference_check(
                             [&](const Tensor &t) {
                                 return probe(warp_image(src, DepthMap::from_values(maybe_corrupt(t, bad)), pose, K).warped, 21);
                             },
                             d, eps);
                     }});

        // Photometric consistency.
        c.push_back({"box_filter", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor img = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         return finite_difference_check([&](const Tensor &t) { return probe(box_filter(maybe_corrupt(t, bad), 3), 22); }, img, eps);
                     }});
        c.push_back({"ssim_dissimilarity", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor a = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         Tensor b = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         return finite_difference_check([&](const Tensor &t) { return probe(ssim_dissimilarity(a, maybe_corrupt(t, bad), {}), 23); }, b, eps);
                     }});
        c.push_back({"photometric_loss", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor a = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         Tensor b = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         std::vector<std::uint8_t> mask(S * S, 1);
                         mask[9] = mask[30] = 0;
                         return finite_difference_check([&](const Tensor &t) { return photometric_loss(a, maybe_corrupt(t, bad), mask); }, b, eps);
                     }});
        c.push_back({"photometric_loss_min", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor a = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         Tensor b = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         Tensor d = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         std::vector<std::uint8_t> m1(S * S, 1), m2(S * S, 1);
                         m1[3] = 0;
                         m2[40] = 0;
                         return finite_difference_check(
                             [&](const Tensor &t) { return photometric_loss_min(a, {maybe_corrupt(t, bad), d}, {m1, m2}); }, b, eps);
                     }});
        c.push_back({"smoothness_loss", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor img = uniform_tensor({S, S, 3}, rng, 0.0, 1.0);
                         Tensor d = uniform_tensor({S, S}, rng, 1.0, 10.0);
                         return finite_difference_check([&](const Tensor &t) { return smoothness_loss(maybe_corrupt(t, bad), img); }, d, eps);
                     }});

        // Deformable alignment.
        auto offsets = [](std::mt19937_64 &rng) { return uniform_tensor({144, S, S}, rng, 0.1, 0.4); };
        c.push_back({"deformable_sample/source", [offsets](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor f = uniform_tensor({8, S, S}, rng, -1, 1);
                         OffsetField o(8, 3, offsets(rng));
                         KernelWeights w(8, 3, uniform_tensor({8, 9}, rng, -1, 1));
                         return finite_difference_check([&](const Tensor &t) { return probe(deformable_sample(maybe_corrupt(t, bad), o, w), 24); }, f, eps);
                     }});
        c.push_back({"deformable_sample/offsets", [offsets](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor f = permute(detail::smooth_image(S, S, 8, rng), {2, 0, 1}).detach();
                         Tensor o = offsets(rng);
                         KernelWeights w(8, 3, uniform_tensor({8, 9}, rng, -1, 1));
                         return finite_difference_check(
                             [&](const Tensor &t) { return probe(deformable_sample(f, OffsetField(8, 3, maybe_corrupt(t, bad)), w), 25); }, o, eps);
                     }});
        c.push_back({"deformable_sample/weights", [offsets](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor f = uniform_tensor({8, S, S}, rng, -1, 1);
                         OffsetField o(8, 3, offsets(rng));
                         Tensor w = uniform_tensor({8, 9}, rng, -1, 1);
                         return finite_difference_check(
                             [&](const Tensor &t) { return probe(deformable_sample(f, o, KernelWeights(8, 3, maybe_corrupt(t, bad))), 26); }, w, eps);
                     }});
        c.push_back({"conv2d/input", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({3, S, S}, rng, -1, 1);
                         Tensor w = uniform_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
                         Tensor b = uniform_tensor({4}, rng, -0.5, 0.5);
                         return finite_difference_check([&](const Tensor &t) { return probe(conv2d(maybe_corrupt(t, bad), w, b), 27); }, x, eps);
                     }});
        c.push_back({"conv2d/weight", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({3, S, S}, rng, -1, 1);
                         Tensor w = uniform_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
                         Tensor b = uniform_tensor({4}, rng, -0.5, 0.5);
                         return finite_difference_check([&](const Tensor &t) { return probe(conv2d(x, maybe_corrupt(t, bad), b), 28); }, w, eps);
                     }});
        c.push_back({"conv2d/bias", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor x = uniform_tensor({3, S, S}, rng, -1, 1);
                         Tensor w = uniform_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
                         Tensor b = uniform_tensor({4}, rng, -0.5, 0.5);
                         return finite_difference_check([&](const Tensor &t) { return probe(conv2d(x, w, maybe_corrupt(t, bad)), 29); }, b, eps);
                     }});
        c.push_back({"recon_loss", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor a = uniform_tensor({S, S, 3}, rng, 0, 1);
                         Tensor b = uniform_tensor({S, S, 3}, rng, 0, 1);
                         return finite_difference_check([&](const Tensor &t) { return recon_loss(a, maybe_corrupt(t, bad)); }, b, eps);
                     }});
        c.push_back({"df_loss", [offsets](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor fr = uniform_tensor({8, S, S}, rng, -1, 1);
                         Tensor fs_ = uniform_tensor({8, S, S}, rng, -1, 1);
                         Tensor o = offsets(rng);
                         KernelWeights w(8, 3, uniform_tensor({8, 9}, rng, -1, 1));
                         return finite_difference_check(
                             [&](const Tensor &t) { return df_loss(fr, fs_, OffsetField(8, 3, maybe_corrupt(t, bad)), w); }, o, eps);
                     }});
        c.push_back({"dfa_loss", [offsets](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor ref = detail::smooth_image(S, S, 3, rng);
                         Tensor src = detail::smooth_image(S, S, 3, rng);
                         Tensor fr = uniform_tensor({8, S, S}, rng, -1, 1);
                         Tensor fs_ = uniform_tensor({8, S, S}, rng, -1, 1);
                         Tensor o = offsets(rng);
                         KernelWeights w(8, 3, uniform_tensor({8, 9}, rng, -1, 1));
                         const ConvStack ext = detail::random_conv_stack(8, 3, 3, rng);
                         const ConvStack rec = detail::random_conv_stack(3, 8, 1, rng);
                         return finite_difference_check(
                             [&](const Tensor &t) {
                                 return dfa_loss(ref, src, fr, fs_, OffsetField(8, 3, maybe_corrupt(t, bad)), w, ext, rec);
                             },
                             o, eps);
                     }});

        // Voxel density.
        const VoxelGrid grid{-2.0, 2.0, -2.0, 2.0, 0.0, 4.0, 4, 4, 4};
        auto cell_interior_cloud = [grid](std::mt19937_64 &rng) {
            // Points at least 0.1 cell away from every voxel boundary.
            std::uniform_int_distribution<int> cell(0, 3);
            std::uniform_real_distribution<double> frac(0.1, 0.9);
            std::vector<double> v(S * S * 3);
            for (std::size_t i = 0; i < S * S; ++i) {
                v[3 * i] = grid.x_min + (cell(rng) + frac(rng)) * grid.dx();
                v[3 * i + 1] = grid.y_min + (cell(rng) + frac(rng)) * grid.dy();
                v[3 * i + 2] = grid.z_min + (cell(rng) + frac(rng)) * grid.dz();
            }
            return Tensor({S * S, 3}, std::move(v));
        };
        c.push_back({"voxel_index", [grid, cell_interior_cloud](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor p = cell_interior_cloud(rng);
                         auto unfloored = [&](const Tensor &t) {
                             Tensor s = (detail::column(t, 0) - grid.x_min) / grid.dx() +
                                        (detail::column(t, 1) - grid.y_min) / grid.dy() * static_cast<double>(grid.nx) +
                                        (detail::column(t, 2) - grid.z_min) / grid.dz() * static_cast<double>(grid.nx * grid.ny);
                             return probe(s, 30);
                         };
                         return finite_difference_check(
                             [&](const Tensor &t) { return probe(voxel_index(maybe_corrupt(t, bad), grid).index, 30); }, unfloored, p, eps);
                     }});
        auto count_surrogate = [](const Tensor &v, std::size_t N, std::uint64_t salt) {
            std::vector<double> cells(N);
            for (std::size_t i = 0; i < N; ++i) {
                cells[i] = static_cast<double>(i);
            }
            const auto n = static_cast<double>(v.numel());
            Tensor r = 2.0 * abs(reshape(v, {1, v.numel()}) - Tensor({N, 1}, cells)) - 1.0;
            return probe(n - sum(clip(r, -1.0, 1.0), {1}), salt);
        };
        auto fractional_indices = [](std::mt19937_64 &rng, std::size_t N) {
            std::uniform_int_distribution<int> cell(0, static_cast<int>(N) - 2);
            std::uniform_real_distribution<double> frac(0.1, 0.9);
            std::vector<double> v(S * S);
            for (auto &e : v) {
                e = cell(rng) + frac(rng);
                if (std::abs(e - std::floor(e) - 0.5) < 0.05) {
                    e += 0.1; // |V - i| = 1/2 is the surrogate's kink
                }
            }
            return Tensor({S * S}, std::move(v));
        };
        c.push_back({"count_vector", [count_surrogate, fractional_indices](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor v = fractional_indices(rng, 16);
                         return finite_difference_check([&](const Tensor &t) { return probe(count_vector(maybe_corrupt(t, bad), 16), 31); },
                                                        [&](const Tensor &t) { return count_surrogate(t, 16, 31); }, v, eps);
                     }});
        c.push_back({"count_vector_dense", [count_surrogate, fractional_indices](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor v = fractional_indices(rng, 16);
                         return finite_difference_check([&](const Tensor &t) { return probe(count_vector_dense(maybe_corrupt(t, bad), 16), 32); },
                                                        [&](const Tensor &t) { return count_surrogate(t, 16, 32); }, v, eps);
                     }});
        c.push_back({"voxel_density", [grid, cell_interior_cloud, count_surrogate](std::mt19937_64 &rng, bool bad, double eps) {
                         // Composite surrogate: counting surrogate applied to the
                         // straight-through voxel indices.
                         Tensor p = cell_interior_cloud(rng);
                         const auto n = static_cast<double>(p.dim(0));
                         return finite_difference_check(
                             [&](const Tensor &t) { return probe(voxel_density(maybe_corrupt(t, bad), grid).values, 33); },
                             [&](const Tensor &t) { return count_surrogate(voxel_index(t, grid).index, grid.total(), 33) / n; }, p, eps);
                     }});
        c.push_back({"vda_loss/reference", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor a = uniform_tensor({16}, rng, 0.5, 1.0);
                         Tensor b = uniform_tensor({16}, rng, 0.5, 1.0);
                         return finite_difference_check([&](const Tensor &t) { return vda_loss(maybe_corrupt(t, bad), b / sum(b).item()); }, a / sum(a).item(), eps);
                     }});
        c.push_back({"vda_loss/source", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor a = uniform_tensor({16}, rng, 0.5, 1.0);
                         Tensor b = uniform_tensor({16}, rng, 0.5, 1.0);
                         return finite_difference_check([&](const Tensor &t) { return vda_loss(a / sum(a).item(), maybe_corrupt(t, bad)); }, b / sum(b).item(), eps);
                     }});
        c.push_back({"point_cloud_loss", [](std::mt19937_64 &rng, bool bad, double eps) {
                         Tensor a = uniform_tensor({S * S, 3}, rng, -1, 1);
                         Tensor d = signed_tensor({S * S, 3}, rng, 0.05, 0.5);
                         return finite_difference_check([&](const Tensor &t) { return point_cloud_loss(a, maybe_corrupt(t, bad)); }, (a + d).detach(), eps);
                     }});
        return c;
    }();
    return cases;
}

struct GradCheckRow {
    std::string op;
    double max_rel_error = 0.0;
    bool pass = false;
};

/// Keys: tolerance (1e-4), eps (1e-5), ops (subset, default all), corrupt
/// (name of one op to run with a wrong backward).
inline ExperimentResult run_gradcheck(const RunContext &ctx) {
    const auto p = ctx.params();
    const double tol = p.get_double("tolerance", 1e-4);
    const double eps = p.get_double("eps", 1e-5);
    const std::string corrupt = p.get_string("corrupt", "");
    const auto &registry = gradcheck_registry();
    std::vector<const GradCheckCase *> selected;
    std::set<std::string> wanted;
    const std::string ops = p.get_string("ops", "");
    for (auto tok : detail::split_list(ops)) {
        wanted.insert(std::string(tok));
    }
    for (const auto &c : registry) {
        if (wanted.empty() || wanted.count(c.name)) {
            selected.push_back(&c);
        }
    }
    for (const auto &w : wanted) {
        if (std::none_of(registry.begin(), registry.end(), [&](const GradCheckCase &c) { return c.name == w; })) {
            throw ConfigError("gradcheck: unknown op '" + w + "'");
        }
    }
    if (!corrupt.empty() && std::none_of(selected.begin(), selected.end(), [&](const GradCheckCase *c) { return c->name == corrupt; })) {
        throw ConfigError("gradcheck: corrupt names an op that is not run: '" + corrupt + "'");
    }
    std::vector<GradCheckRow> rows(selected.size());
    parallel_for(selected.size(), [&](std::size_t i) {
        const auto &c = *selected[i];
        std::uint64_t h = ctx.seed() * 0x9e3779b97f4a7c15ULL;
        for (unsigned char ch : c.name) {
            h = (h ^ ch) * 0x100000001b3ULL;
        }
        std::mt19937_64 rng(h);
        const double err = c.run(rng, c.name == corrupt, eps);
        rows[i] = {c.name, err, err < tol};
    });
    ExperimentResult res{"gradcheck", {}, {}, {}};
    std::vector<std::string> lines;
    for (const auto &r : rows) {
        lines.push_back(join({r.op, csv_num(r.max_rel_error), csv_num(tol), r.pass ? "pass" : "FAIL"}));
        res.checks.push_back(check_less("gradcheck " + r.op, r.max_rel_error, tol));
    }
    const auto path = ctx.output("gradcheck.csv");
    write_csv(path, ctx.config.hash(), "op,max_rel_error,tolerance,status", lines);
    res.files.push_back(path);
    return res;
}

// ---------------------------------------------------------------------------
// Photometric vulnerability

namespace detail {

/// Pixels of `mask` whose full (2r+1)^2 window lies inside the mask.
inline std::vector<std::uint8_t> erode(const std::vector<std::uint8_t> &mask, std::size_t H, std::size_t W, std::size_t r) {
    std::vector<std::uint8_t> out(mask.size(), 0);
    const auto R = static_cast<std::ptrdiff_t>(r);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            bool all = mask[y * W + x] != 0;
            for (std::ptrdiff_t dy = -R; all && dy <= R; ++dy) {
                for (std::ptrdiff_t dx = -R; all && dx <= R; ++dx) {
                    const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
                    const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
                    if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(H) || xx >= static_cast<std::ptrdiff_t>(W)) {
                        continue;
                    }
                    all = mask[static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx)] != 0;
                }
            }
            out[y * W + x] = all;
        }
    }
    return out;
}

/// Mean of `map` over `mask`; NaN when the mask is empty.
inline double region_mean(const Tensor &map, const std::vector<std::uint8_t> &mask) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            s += map.value(i);
            ++n;
        }
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

inline std::size_t count(const std::vector<std::uint8_t> &m) {
    std::size_t n = 0;
    for (auto v : m) {
        n += v != 0;
    }
    return n;
}

inline std::vector<std::uint8_t> mask_and(const std::vector<std::uint8_t> &a, const std::vector<std::uint8_t> &b) {
    std::vector<std::uint8_t> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] && b[i];
    }
    return out;
}

inline std::vector<std::uint8_t> mask_not(const std::vector<std::uint8_t> &a) {
    std::vector<std::uint8_t> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = !a[i];
    }
    return out;
}

/// Pixels whose four bilinear taps in the source image all show the same
/// primitive as the reference pixel.
inline std::vector<std::uint8_t> same_surface_footprint(const std::vector<int> &ref_prim, const std::vector<int> &src_prim,
                                                        const Tensor &coords, std::size_t H, std::size_t W) {
    std::vector<std::uint8_t> out(ref_prim.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double u = std::clamp(coords.value(2 * i), 0.0, static_cast<double>(W - 1));
        const double v = std::clamp(coords.value(2 * i + 1), 0.0, static_cast<double>(H - 1));
        const auto u0 = static_cast<std::size_t>(std::floor(u));
        const auto v0 = static_cast<std::size_t>(std::floor(v));
        const std::size_t u1 = std::min(u0 + 1, W - 1);
        const std::size_t v1 = std::min(v0 + 1, H - 1);
        out[i] = ref_prim[i] >= 0 && src_prim[v0 * W + u0] == ref_prim[i] && src_prim[v0 * W + u1] == ref_prim[i] &&
                 src_prim[v1 * W + u0] == ref_prim[i] && src_prim[v1 * W + u1] == ref_prim[i];
    }
    return out;
}

inline Tensor mask_tensor(const std::vector<std::uint8_t> &m, std::size_t H, std::size_t W) {
    std::vector<double> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        v[i] = m[i] ? 1.0 : 0.0;
    }
    return Tensor({H, W}, std::move(v));
}

} // namespace detail

struct PhotometricVariant {
    std::string name;
    double loss = 0.0;            // masked mean over the variant's loss mask
    double object_loss = 0.0;     // eroded object region
    double background_loss = 0.0; // eroded static region, unoccluded in the source view
    std::size_t loss_pixels = 0;
    Tensor error_map;             // H x W
};

/// Keys: light_scales (1.2), delta (object motion, 0.25:0:0), map_scale (0.2),
/// static_max (1e-3), illumination_min (0.01), motion_ratio_min (10), plus
/// camera/scene keys and photometric ssim_* keys.
inline ExperimentResult run_photometric(const RunContext &ctx) {
    const auto p = ctx.params();
    const ViewSetup v = load_setup(ctx, p, default_street_setup());
    const PhotometricConfig pcfg = PhotometricConfig::from_config(p);
    const auto scales = p.has("light_scales") ? p.get_doubles("light_scales") : std::vector<double>{1.2};
    const auto deltas = parse_triples(p.get_string("delta", "0.25:0:0"), "delta");
    if (deltas.size() != 1) {
        throw ConfigError("photometric: delta must be a single triple");
    }
    const double map_scale = p.get_double("map_scale", 0.2);
    const std::size_t H = v.height, W = v.width;
    const auto T = v.ref_to_src();
    const auto obj = static_cast<int>(*v.scene.index_of(v.object));

    const RenderResult ref = render(v.scene, v.K, v.ref_pose, H, W);
    const auto occluded = occlusion_mask(v.scene, ref.depth, v.K, v.ref_pose, v.src_pose);
    const SyntheticScene moved_scene = perturb(v.scene, v.object, deltas[0]);
    const auto occluded_moved = occlusion_mask(moved_scene, ref.depth, v.K, v.ref_pose, v.src_pose);

    std::vector<std::uint8_t> on_object(H * W);
    for (std::size_t i = 0; i < on_object.size(); ++i) {
        on_object[i] = ref.primitive[i] == obj;
    }
    const std::size_t r = pcfg.ssim_window / 2;
    const auto object_region = detail::erode(on_object, H, W, r);
    const auto background_region =
        detail::erode(detail::mask_and(detail::mask_and(detail::mask_not(on_object), detail::mask_not(occluded_moved)),
                                       detail::mask_not(occluded)),
                      H, W, r);

    struct Job {
        std::string name;
        SyntheticScene scene;
        bool exclude_occluded; // also drop surface boundaries, see below
    };
    std::vector<Job> jobs = {{"static", v.scene, true}};
    for (double s : scales) {
        SyntheticScene lit = v.scene;
        lit.light_scale *= s;
        jobs.push_back({"illumination_x" + csv_num(s), lit, true});
    }
    jobs.push_back({"moving_object", moved_scene, false});
    jobs.push_back({"occlusion", v.scene, false});

    std::vector<PhotometricVariant> out(jobs.size());
    std::vector<Tensor> src_images(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
        const RenderResult src = render(jobs[j].scene, v.K, v.src_pose, H, W);
        const WarpResult w = warp_image(src.image, ref.depth, T, v.K);
        auto mask = w.mask;
        if (jobs[j].exclude_occluded) {
            // Unoccluded pixels whose SSIM window only sees samples taken
            // from their own surface.
            mask = detail::mask_and(mask, detail::mask_not(occluded));
            mask = detail::mask_and(mask, detail::same_surface_footprint(ref.primitive, src.primitive, w.coords, H, W));
            mask = detail::erode(mask, H, W, r);
        }
        PhotometricVariant pv;
        pv.name = jobs[j].name;
        pv.error_map = photometric_error_map(ref.image, w.warped, pcfg).detach();
        pv.loss = photometric_loss(ref.image, w.warped, mask, pcfg).item();
        pv.loss_pixels = detail::count(mask);
        pv.object_loss = detail::region_mean(pv.error_map, detail::mask_and(object_region, w.mask));
        pv.background_loss = detail::region_mean(pv.error_map, detail::mask_and(background_region, w.mask));
        out[j] = std::move(pv);
        src_images[j] = src.image;
    });

    ExperimentResult res{"photometric", {}, {}, {}};
    std::vector<std::string> lines;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const auto &pv = out[j];
        const double ratio = pv.object_loss / pv.background_loss;
        lines.push_back(join({pv.name, csv_num(pv.loss), csv_num(pv.object_loss), csv_num(pv.background_loss),
                              csv_num(ratio), std::to_string(pv.loss_pixels)}));
        const auto map_path = ctx.output("loss_" + pv.name + ".pgm");
        write_pgm(map_path, pv.error_map, map_scale);
        save_tensor(ctx.output("loss_" + pv.name + ".xvt"), pv.error_map);
        write_ppm(ctx.output("source_" + pv.name + ".ppm"), src_images[j]);
        res.files.push_back(map_path);
        if (pv.name == "static") {
            res.checks.push_back(check_less("static loss", pv.loss, p.get_double("static_max", 1e-3)));
        } else if (pv.name.rfind("illumination", 0) == 0) {
            res.checks.push_back(check_greater(pv.name + " loss", pv.loss, p.get_double("illumination_min", 0.01)));
        } else if (pv.name == "moving_object") {
            res.checks.push_back(check_greater("moving object/background ratio", ratio, p.get_double("motion_ratio_min", 10.0)));
        }
    }
    const auto path = ctx.output("photometric.csv");
    write_csv(path, ctx.config.hash(), "variant,loss,object_loss,background_loss,ratio,loss_pixels", lines);
    res.files.insert(res.files.begin(), path);
    write_ppm(ctx.output("reference.ppm"), ref.image);
    write_pgm(ctx.output("occlusion_mask.pgm"), detail::mask_tensor(occluded, H, W));
    save_tensor(ctx.output("occlusion_mask.xvt"), detail::mask_tensor(occluded, H, W));
    save_tensor(ctx.output("reference_depth.xvt"), ref.depth.values);
    detail::maybe_gnuplot(ctx, res,
                          "set datafile separator ','\nset style data histograms\nset style fill solid\n"
                          "set logscale y\nset ylabel 'photometric loss'\nset xtics rotate by -30\n"
                          "plot 'photometric.csv' using 2:xtic(1) skip 2 title 'loss'\n");
    return res;
}

// ---------------------------------------------------------------------------
// Robustness of the 3D losses to object motion

inline VoxelGrid robustness_default_grid() { return VoxelGrid{-10.0, 10.0, -3.0, 3.0, 0.0, 15.0, 40, 12, 30}; }

struct RobustnessRow {
    Vec3 delta{};
    std::size_t object_points = 0;
    double point_cloud = 0.0;
    double voxel_index = 0.0;
    double vda = 0.0;
    bool crossed = false; // some object point changed voxel
};

/// Object points displaced by `delta`, every other point fixed.
inline RobustnessRow robustness_point(const LabeledCloud &lc, const VoxelGrid &grid, const Vec3 &delta) {
    const Tensor &P = lc.cloud.points;
    const Tensor moved = displace(P, lc.on_object, delta);
    RobustnessRow r;
    r.delta = delta;
    r.object_points = lc.object_points;
    r.point_cloud = point_cloud_loss(P, moved).item();
    r.voxel_index = voxel_index_loss(P, moved, grid);
    r.vda = vda_loss(voxel_density(P, grid), voxel_density(moved, grid)).item();
    for (std::size_t i = 0; i < lc.on_object.size() && !r.crossed; ++i) {
        if (lc.on_object[i]) {
            const Vec3 a = lc.cloud.point(i);
            r.crossed = grid.cell(a) != grid.cell({a[0] + delta[0], a[1] + delta[1], a[2] + delta[2]});
        }
    }
    return r;
}

/// Keys: deltas (list of x:y:z), voxels / bounds (grid; default 0.5 m
/// cells), random_trials (1000), plus camera/scene keys.
inline ExperimentResult run_robustness(const RunContext &ctx) {
    const auto p = ctx.params();
    const ViewSetup v = load_setup(ctx, p, default_small_box_setup());
    const VoxelGrid grid = VoxelGrid::from_config(p, robustness_default_grid());
    const auto deltas = parse_triples(
        p.get_string("deltas", "0:0:0, 0.05:0:0, 0.1:0:0, 0.1:0.1:0.1, 0.14:0:0, 0.2:0:0, 0.3:0:0, 0.6:0:0, 1:0:0, 0.1:0.2:0.3"),
        "deltas");
    const auto trials = static_cast<std::size_t>(p.get_int("random_trials", 1000));
    const RenderResult ref = render(v.scene, v.K, v.ref_pose, v.height, v.width);
    const LabeledCloud lc = labeled_reference_cloud(v, ref);
    if (lc.object_points == 0) {
        throw DomainError("robustness: object '" + v.object + "' is not visible from the reference camera");
    }

    std::vector<RobustnessRow> rows(deltas.size());
    parallel_for(deltas.size(), [&](std::size_t i) { rows[i] = robustness_point(lc, grid, deltas[i]); });

    ExperimentResult res{"robustness", {}, {}, {}};
    std::vector<std::string> lines;
    const double n_obj = static_cast<double>(lc.object_points);
    for (const auto &r : rows) {
        const double l1 = std::abs(r.delta[0]) + std::abs(r.delta[1]) + std::abs(r.delta[2]);
        lines.push_back(join({csv_num(r.delta[0]), csv_num(r.delta[1]), csv_num(r.delta[2]), std::to_string(r.object_points),
                              csv_num(r.point_cloud), csv_num(r.voxel_index), csv_num(r.vda), r.crossed ? "1" : "0"}));
        const std::string tag = "delta=" + detail::triple_str(r.delta);
        res.checks.push_back(check_near(tag + " point_cloud_loss = n_obj*|delta|_1", r.point_cloud, n_obj * l1, 1e-9 * (1.0 + n_obj)));
        if (!r.crossed) {
            res.checks.push_back(check_equal(tag + " voxel_index_loss", r.voxel_index, 0.0));
            res.checks.push_back(check_equal(tag + " vda_loss", r.vda, 0.0));
        } else {
            res.checks.push_back(check_greater(tag + " voxel_index_loss", r.voxel_index, 0.0));
            res.checks.push_back(check_greater(tag + " vda_loss", r.vda, 0.0));
        }
    }
    const auto path = ctx.output("robustness.csv");
    write_csv(path, ctx.config.hash(), "dx,dy,dz,object_points,point_cloud_loss,voxel_index_loss,vda_loss,crossed", lines);
    res.files.push_back(path);

    // Random per-point displacements that keep every object point in its cell.
    std::vector<std::string> trial_lines(trials);
    std::vector<std::uint8_t> violation(trials, 0);
    const double steps[3] = {grid.dx(), grid.dy(), grid.dz()};
    const double mins[3] = {grid.x_min, grid.y_min, grid.z_min};
    parallel_for(trials, [&](std::size_t t) {
        std::mt19937_64 rng(ctx.seed() * 0x9e3779b97f4a7c15ULL + t + 1);
        std::uniform_real_distribution<double> frac(0.001, 0.999);
        std::vector<double> moved(lc.cloud.points.data().begin(), lc.cloud.points.data().end());
        for (std::size_t i = 0; i < lc.on_object.size(); ++i) {
            if (!lc.on_object[i]) {
                continue;
            }
            const auto cell = grid.cell(lc.cloud.point(i));
            for (std::size_t a = 0; a < 3; ++a) {
                moved[3 * i + a] = mins[a] + (static_cast<double>(cell[a]) + frac(rng)) * steps[a];
            }
        }
        const Tensor M(lc.cloud.points.shape(), std::move(moved));
        const double lpc = point_cloud_loss(lc.cloud.points, M).item();
        const double lv = voxel_index_loss(lc.cloud.points, M, grid);
        const double lvda = vda_loss(voxel_density(lc.cloud.points, grid), voxel_density(M, grid)).item();
        violation[t] = !(lpc > 0.0 && lv == 0.0 && lvda == 0.0);
        trial_lines[t] = join({std::to_string(t), csv_num(lpc), csv_num(lv), csv_num(lvda)});
    });
    const auto trial_path = ctx.output("robustness_random.csv");
    write_csv(trial_path, ctx.config.hash(), "trial,point_cloud_loss,voxel_index_loss,vda_loss", trial_lines);
    res.files.push_back(trial_path);
    res.checks.push_back(check_equal("sub-voxel random trials with violations", static_cast<double>(detail::count(violation)), 0.0));
    detail::maybe_gnuplot(ctx, res,
                          "set datafile separator ','\nset xlabel 'object displacement dx (m)'\nset key left\n"
                          "plot 'robustness.csv' every ::1 using 1:5 skip 1 with linespoints title 'point cloud', \\\n"
                          "     '' using 1:6 skip 1 with linespoints title 'voxel index', \\\n"
                          "     '' using 1:7 skip 1 with linespoints title 'VDA'\n");
    return res;
}

// ---------------------------------------------------------------------------
// Voxel-count sweep

struct VoxelSweepRow {
    std::size_t nx = 0, ny = 0, nz = 0;
    double dx = 0.0, dy = 0.0, dz = 0.0;
    double vda_rigid = 0.0; // reference cloud vs source cloud mapped into the reference frame
    double vda_moved = 0.0; // reference cloud vs itself with the object displaced
    double voxel_index_moved = 0.0;
};

/// Keys: grids (list of nx:ny:nz), delta (object motion, 0.3:0:0), expand
/// (bounds padding, 0.01), plus camera/scene keys.
inline ExperimentResult run_voxel_sweep(const RunContext &ctx) {
    const auto p = ctx.params();
    const ViewSetup v = load_setup(ctx, p, default_street_setup());
    const auto grids = parse_triples(p.get_string("grids", "1:1:1, 20:20:24, 40:40:24, 60:60:24"), "grids");
    const auto delta = parse_triples(p.get_string("delta", "0.3:0:0"), "delta");
    if (delta.size() != 1) {
        throw ConfigError("voxelsweep: delta must be a single triple");
    }
    const double expand = p.get_double("expand", 0.01);
    for (const auto &g : grids) {
        for (double n : g) {
            if (!(n >= 1.0) || n != std::floor(n)) {
                throw ConfigError("voxelsweep: voxel counts must be positive integers");
            }
        }
    }
    const RenderResult ref = render(v.scene, v.K, v.ref_pose, v.height, v.width);
    const RenderResult src = render(v.scene, v.K, v.src_pose, v.height, v.width);
    const LabeledCloud lc = labeled_reference_cloud(v, ref);
    const Tensor rigid = transform_points(backproject(src.depth, v.K), v.ref_to_src().inverse()).points.detach();
    const Tensor moved = displace(lc.cloud.points, lc.on_object, delta[0]);
    const Tensor others = concat({rigid, moved});

    std::vector<VoxelSweepRow> rows(grids.size());
    parallel_for(grids.size(), [&](std::size_t i) {
        const auto &g = grids[i];
        const VoxelGrid grid = VoxelGrid::joint_bounds(lc.cloud.points, others, static_cast<std::size_t>(g[0]),
                                                       static_cast<std::size_t>(g[1]), static_cast<std::size_t>(g[2]), expand);
        const auto rho = voxel_density(lc.cloud.points, grid);
        VoxelSweepRow r;
        r.nx = grid.nx, r.ny = grid.ny, r.nz = grid.nz;
        r.dx = grid.dx(), r.dy = grid.dy(), r.dz = grid.dz();
        r.vda_rigid = vda_loss(rho, voxel_density(rigid, grid)).item();
        r.vda_moved = vda_loss(rho, voxel_density(moved, grid)).item();
        r.voxel_index_moved = voxel_index_loss(lc.cloud.points, moved, grid);
        rows[i] = r;
    });

    ExperimentResult res{"voxelsweep", {}, {}, {}};
    std::vector<std::string> lines;
    for (const auto &r : rows) {
        lines.push_back(join({std::to_string(r.nx), std::to_string(r.ny), std::to_string(r.nz), csv_num(r.dx), csv_num(r.dy),
                              csv_num(r.dz), csv_num(r.vda_rigid), csv_num(r.vda_moved), csv_num(r.voxel_index_moved)}));
        if (r.nx * r.ny * r.nz == 1) {
            res.checks.push_back(check_equal("single-voxel grid vda (rigid)", r.vda_rigid, 0.0));
            res.checks.push_back(check_equal("single-voxel grid vda (moved)", r.vda_moved, 0.0));
        }
    }
    res.checks.push_back(check_equal("rows per grid", static_cast<double>(rows.size()), static_cast<double>(grids.size())));
    const auto path = ctx.output("voxelsweep.csv");
    write_csv(path, ctx.config.hash(), "nx,ny,nz,dx,dy,dz,vda_rigid,vda_moved,voxel_index_loss_moved", lines);
    res.files.push_back(path);
    detail::maybe_gnuplot(ctx, res,
                          "set datafile separator ','\nset xlabel 'voxel edge dx (m)'\nset logscale y\n"
                          "plot 'voxelsweep.csv' using 4:7 skip 2 with linespoints title 'VDA rigid', \\\n"
                          "     '' using 4:8 skip 2 with linespoints title 'VDA moved'\n");
    return res;
}

// ---------------------------------------------------------------------------
// Total loss on a rendered pair

/// Per-pixel flow of the reference frame into the source frame as a constant
/// tap offset field (G groups, n x n kernel).
inline OffsetField flow_offsets(const WarpResult &w, std::size_t H, std::size_t W, std::size_t groups, std::size_t kernel) {
    const std::size_t K = kernel * kernel;
    std::vector<double> v(groups * K * 2 * H * W);
    for (std::size_t gk = 0; gk < groups * K; ++gk) {
        for (std::size_t i = 0; i < H * W; ++i) {
            v[(gk * 2) * H * W + i] = w.coords.value(2 * i) - static_cast<double>(i % W);
            v[(gk * 2 + 1) * H * W + i] = w.coords.value(2 * i + 1) - static_cast<double>(i / W);
        }
    }
    return OffsetField(groups, kernel, Tensor({groups * K * 2, H, W}, std::move(v)));
}

/// C x H x W stack of mean-normalized inverse depth; invalid pixels take the
/// largest valid depth.
inline Tensor inverse_depth_features(const DepthMap &d, std::size_t channels) {
    double far = 0.0;
    for (std::size_t i = 0; i < d.mask.size(); ++i) {
        if (d.mask[i]) {
            far = std::max(far, d.values.value(i));
        }
    }
    const std::size_t HW = d.mask.size();
    std::vector<double> inv(HW);
    double mean = 0.0;
    for (std::size_t i = 0; i < HW; ++i) {
        inv[i] = 1.0 / (d.mask[i] ? d.values.value(i) : far);
        mean += inv[i];
    }
    mean /= static_cast<double>(HW);
    std::vector<double> v(channels * HW);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < HW; ++i) {
            v[c * HW + i] = inv[i] / mean;
        }
    }
    return Tensor({channels, d.height(), d.width()}, std::move(v));
}

struct TotalLossReport {
    LossTerms terms;
    LossWeights weights;
    TotalLoss total;
};

/// All four terms on the reference/source pair of `v` with ground-truth
/// depth and pose.
inline TotalLossReport evaluate_total_loss(const ViewSetup &v, const LossWeights &weights, const PhotometricConfig &pcfg,
                                           std::size_t nx, std::size_t ny, std::size_t nz) {
    const std::size_t H = v.height, W = v.width;
    const RenderResult ref = render(v.scene, v.K, v.ref_pose, H, W);
    const RenderResult src = render(v.scene, v.K, v.src_pose, H, W);
    const auto T = v.ref_to_src();
    const WarpResult w = warp_image(src.image, ref.depth, T, v.K);

    TotalLossReport rep;
    rep.weights = weights;
    rep.terms.photometric = photometric_loss(ref.image, w.warped, w.mask, pcfg).item();
    Tensor depth = ref.depth.values;
    if (ref.depth.valid_count() != ref.depth.mask.size()) {
        depth = inverse_depth_features(ref.depth, 1);
        depth = reshape(1.0 / depth, {H, W});
    }
    rep.terms.smoothness = smoothness_loss(depth, ref.image).item();

    // Eight feature channels replicate RGB; the reconstructor averages the
    // replicas back, so aligned features reconstruct the warped source.
    constexpr std::size_t C = 8;
    std::vector<double> ext(C * 3, 0.0), rec(3 * C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        ext[c * 3 + c % 3] = 1.0;
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const double reps = static_cast<double>((C - k + 2) / 3);
        for (std::size_t c = k; c < C; c += 3) {
            rec[k * C + c] = 1.0 / reps;
        }
    }
    const OffsetField offsets = flow_offsets(w, H, W, 8, 3);
    rep.terms.dfa = dfa_loss(ref.image, src.image, inverse_depth_features(ref.depth, C), inverse_depth_features(src.depth, C),
                             offsets, KernelWeights::delta_center(8, 3), ConvStack::pointwise(C, 3, ext),
                             ConvStack::pointwise(3, C, rec))
                        .item();

    const Tensor p_ref = backproject(ref.depth, v.K).points;
    const Tensor p_src = transform_points(backproject(src.depth, v.K), T.inverse()).points;
    const VoxelGrid grid = VoxelGrid::joint_bounds(p_ref, p_src, nx, ny, nz);
    rep.terms.vda = vda_loss(voxel_density(p_ref, grid), voxel_density(p_src, grid)).item();
    rep.total = total_loss(rep.terms, weights);
    return rep;
}

/// Keys: alpha, beta, gamma, eta, voxels (40:40:24 as nx, ny, nz), ssim_*
/// and camera/scene keys.
inline ExperimentResult run_total_loss(const RunContext &ctx) {
    const auto p = ctx.params();
    const ViewSetup v = load_setup(ctx, p, default_street_setup());
    const LossWeights weights = LossWeights::from_config(p);
    const VoxelGrid g = VoxelGrid::from_config(p);
    const auto rep = evaluate_total_loss(v, weights, PhotometricConfig::from_config(p), g.nx, g.ny, g.nz);

    ExperimentResult res{"totalloss", {}, {}, {}};
    std::vector<std::string> lines;
    double sum_weighted = 0.0;
    for (const auto &r : rep.total.rows) {
        lines.push_back(join({r.term, csv_num(r.raw), csv_num(r.weight), csv_num(r.weighted)}));
        sum_weighted += r.weighted;
        res.checks.push_back(check_less(r.term + " finite", std::isfinite(r.raw) ? 0.0 : 1.0, 0.5));
    }
    lines.push_back(join({"total", "", "", csv_num(rep.total.total)}));
    res.checks.push_back(check_near("breakdown sums to total", sum_weighted, rep.total.total, 1e-12));
    const auto path = ctx.output("totalloss.csv");
    write_csv(path, ctx.config.hash(), "term,raw,weight,weighted", lines);
    res.files.push_back(path);
    return res;
}

// ---------------------------------------------------------------------------
// Depth metrics on tensor files

/// One [pair] section per image with keys pred, gt (tensor files, H x W) and
/// split = motion|static. A ground-truth mask is read from "<gt>.mask.xvt"
/// when present (non-zero = valid). Keys cap (80) and median_scale (true).
inline ExperimentResult run_metrics(const RunContext &ctx) {
    const auto p = ctx.params();
    EvalOptions opt;
    opt.cap = p.get_double("cap", opt.cap);
    opt.median_scale = p.get_bool("median_scale", opt.median_scale);
    const auto sections = ctx.config.sections("pair");
    if (sections.empty()) {
        throw ConfigError("metrics: no [pair] sections");
    }
    std::vector<EvalPair> pairs;
    for (const auto *s : sections) {
        const auto gt_path = ctx.resolve(s->require_string("gt"));
        const Tensor pred = load_tensor(ctx.resolve(s->require_string("pred")));
        const Tensor gt = load_tensor(gt_path);
        DepthMap gt_map = DepthMap::from_values(gt);
        const fs::path mask_path = gt_path.string() + ".mask.xvt";
        if (fs::exists(mask_path)) {
            const Tensor m = load_tensor(mask_path);
            if (m.shape() != gt.shape()) {
                throw FormatError("metrics: mask " + mask_path.string() + " does not match its depth map");
            }
            for (std::size_t i = 0; i < gt_map.mask.size(); ++i) {
                gt_map.mask[i] = gt_map.mask[i] && m.value(i) != 0.0;
            }
        }
        const auto split = s->get_string("split", "static");
        if (split != "motion" && split != "static") {
            throw ConfigError("metrics: split must be motion or static, got '" + split + "'");
        }
        pairs.push_back({DepthMap::from_values(pred), std::move(gt_map), split == "motion" ? Split::motion : Split::static_scene});
    }
    std::vector<MetricReport> per(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) { per[i] = evaluate_depth(pairs[i].pred, pairs[i].gt, opt); });
    const SplitReport split = evaluate_split(pairs, opt);

    ExperimentResult res{"metrics", {}, {}, split.warnings};
    std::vector<std::string> lines;
    for (const auto &r : per) {
        lines.push_back(metrics_csv_row(r));
    }
    const auto path = ctx.output("metrics.csv");
    write_csv(path, ctx.config.hash(), kMetricsCsvHeader, lines);
    std::vector<std::string> split_lines;
    for (const auto &[s, r] : split.reports) {
        split_lines.push_back(std::string(split_name(s)) + "," + std::to_string(r.n_pixels) + "," + metrics_csv_row(r) + "," +
                              csv_num(r.log10));
    }
    const auto split_path = ctx.output("metrics_split.csv");
    write_csv(split_path, ctx.config.hash(), std::string("split,n_pixels,") + kMetricsCsvHeader + ",log10", split_lines);
    res.files = {path, split_path};
    return res;
}

inline ExperimentResult run_experiment(const RunContext &ctx) {
    if (ctx.experiment == "gradcheck") {
        return run_gradcheck(ctx);
    }
    if (ctx.experiment == "photometric") {
        return run_photometric(ctx);
    }
    if (ctx.experiment == "robustness") {
        return run_robustness(ctx);
    }
    if (ctx.experiment == "voxelsweep") {
        return run_voxel_sweep(ctx);
    }
    if (ctx.experiment == "totalloss") {
        return run_total_loss(ctx);
    }
    if (ctx.experiment == "metrics") {
        return run_metrics(ctx);
    }
    throw ConfigError("unknown experiment '" + ctx.experiment + "'");
}

/// Every config key with its default, as printed by `xvc reference`.
inline std::string config_reference() {
    return R"(Config files hold `key = value` lines, `# comments` and `[section]`
headers. Keys before the first header are global; a section named after the
experiment overrides global keys for that experiment. Lists are separated by
commas; triples are written a:b:c (or axbxc).

Global
  seed = 0                   random seed (also --seed)
  gnuplot = false            also write <experiment>.gp

Camera and scene (photometric, robustness, voxelsweep, totalloss)
  scene = <path>             scene config; inline [plane]/[box] sections also work
  object = object            id of the movable primitive
  fx, fy, u0, v0             intrinsics (64, 64, 31.5, 23.5; robustness 200, 200, 31.5, 23.5)
  width = 64, height = 48    image size
  source_translation         source camera center in the reference frame
  source_rotation            9 row-major values, default identity

Scene files
  light_scale = 1            global (or in [scene])
  [plane] id, axis = x|y|z, center = x,y,z, half_extent = x,y,z
  [box]   id, center = x,y,z, half_extent = x,y,z
  texture = gradient|checker|noise, period = 2, base = 0.5, contrast = 0.25,
  sharpness = 2, seed = 0    per primitive

[gradcheck]
  tolerance = 1e-4           max relative error
  eps = 1e-5                 central-difference step
  ops =                      subset of ops (sweepable); default all
  corrupt =                  op to run with a wrong backward (negative control)

[photometric]
  light_scales = 1.2         illumination variants (sweepable)
  delta = 0.25:0:0           object motion in the moving-object variant
  map_scale = 0.2            loss value drawn white in the PGM maps
  static_max = 1e-3          static variant must stay below
  illumination_min = 0.01    illumination variants must exceed
  motion_ratio_min = 10      object/background loss ratio must exceed
  ssim_weight = 0.85, ssim_window = 3, ssim_c1 = 1e-4, ssim_c2 = 9e-4

[robustness]
  deltas = 0:0:0, 0.05:0:0, 0.1:0:0, 0.1:0.1:0.1, 0.14:0:0, 0.2:0:0,
           0.3:0:0, 0.6:0:0, 1:0:0, 0.1:0.2:0.3       (sweepable)
  voxels = 40, 12, 30        grid counts (or nx, ny, nz)
  bounds = -10, 10, -3, 3, 0, 15
  random_trials = 1000       random sub-voxel displacements

[voxelsweep]
  grids = 1:1:1, 20:20:24, 40:40:24, 60:60:24   (sweepable)
  delta = 0.3:0:0            object motion for the moved column
  expand = 0.01              joint bounding box growth

[totalloss]
  alpha = 1, beta = 0.01, gamma = 0.05, eta = 0.05
  voxels = 40, 40, 24

[metrics]
  cap = 80, median_scale = true
  [pair] pred = <file>, gt = <file>, split = motion|static
         (optional mask <gt>.mask.xvt, non-zero = valid)
)";
}

} // namespace xvc

// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Grouped deformable sampling of C x H x W feature maps and the depth feature
// alignment losses built on it.

#include "xvc/bilinear.hpp"
#include "xvc/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

namespace xvc {

inline void check_feature_map(const Tensor &f, const char *what) {
    detail::require(f.rank() == 3, std::string(what) + ": feature map must be C x H x W, got " + shape_str(f.shape()));
}

/// Per-position displacements. Channel ((g·n² + k)·2 + a) holds axis a
/// (0 = Δx, 1 = Δy) of kernel tap k in group g; taps run row-major over the
/// n x n window, so tap k sits at (k % n - n/2, k / n - n/2).
struct OffsetField {
    std::size_t groups = 8;
    std::size_t kernel = 3;
    Tensor values; // (G·2·n²) x H x W

    OffsetField() = default;
    OffsetField(std::size_t g, std::size_t n, Tensor v) : groups(g), kernel(n), values(std::move(v)) { validate(); }

    static OffsetField zeros(std::size_t g, std::size_t n, std::size_t H, std::size_t W, bool requires_grad = false) {
        return OffsetField(g, n, Tensor::zeros({g * 2 * n * n, H, W}, requires_grad));
    }

    /// Every tap of every group displaced by the same (dx, dy).
    static OffsetField constant(std::size_t g, std::size_t n, std::size_t H, std::size_t W, double dx, double dy) {
        std::vector<double> v(g * 2 * n * n * H * W);
        for (std::size_t ch = 0; ch < g * 2 * n * n; ++ch) {
            std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(ch * H * W), H * W, ch % 2 == 0 ? dx : dy);
        }
        return OffsetField(g, n, Tensor({g * 2 * n * n, H, W}, std::move(v)));
    }

    std::size_t taps() const { return kernel * kernel; }

    void validate() const {
        detail::require(groups > 0, "OffsetField: groups must be positive");
        detail::require(kernel > 0 && kernel % 2 == 1, "OffsetField: kernel size must be odd");
        detail::require(values.rank() == 3 && values.dim(0) == groups * 2 * kernel * kernel,
                        "OffsetField: expected " + std::to_string(groups * 2 * kernel * kernel) +
                            " channels, got shape " + shape_str(values.shape()));
    }
};

/// Tap weights γ(p_k), one row of n² values per group, shared over positions.
struct KernelWeights {
    std::size_t groups = 8;
    std::size_t kernel = 3;
    Tensor values; // G x n²

    KernelWeights() = default;
    KernelWeights(std::size_t g, std::size_t n, Tensor v) : groups(g), kernel(n), values(std::move(v)) {
        detail::require(values.rank() == 2 && values.dim(0) == g && values.dim(1) == n * n,
                        "KernelWeights: expected shape (G, n²)");
    }

    /// 1 on the center tap, 0 elsewhere.
    static KernelWeights delta_center(std::size_t g, std::size_t n, bool requires_grad = false) {
        std::vector<double> v(g * n * n, 0.0);
        for (std::size_t i = 0; i < g; ++i) {
            v[i * n * n + n * n / 2] = 1.0;
        }
        return KernelWeights(g, n, Tensor({g, n * n}, std::move(v), requires_grad));
    }
};

/// out(c, p) = Σ_k γ_g(k) · src(c, p + p_k + Δp_k), with g the group of channel
/// c. Samples are bilinear with clamped coordinates. Differentiable w.r.t. the
/// source, the offsets and the weights.
inline Tensor deformable_sample(const Tensor &src, const OffsetField &offsets, const KernelWeights &weights) {
    check_feature_map(src, "deformable_sample");
    offsets.validate();
    const std::size_t C = src.dim(0);
    const std::size_t H = src.dim(1);
    const std::size_t W = src.dim(2);
    const std::size_t G = offsets.groups;
    const std::size_t n = offsets.kernel;
    const std::size_t K = n * n;
    detail::require(offsets.values.dim(1) == H && offsets.values.dim(2) == W,
                    "deformable_sample: offset field spatial size differs from source");
    detail::require(C % G == 0, "deformable_sample: " + std::to_string(C) + " channels not divisible into " +
                                    std::to_string(G) + " groups");
    detail::require(weights.groups == G && weights.kernel == n,
                    "deformable_sample: kernel weights do not match the offset field's groups/kernel");
    const std::size_t Cg = C / G;
    const std::size_t HW = H * W;
    const auto r = static_cast<double>(n / 2);

    // Footprint of every (group, tap, pixel).
    auto taps = std::make_shared<std::vector<detail::BilinearTap>>(G * K * HW);
    const auto off = offsets.values.data();
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t k = 0; k < K; ++k) {
            const double kx = static_cast<double>(k % n) - r;
            const double ky = static_cast<double>(k / n) - r;
            const double *ox = &off[((g * K + k) * 2) * HW];
            const double *oy = &off[((g * K + k) * 2 + 1) * HW];
            for (std::size_t p = 0; p < HW; ++p) {
                const double x = static_cast<double>(p % W) + kx + ox[p];
                const double y = static_cast<double>(p / W) + ky + oy[p];
                (*taps)[(g * K + k) * HW + p] = detail::bilinear_tap(x, y, H, W);
            }
        }
    }

    const auto s = src.data();
    const auto w = weights.values.data();
    std::vector<double> out(C * HW, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const std::size_t g = c / Cg;
        const double *plane = &s[c * HW];
        for (std::size_t k = 0; k < K; ++k) {
            const double wk = w[g * K + k];
            const auto *tk = &(*taps)[(g * K + k) * HW];
            for (std::size_t p = 0; p < HW; ++p) {
                const auto &t = tk[p];
                const double v = (1 - t.ay) * ((1 - t.ax) * plane[t.i00] + t.ax * plane[t.i01]) +
                                 t.ay * ((1 - t.ax) * plane[t.i10] + t.ax * plane[t.i11]);
                out[c * HW + p] += wk * v;
            }
        }
    }

    Tensor wt = weights.values;
    return Tensor::make_op(
        "deformable_sample", {C, H, W}, std::move(out), {src, offsets.values, wt},
        [src, wt, taps, G, K, Cg, HW](std::span<const double>, std::span<const double> g,
                                      std::span<double *const> gi) {
            const auto s = src.data();
            const auto w = wt.data();
            const std::size_t C = G * Cg;
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t grp = c / Cg;
                const double *plane = &s[c * HW];
                for (std::size_t k = 0; k < K; ++k) {
                    const double wk = w[grp * K + k];
                    const auto *tk = &(*taps)[(grp * K + k) * HW];
                    double gw = 0.0;
                    for (std::size_t p = 0; p < HW; ++p) {
                        const auto &t = tk[p];
                        const double up = g[c * HW + p];
                        if (up == 0.0) {
                            continue;
                        }
                        const double a = plane[t.i00];
                        const double b = plane[t.i01];
                        const double d = plane[t.i10];
                        const double e = plane[t.i11];
                        if (gi[0]) {
                            double *gs = gi[0] + c * HW;
                            gs[t.i00] += up * wk * (1 - t.ay) * (1 - t.ax);
                            gs[t.i01] += up * wk * (1 - t.ay) * t.ax;
                            gs[t.i10] += up * wk * t.ay * (1 - t.ax);
                            gs[t.i11] += up * wk * t.ay * t.ax;
                        }
                        if (gi[1]) {
                            double *gx = gi[1] + ((grp * K + k) * 2) * HW;
                            double *gy = gi[1] + ((grp * K + k) * 2 + 1) * HW;
                            if (!t.clamp_x) {
                                gx[p] += up * wk * ((1 - t.ay) * (b - a) + t.ay * (e - d));
                            }
                            if (!t.clamp_y) {
                                gy[p] += up * wk * ((1 - t.ax) * (d - a) + t.ax * (e - b));
                            }
                        }
                        gw += up * ((1 - t.ay) * ((1 - t.ax) * a + t.ax * b) + t.ay * ((1 - t.ax) * d + t.ax * e));
                    }
                    if (gi[2]) {
                        gi[2][grp * K + k] += gw;
                    }
                }
            }
        });
}

/// Mean squared difference.
inline Tensor recon_loss(const Tensor &ref_image, const Tensor &recon_image) {
    detail::require(ref_image.shape() == recon_image.shape(), "recon_loss: shapes " + shape_str(ref_image.shape()) +
                                                                  " and " + shape_str(recon_image.shape()) + " differ");
    return mean(square(ref_image - recon_image));
}

/// Aligns the source depth features with the RGB-derived offsets and weights,
/// then takes the mean squared difference to the reference depth features.
inline Tensor df_loss(const Tensor &depth_feat_ref, const Tensor &depth_feat_src, const OffsetField &offsets,
                      const KernelWeights &weights) {
    check_feature_map(depth_feat_ref, "df_loss");
    detail::require(depth_feat_ref.shape() == depth_feat_src.shape(), "df_loss: depth feature shapes differ");
    return recon_loss(depth_feat_ref, deformable_sample(depth_feat_src, offsets, weights));
}

// ---------------------------------------------------------------------------
// Fixed convolution stacks standing in for the feature extractor and the
// reconstruction network.

/// Replicate-padded 2D convolution on C x H x W input; weight Cout x Cin x k x k.
inline Tensor conv2d(const Tensor &x, const Tensor &weight, const Tensor &bias) {
    check_feature_map(x, "conv2d");
    detail::require(weight.rank() == 4 && weight.dim(1) == x.dim(0) && weight.dim(2) == weight.dim(3) &&
                        weight.dim(2) % 2 == 1,
                    "conv2d: weight must be Cout x Cin x k x k with odd k matching input channels");
    detail::require(bias.rank() == 1 && bias.dim(0) == weight.dim(0), "conv2d: bias length must equal Cout");
    const std::size_t Ci = x.dim(0);
    const std::size_t H = x.dim(1);
    const std::size_t W = x.dim(2);
    const std::size_t Co = weight.dim(0);
    const std::size_t k = weight.dim(2);
    const auto r = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t HW = H * W;
    // Source pixel of every (pixel, tap).
    auto src = std::make_shared<std::vector<std::size_t>>(HW * k * k);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t xx = 0; xx < W; ++xx) {
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const auto sy = static_cast<std::size_t>(
                        std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + dy, 0, static_cast<std::ptrdiff_t>(H) - 1));
                    const auto sx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                        static_cast<std::ptrdiff_t>(xx) + dx, 0, static_cast<std::ptrdiff_t>(W) - 1));
                    (*src)[(y * W + xx) * k * k + static_cast<std::size_t>((dy + r) * static_cast<std::ptrdiff_t>(k) + dx + r)] =
                        sy * W + sx;
                }
            }
        }
    }
    const std::size_t KK = k * k;
    const auto in = x.data();
    const auto wd = weight.data();
    std::vector<double> out(Co * HW);
    for (std::size_t o = 0; o < Co; ++o) {
        for (std::size_t p = 0; p < HW; ++p) {
            double acc = bias.value(o);
            for (std::size_t i = 0; i < Ci; ++i) {
                const double *wrow = &wd[(o * Ci + i) * KK];
                const double *plane = &in[i * HW];
                const std::size_t *sp = &(*src)[p * KK];
                for (std::size_t t = 0; t < KK; ++t) {
                    acc += wrow[t] * plane[sp[t]];
                }
            }
            out[o * HW + p] = acc;
        }
    }
    return Tensor::make_op("conv2d", {Co, H, W}, std::move(out), {x, weight, bias},
                           [x, weight, src, Ci, Co, HW, KK](std::span<const double>, std::span<const double> g,
                                                            std::span<double *const> gi) {
                               const auto in = x.data();
                               const auto wd = weight.data();
                               for (std::size_t o = 0; o < Co; ++o) {
                                   for (std::size_t p = 0; p < HW; ++p) {
                                       const double up = g[o * HW + p];
                                       if (gi[2]) {
                                           gi[2][o] += up;
                                       }
                                       const std::size_t *sp = &(*src)[p * KK];
                                       for (std::size_t i = 0; i < Ci; ++i) {
                                           for (std::size_t t = 0; t < KK; ++t) {
                                               const std::size_t wi = (o * Ci + i) * KK + t;
                                               if (gi[0]) {
                                                   gi[0][i * HW + sp[t]] += up * wd[wi];
                                               }
                                               if (gi[1]) {
                                                   gi[1][wi] += up * in[i * HW + sp[t]];
                                               }
                                           }
                                       }
                                   }
                               }
                           });
}

struct ConvLayer {
    Tensor weight; // Cout x Cin x k x k
    Tensor bias;   // Cout
};

/// Convolutions applied in sequence with no nonlinearity, i.e. an affine map.
struct ConvStack {
    std::vector<ConvLayer> layers;

    Tensor operator()(const Tensor &x) const {
        Tensor y = x;
        for (const auto &l : layers) {
            y = conv2d(y, l.weight, l.bias);
        }
        return y;
    }

    /// Single 1x1 layer computing out = M·in + b per pixel; M is Cout x Cin.
    static ConvStack pointwise(std::size_t cout, std::size_t cin, std::vector<double> matrix,
                               std::vector<double> bias = {}) {
        detail::require(matrix.size() == cout * cin, "ConvStack::pointwise: matrix must be Cout x Cin");
        if (bias.empty()) {
            bias.assign(cout, 0.0);
        }
        return ConvStack{{ConvLayer{Tensor({cout, cin, 1, 1}, std::move(matrix)), Tensor({cout}, std::move(bias))}}};
    }
};

/// H x W x C image to C x H x W.
inline Tensor hwc_to_chw(const Tensor &image) {
    detail::require(image.rank() == 3, "hwc_to_chw: expected rank 3");
    return permute(image, {2, 0, 1});
}

inline Tensor chw_to_hwc(const Tensor &features) {
    detail::require(features.rank() == 3, "chw_to_hwc: expected rank 3");
    return permute(features, {1, 2, 0});
}

struct DfaTerms {
    Tensor recon; // reconstruction of the reference frame from aligned source features
    Tensor df;    // depth feature alignment
    Tensor total; // recon + df
};

/// Reference-frame reconstruction loss and depth feature loss sharing one set
/// of offsets and weights. Images are H x W x C; the extractor maps C x H x W
/// images to features and the reconstructor maps features back.
inline DfaTerms dfa_terms(const Tensor &ref_image, const Tensor &src_image, const Tensor &depth_feat_ref,
                          const Tensor &depth_feat_src, const OffsetField &offsets, const KernelWeights &weights,
                          const ConvStack &extractor, const ConvStack &reconstructor) {
    detail::require(ref_image.shape() == src_image.shape(), "dfa_loss: reference and source images differ in shape");
    Tensor aligned = deformable_sample(extractor(hwc_to_chw(src_image)), offsets, weights);
    Tensor recon = chw_to_hwc(reconstructor(aligned));
    Tensor l_re = recon_loss(ref_image, recon);
    Tensor l_df = df_loss(depth_feat_ref, depth_feat_src, offsets, weights);
    Tensor total = l_re + l_df;
    return {std::move(l_re), std::move(l_df), std::move(total)};
}

inline Tensor dfa_loss(const Tensor &ref_image, const Tensor &src_image, const Tensor &depth_feat_ref,
                       const Tensor &depth_feat_src, const OffsetField &offsets, const KernelWeights &weights,
                       const ConvStack &extractor, const ConvStack &reconstructor) {
    return dfa_terms(ref_image, src_image, depth_feat_ref, depth_feat_src, offsets, weights, extractor, reconstructor)
        .total;
}

} // namespace xvc

// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "xvc/camera.hpp"
#include "xvc/tensor.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace xvc {

struct PhotometricConfig {
    double ssim_weight = 0.85;
    std::size_t ssim_window = 3;
    double ssim_c1 = 1e-4;
    double ssim_c2 = 9e-4;

    void validate() const {
        detail::require(ssim_weight >= 0.0 && ssim_weight <= 1.0, "PhotometricConfig: ssim_weight must be in [0, 1]");
        detail::require(ssim_window >= 3 && ssim_window % 2 == 1,
                        "PhotometricConfig: ssim_window must be odd and >= 3");
        detail::require(ssim_c1 > 0.0 && ssim_c2 > 0.0, "PhotometricConfig: SSIM stabilizers must be positive");
    }

    static PhotometricConfig from_config(const ConfigSection &s) {
        PhotometricConfig c;
        c.ssim_weight = s.get_double("ssim_weight", c.ssim_weight);
        c.ssim_window = static_cast<std::size_t>(s.get_int("ssim_window", static_cast<long>(c.ssim_window)));
        c.ssim_c1 = s.get_double("ssim_c1", c.ssim_c1);
        c.ssim_c2 = s.get_double("ssim_c2", c.ssim_c2);
        c.validate();
        return c;
    }
};

namespace detail {

inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) {
        i = -i;
    }
    const auto m = static_cast<std::ptrdiff_t>(n);
    if (i >= m) {
        i = 2 * (m - 1) - i;
    }
    return static_cast<std::size_t>(i);
}

} // namespace detail

/// Mean over a window x window neighbourhood with reflection padding, per
/// channel of an H x W x C tensor.
inline Tensor box_filter(const Tensor &image, std::size_t window) {
    detail::require(image.rank() == 3, "box_filter: expected H x W x C");
    detail::require(window % 2 == 1, "box_filter: window must be odd");
    const std::size_t H = image.dim(0);
    const std::size_t W = image.dim(1);
    const std::size_t C = image.dim(2);
    const auto r = static_cast<std::ptrdiff_t>(window / 2);
    detail::require(H > window / 2 && W > window / 2, "box_filter: image smaller than filter radius");
    // Source pixel of every (output pixel, tap) pair.
    auto src = std::make_shared<std::vector<std::size_t>>();
    src->reserve(H * W * window * window);
    for (std::size_t v = 0; v < H; ++v) {
        for (std::size_t u = 0; u < W; ++u) {
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const auto y = detail::reflect(static_cast<std::ptrdiff_t>(v) + dy, H);
                    const auto x = detail::reflect(static_cast<std::ptrdiff_t>(u) + dx, W);
                    src->push_back(y * W + x);
                }
            }
        }
    }
    const std::size_t taps = window * window;
    const double norm = 1.0 / static_cast<double>(taps);
    const auto x = image.data();
    std::vector<double> out(image.numel(), 0.0);
    for (std::size_t p = 0; p < H * W; ++p) {
        for (std::size_t k = 0; k < taps; ++k) {
            const std::size_t q = (*src)[p * taps + k];
            for (std::size_t c = 0; c < C; ++c) {
                out[p * C + c] += x[q * C + c];
            }
        }
        for (std::size_t c = 0; c < C; ++c) {
            out[p * C + c] *= norm;
        }
    }
    return Tensor::make_op("box_filter", image.shape(), std::move(out), {image},
                           [src, taps, C, norm](std::span<const double>, std::span<const double> g,
                                                std::span<double *const> gi) {
                               const std::size_t pixels = src->size() / taps;
                               for (std::size_t p = 0; p < pixels; ++p) {
                                   for (std::size_t k = 0; k < taps; ++k) {
                                       const std::size_t q = (*src)[p * taps + k];
                                       for (std::size_t c = 0; c < C; ++c) {
                                           gi[0][q * C + c] += norm * g[p * C + c];
                                       }
                                   }
                               }
                           });
}

/// Per-element dissimilarity clamp((1 - SSIM) / 2, 0, 1), H x W x C.
inline Tensor ssim_dissimilarity(const Tensor &x, const Tensor &y, const PhotometricConfig &cfg) {
    cfg.validate();
    detail::require(x.shape() == y.shape(), "ssim: image shapes differ");
    const auto w = cfg.ssim_window;
    Tensor mu_x = box_filter(x, w);
    Tensor mu_y = box_filter(y, w);
    Tensor sigma_x = box_filter(x * x, w) - mu_x * mu_x;
    Tensor sigma_y = box_filter(y * y, w) - mu_y * mu_y;
    Tensor sigma_xy = box_filter(x * y, w) - mu_x * mu_y;
    Tensor num = (2.0 * mu_x * mu_y + cfg.ssim_c1) * (2.0 * sigma_xy + cfg.ssim_c2);
    Tensor den = (mu_x * mu_x + mu_y * mu_y + cfg.ssim_c1) * (sigma_x + sigma_y + cfg.ssim_c2);
    return clip((1.0 - num / den) * 0.5, 0.0, 1.0);
}

/// Per-pixel photometric error, H x W: weighted SSIM term plus L1, averaged
/// over channels.
inline Tensor photometric_error_map(const Tensor &ref, const Tensor &warped, const PhotometricConfig &cfg) {
    detail::require(ref.rank() == 3 && ref.shape() == warped.shape(),
                    "photometric: ref " + shape_str(ref.shape()) + " and warped " + shape_str(warped.shape()) +
                        " must be equal H x W x C");
    Tensor l1 = abs(ref - warped);
    Tensor per_channel = cfg.ssim_weight == 0.0
                             ? l1
                             : cfg.ssim_weight * ssim_dissimilarity(ref, warped, cfg) + (1.0 - cfg.ssim_weight) * l1;
    return mean(per_channel, {2});
}

namespace detail {

inline Tensor masked_mean(const Tensor &map, const std::vector<std::uint8_t> &mask) {
    require(mask.size() == map.numel(), "masked mean: mask size does not match H x W");
    std::vector<double> m(mask.size());
    std::size_t count = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        m[i] = mask[i] ? 1.0 : 0.0;
        count += mask[i] ? 1 : 0;
    }
    if (count == 0) {
        throw DomainError("no valid pixels");
    }
    return sum(map * Tensor(map.shape(), std::move(m))) / static_cast<double>(count);
}

} // namespace detail

/// Photometric error averaged over the pixels valid in `mask`.
inline Tensor photometric_loss(const Tensor &ref, const Tensor &warped, const std::vector<std::uint8_t> &mask,
                               const PhotometricConfig &cfg = {}) {
    cfg.validate();
    return detail::masked_mean(photometric_error_map(ref, warped, cfg), mask);
}

/// Per-pixel minimum over several warped sources. A pixel counts when at least
/// one source is valid there; invalid sources never win the minimum.
inline Tensor photometric_loss_min(const Tensor &ref, const std::vector<Tensor> &warped,
                                   const std::vector<std::vector<std::uint8_t>> &masks,
                                   const PhotometricConfig &cfg = {}) {
    cfg.validate();
    detail::require(!warped.empty() && warped.size() == masks.size(),
                    "photometric_loss_min: need one mask per warped source");
    Tensor best;
    std::vector<std::uint8_t> best_valid(masks[0].size(), 0);
    for (std::size_t s = 0; s < warped.size(); ++s) {
        Tensor err = photometric_error_map(ref, warped[s], cfg);
        detail::require(masks[s].size() == err.numel(), "photometric_loss_min: mask size mismatch");
        if (!best.defined()) {
            best = err;
            best_valid = masks[s];
            continue;
        }
        // Per pixel: 1 where this source wins. Ties keep the earlier source.
        std::vector<double> take(err.numel());
        for (std::size_t i = 0; i < take.size(); ++i) {
            const bool wins = masks[s][i] && (!best_valid[i] || err.value(i) < best.value(i));
            take[i] = wins ? 1.0 : 0.0;
            best_valid[i] |= masks[s][i];
        }
        Tensor sel(err.shape(), std::move(take));
        best = err * sel + best * (1.0 - sel);
    }
    return detail::masked_mean(best, best_valid);
}

/// Edge-aware smoothness of mean-normalized inverse depth:
/// mean |∂x μ| e^{-|∂x I|} + mean |∂y μ| e^{-|∂y I|}, forward differences,
/// image gradients averaged over channels.
inline Tensor smoothness_loss(const Tensor &depth, const Tensor &image) {
    detail::require(depth.rank() == 2, "smoothness_loss: depth must be H x W");
    detail::require(image.rank() == 3 && image.dim(0) == depth.dim(0) && image.dim(1) == depth.dim(1),
                    "smoothness_loss: image must be H x W x C matching depth");
    const std::size_t H = depth.dim(0);
    const std::size_t W = depth.dim(1);
    detail::require(H >= 2 && W >= 2, "smoothness_loss: need at least 2 x 2 pixels");
    Tensor disp = 1.0 / depth;
    Tensor mean_disp = mean(disp);
    if (mean_disp.item() == 0.0) {
        throw DomainError("smoothness_loss: mean inverse depth is zero");
    }
    Tensor mu = disp / mean_disp;
    Tensor dmx = abs(slice(mu, 1, 1, W - 1) - slice(mu, 1, 0, W - 1));
    Tensor dmy = abs(slice(mu, 0, 1, H - 1) - slice(mu, 0, 0, H - 1));
    Tensor dix = mean(abs(slice(image, 1, 1, W - 1) - slice(image, 1, 0, W - 1)), {2});
    Tensor diy = mean(abs(slice(image, 0, 1, H - 1) - slice(image, 0, 0, H - 1)), {2});
    return mean(dmx * exp(-dix)) + mean(dmy * exp(-diy));
}

inline Tensor smoothness_loss(const DepthMap &depth, const Tensor &image) { return smoothness_loss(depth.values, image); }

} // namespace xvc

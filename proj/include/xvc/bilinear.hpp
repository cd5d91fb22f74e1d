// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace xvc {

namespace detail {

struct BilinearTap {
    std::size_t i00, i01, i10, i11;
    double ax, ay;
    bool clamp_x, clamp_y;
};

/// Clamped bilinear footprint of (x, y) on an H x W grid.
inline BilinearTap bilinear_tap(double x, double y, std::size_t H, std::size_t W) {
    const double wmax = static_cast<double>(W - 1);
    const double hmax = static_cast<double>(H - 1);
    BilinearTap t{};
    t.clamp_x = !(x >= 0.0 && x <= wmax);
    t.clamp_y = !(y >= 0.0 && y <= hmax);
    const double xc = std::clamp(std::isfinite(x) ? x : 0.0, 0.0, wmax);
    const double yc = std::clamp(std::isfinite(y) ? y : 0.0, 0.0, hmax);
    std::size_t x0 = static_cast<std::size_t>(std::floor(xc));
    std::size_t y0 = static_cast<std::size_t>(std::floor(yc));
    if (W > 1 && x0 > W - 2) {
        x0 = W - 2;
    }
    if (H > 1 && y0 > H - 2) {
        y0 = H - 2;
    }
    const std::size_t x1 = std::min(x0 + 1, W - 1);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    t.ax = W > 1 ? xc - static_cast<double>(x0) : 0.0;
    t.ay = H > 1 ? yc - static_cast<double>(y0) : 0.0;
    t.i00 = y0 * W + x0;
    t.i01 = y0 * W + x1;
    t.i10 = y1 * W + x0;
    t.i11 = y1 * W + x1;
    return t;
}

} // namespace detail

} // namespace xvc

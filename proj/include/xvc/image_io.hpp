// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary PGM/PPM export for inspection.

#include "xvc/tensor.hpp"
#include "xvc/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

namespace xvc {

namespace detail {

inline unsigned char to_byte(double v, double scale) {
    const double x = std::isfinite(v) ? std::clamp(v / scale, 0.0, 1.0) : 0.0;
    return static_cast<unsigned char>(std::lround(255.0 * x));
}

inline void write_netpbm(const std::filesystem::path &path, const char *magic, std::size_t H, std::size_t W,
                         const std::string &payload) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << magic << '\n' << W << ' ' << H << "\n255\n";
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

} // namespace detail

/// 8-bit grayscale of an H x W map; values map linearly from [0, scale] to
/// [0, 255] and are clipped.
inline void write_pgm(const std::filesystem::path &path, const Tensor &map, double scale = 1.0) {
    detail::require(map.rank() == 2, "write_pgm: expected H x W, got " + shape_str(map.shape()));
    detail::require(scale > 0.0, "write_pgm: scale must be positive");
    std::string bytes(map.numel(), '\0');
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<char>(detail::to_byte(map.value(i), scale));
    }
    detail::write_netpbm(path, "P5", map.dim(0), map.dim(1), bytes);
}

/// 8-bit RGB of an H x W x 3 image with values in [0, 1].
inline void write_ppm(const std::filesystem::path &path, const Tensor &image) {
    detail::require(image.rank() == 3 && image.dim(2) == 3, "write_ppm: expected H x W x 3, got " + shape_str(image.shape()));
    std::string bytes(image.numel(), '\0');
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<char>(detail::to_byte(image.value(i), 1.0));
    }
    detail::write_netpbm(path, "P6", image.dim(0), image.dim(1), bytes);
}

} // namespace xvc

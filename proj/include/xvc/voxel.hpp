// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Voxel density alignment.
//
// A point cloud is summarized by the fraction of its points in each cell of an
// axis-aligned grid. Voxel indices come from floor operations and counting
// from sign(|V - i|); both are non-differentiable, so they run as
// straight-through estimators: floor passes gradients unchanged and sign uses
// the derivative of Htanh(2x - 1) (see sign_ste in tensor.hpp).

#include "xvc/camera.hpp"
#include "xvc/config.hpp"
#include "xvc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace xvc {

struct VoxelGrid {
    double x_min = 0.0, x_max = 1.0;
    double y_min = 0.0, y_max = 1.0;
    double z_min = 0.0, z_max = 1.0;
    std::size_t nx = 40, ny = 40, nz = 24;

    double dx() const { return (x_max - x_min) / static_cast<double>(nx); }
    double dy() const { return (y_max - y_min) / static_cast<double>(ny); }
    double dz() const { return (z_max - z_min) / static_cast<double>(nz); }
    std::size_t total() const { return nx * ny * nz; }

    void validate() const {
        detail::require(x_max > x_min && y_max > y_min && z_max > z_min,
                        "VoxelGrid: degenerate grid, every axis needs max > min");
        detail::require(nx > 0 && ny > 0 && nz > 0, "VoxelGrid: voxel counts must be positive");
    }

    /// Joint bounding box of two clouds, each side padded by half of
    /// `expand` times the axis extent (so the extent grows by `expand`).
    static VoxelGrid joint_bounds(const Tensor &a, const Tensor &b, std::size_t nx, std::size_t ny, std::size_t nz,
                                  double expand = 0.01) {
        double lo[3] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::infinity()};
        double hi[3] = {-lo[0], -lo[1], -lo[2]};
        for (const Tensor *t : {&a, &b}) {
            detail::require(t->rank() == 2 && t->dim(1) == 3, "VoxelGrid::joint_bounds: clouds must be n x 3");
            for (std::size_t i = 0; i < t->dim(0); ++i) {
                for (std::size_t c = 0; c < 3; ++c) {
                    lo[c] = std::min(lo[c], t->value(3 * i + c));
                    hi[c] = std::max(hi[c], t->value(3 * i + c));
                }
            }
        }
        for (std::size_t c = 0; c < 3; ++c) {
            const double pad = std::max(0.5 * expand * (hi[c] - lo[c]), 1e-6);
            lo[c] -= pad;
            hi[c] += pad;
        }
        VoxelGrid g{lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], nx, ny, nz};
        g.validate();
        return g;
    }

    /// Keys: `voxels = nx, ny, nz` (or nx/ny/nz individually) and optionally
    /// `bounds = x_min, x_max, y_min, y_max, z_min, z_max`.
    static VoxelGrid from_config(const ConfigSection &s);
    static VoxelGrid from_config(const ConfigSection &s, const VoxelGrid &defaults) {
        VoxelGrid g = defaults;
        if (s.has("voxels")) {
            const auto v = s.require_doubles("voxels", 3);
            g.nx = static_cast<std::size_t>(v[0]);
            g.ny = static_cast<std::size_t>(v[1]);
            g.nz = static_cast<std::size_t>(v[2]);
        }
        g.nx = static_cast<std::size_t>(s.get_int("nx", static_cast<long>(g.nx)));
        g.ny = static_cast<std::size_t>(s.get_int("ny", static_cast<long>(g.ny)));
        g.nz = static_cast<std::size_t>(s.get_int("nz", static_cast<long>(g.nz)));
        if (s.has("bounds")) {
            const auto b = s.require_doubles("bounds", 6);
            g.x_min = b[0], g.x_max = b[1], g.y_min = b[2], g.y_max = b[3], g.z_min = b[4], g.z_max = b[5];
        }
        try {
            g.validate();
        } catch (const ContractViolation &e) {
            throw ConfigError(e.what());
        }
        return g;
    }

    /// Clamped integer cell along each axis of a single point.
    std::array<std::size_t, 3> cell(const Vec3 &p) const {
        const double s[3] = {(p[0] - x_min) / dx(), (p[1] - y_min) / dy(), (p[2] - z_min) / dz()};
        const std::size_t n[3] = {nx, ny, nz};
        std::array<std::size_t, 3> out{};
        for (int a = 0; a < 3; ++a) {
            const double f = std::clamp(std::floor(s[a]), 0.0, static_cast<double>(n[a] - 1));
            out[static_cast<std::size_t>(a)] = static_cast<std::size_t>(f);
        }
        return out;
    }

    std::size_t index_of(const Vec3 &p) const {
        const auto c = cell(p);
        return c[0] + c[1] * nx + c[2] * nx * ny;
    }

    bool contains(const Vec3 &p) const {
        return p[0] >= x_min && p[0] <= x_max && p[1] >= y_min && p[1] <= y_max && p[2] >= z_min && p[2] <= z_max;
    }
};

inline VoxelGrid VoxelGrid::from_config(const ConfigSection &s) { return from_config(s, VoxelGrid{}); }

struct VoxelIndex {
    Tensor index;                           // n, integer-valued
    std::vector<std::uint8_t> out_of_bounds; // per point; such points are clamped to a boundary voxel
};

namespace detail {

inline Tensor column(const Tensor &points, std::size_t c) {
    const std::size_t n = points.dim(0);
    std::vector<std::size_t> map(n);
    for (std::size_t i = 0; i < n; ++i) {
        map[i] = 3 * i + c;
    }
    return gather("column", points, {n}, std::move(map));
}

} // namespace detail

/// ν(P) = ⌊(x - x_min)/Δx⌋ + ⌊(y - y_min)/Δy⌋·Nx + ⌊(z - z_min)/Δz⌋·Nx·Ny,
/// each axis clamped to [0, N_axis - 1]. Points on the upper bound belong to
/// the last cell.
inline VoxelIndex voxel_index(const Tensor &points, const VoxelGrid &grid) {
    grid.validate();
    detail::require(points.rank() == 2 && points.dim(1) == 3, "voxel_index: points must be n x 3");
    const double mins[3] = {grid.x_min, grid.y_min, grid.z_min};
    const double steps[3] = {grid.dx(), grid.dy(), grid.dz()};
    const std::size_t counts[3] = {grid.nx, grid.ny, grid.nz};
    const double strides[3] = {1.0, static_cast<double>(grid.nx), static_cast<double>(grid.nx * grid.ny)};
    const std::size_t n = points.dim(0);
    std::vector<std::uint8_t> oob(n, 0);
    Tensor index;
    for (std::size_t a = 0; a < 3; ++a) {
        Tensor scaled = (detail::column(points, a) - mins[a]) / steps[a];
        for (std::size_t i = 0; i < n; ++i) {
            const double s = scaled.value(i);
            if (!(s >= 0.0 && s <= static_cast<double>(counts[a]))) {
                oob[i] = 1;
            }
        }
        Tensor cell = clip(floor_ste(scaled), 0.0, static_cast<double>(counts[a] - 1));
        Tensor term = a == 0 ? cell : cell * strides[a];
        index = index.defined() ? index + term : term;
    }
    return {std::move(index), std::move(oob)};
}

inline VoxelIndex voxel_index(const PointCloud &pc, const VoxelGrid &grid) { return voxel_index(pc.points, grid); }

/// Straight-through sign.
inline Tensor ste_sign(const Tensor &x) { return sign_ste(x); }

/// C_i = n - ||sign(|V - i|)||₁ for i in [0, N): the number of entries of V
/// equal to i. Fused: the forward pass is an exact histogram and the backward
/// pass is the derivative of the Htanh surrogate, which only reaches the two
/// cells within distance 1 of each entry.
inline Tensor count_vector(const Tensor &V, std::size_t N) {
    detail::require(N > 0, "count_vector: N must be positive");
    detail::require(V.rank() == 1 && V.numel() > 0, "count_vector: V must be a non-empty vector");
    const auto v = V.data();
    std::vector<double> out(N, 0.0);
    for (double x : v) {
        if (x >= 0.0 && x < static_cast<double>(N) && x == std::floor(x)) {
            out[static_cast<std::size_t>(x)] += 1.0;
        }
    }
    return Tensor::make_op("count_vector", {N}, std::move(out), {V},
                           [V, N](std::span<const double>, std::span<const double> g, std::span<double *const> gi) {
                               // dC_i/dV_j = -Htanh'(|V_j - i|) · sgn(V_j - i)
                               const auto v = V.data();
                               const auto cells = static_cast<double>(N);
                               for (std::size_t j = 0; j < v.size(); ++j) {
                                   const double lo = std::floor(v[j]);
                                   if (lo == v[j]) {
                                       continue; // |V_j - i| is 0 or >= 1 for every cell
                                   }
                                   double acc = 0.0;
                                   if (lo >= 0.0 && lo < cells) {
                                       acc -= htanh_surrogate_grad(v[j] - lo) * g[static_cast<std::size_t>(lo)];
                                   }
                                   if (lo + 1.0 >= 0.0 && lo + 1.0 < cells) {
                                       acc += htanh_surrogate_grad(lo + 1.0 - v[j]) * g[static_cast<std::size_t>(lo + 1.0)];
                                   }
                                   gi[0][j] += acc;
                               }
                           });
}

/// The same counting vector assembled from elementwise operations on an
/// N x n matrix. Quadratic memory; for small inputs and cross-checks.
inline Tensor count_vector_dense(const Tensor &V, std::size_t N) {
    detail::require(N > 0, "count_vector: N must be positive");
    detail::require(V.rank() == 1 && V.numel() > 0, "count_vector: V must be a non-empty vector");
    const std::size_t n = V.numel();
    std::vector<double> cells(N);
    for (std::size_t i = 0; i < N; ++i) {
        cells[i] = static_cast<double>(i);
    }
    Tensor idx({N, 1}, std::move(cells));
    Tensor diff = abs(reshape(V, {1, n}) - idx); // N x n
    return static_cast<double>(n) - sum(ste_sign(diff), {1});
}

struct DensityVector {
    Tensor values;                 // N entries, sum to 1
    std::size_t out_of_bounds = 0; // points clamped into boundary voxels
};

/// ρ = count_vector(ν(P)) / n.
inline DensityVector voxel_density(const Tensor &points, const VoxelGrid &grid) {
    detail::require(points.rank() == 2 && points.dim(1) == 3 && points.dim(0) > 0,
                    "voxel_density: point cloud must be a non-empty n x 3 tensor");
    VoxelIndex vi = voxel_index(points, grid);
    std::size_t oob = 0;
    for (auto f : vi.out_of_bounds) {
        oob += f;
    }
    const auto n = static_cast<double>(points.dim(0));
    return {count_vector(vi.index, grid.total()) / n, oob};
}

inline DensityVector voxel_density(const PointCloud &pc, const VoxelGrid &grid) {
    return voxel_density(pc.points, grid);
}

/// Per-voxel counting with the Iverson bracket, divided by n. Not
/// differentiable.
inline std::vector<double> naive_voxel_density(const Tensor &points, const VoxelGrid &grid) {
    grid.validate();
    detail::require(points.rank() == 2 && points.dim(1) == 3 && points.dim(0) > 0,
                    "naive_voxel_density: point cloud must be a non-empty n x 3 tensor");
    std::vector<double> rho(grid.total(), 0.0);
    const std::size_t n = points.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
        rho[grid.index_of({points.value(3 * i), points.value(3 * i + 1), points.value(3 * i + 2)})] += 1.0;
    }
    for (auto &r : rho) {
        r /= static_cast<double>(n);
    }
    return rho;
}

inline constexpr double kDefaultKlEps = 1e-8;

/// D_KL(ρ_ref ‖ ρ_src) = Σ ρ_ref(i)·log((ρ_ref(i) + eps) / (ρ_src(i) + eps)).
/// Entries with ρ_ref(i) = 0 contribute 0.
inline Tensor vda_loss(const Tensor &rho_ref, const Tensor &rho_src, double eps = kDefaultKlEps) {
    detail::require(rho_ref.rank() == 1 && rho_ref.shape() == rho_src.shape(),
                    "vda_loss: density vectors must have equal length");
    detail::require(eps > 0.0, "vda_loss: eps must be positive");
    return sum(rho_ref * (log(rho_ref + eps) - log(rho_src + eps)));
}

inline Tensor vda_loss(const DensityVector &rho_ref, const DensityVector &rho_src, double eps = kDefaultKlEps) {
    return vda_loss(rho_ref.values, rho_src.values, eps);
}

/// Σ_i ‖P_ref(i) − P̂(i)‖₁ over corresponding points.
inline Tensor point_cloud_loss(const Tensor &p_ref, const Tensor &p_hat) {
    detail::require(p_ref.rank() == 2 && p_ref.dim(1) == 3, "point_cloud_loss: clouds must be n x 3");
    detail::require(p_ref.shape() == p_hat.shape(), "point_cloud_loss: point counts differ (" +
                                                        std::to_string(p_ref.dim(0)) + " vs " +
                                                        shape_str(p_hat.shape()) + ")");
    return l1_norm(p_ref - p_hat);
}

inline Tensor point_cloud_loss(const PointCloud &p_ref, const PointCloud &p_hat) {
    return point_cloud_loss(p_ref.points, p_hat.points);
}

/// Σ_i |ν(P_ref(i)) − ν(P̂(i))|. Diagnostic only.
inline double voxel_index_loss(const Tensor &p_ref, const Tensor &p_hat, const VoxelGrid &grid) {
    detail::require(p_ref.rank() == 2 && p_ref.dim(1) == 3, "voxel_index_loss: clouds must be n x 3");
    detail::require(p_ref.shape() == p_hat.shape(), "voxel_index_loss: point counts differ");
    const Tensor a = voxel_index(p_ref, grid).index;
    const Tensor b = voxel_index(p_hat, grid).index;
    double loss = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        loss += std::abs(a.value(i) - b.value(i));
    }
    return loss;
}

inline double voxel_index_loss(const PointCloud &p_ref, const PointCloud &p_hat, const VoxelGrid &grid) {
    return voxel_index_loss(p_ref.points, p_hat.points, grid);
}

} // namespace xvc

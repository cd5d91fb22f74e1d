// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#include "xvc/deformable.hpp"
#include "xvc/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace xvc;

namespace {

Tensor smooth_features(std::size_t C, std::size_t H, std::size_t W) {
    std::vector<double> v(C * H * W);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                v[(c * H + y) * W + x] = std::sin(0.5 * x + 0.3 * c) + 0.4 * std::cos(0.35 * y - 0.1 * c);
            }
        }
    }
    return Tensor({C, H, W}, std::move(v));
}

// Smooth bump that is zero within two pixels of every border, evaluated at
// (x + sx, y + sy).
Tensor bump(std::size_t C, std::size_t H, std::size_t W, int sx = 0, int sy = 0) {
    auto prof = [](double t, std::size_t n) {
        const double a = 2.0;
        const double b = static_cast<double>(n) - 3.0;
        if (t <= a || t >= b) {
            return 0.0;
        }
        const double s = std::sin(std::numbers::pi * (t - a) / (b - a));
        return s * s;
    };
    std::vector<double> v(C * H * W);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                const double fx = prof(static_cast<double>(x) + sx, W);
                const double fy = prof(static_cast<double>(y) + sy, H);
                v[(c * H + y) * W + x] = (1.0 + 0.1 * static_cast<double>(c)) * fx * fy;
            }
        }
    }
    return Tensor({C, H, W}, std::move(v));
}

double value_at(const Tensor &f, std::size_t c, std::size_t y, std::size_t x) {
    return f.value((c * f.dim(1) + y) * f.dim(2) + x);
}

} // namespace

TEST(Deformable, OffsetFieldShapeContract) {
    EXPECT_EQ(OffsetField::zeros(8, 3, 4, 4).values.dim(0), 144u);
    EXPECT_THROW(OffsetField(8, 3, Tensor::zeros({143, 4, 4})), ContractViolation);
    EXPECT_THROW(OffsetField(2, 2, Tensor::zeros({16, 4, 4})), ContractViolation);
    EXPECT_EQ(OffsetField::zeros(8, 5, 2, 2).values.dim(0), 400u);
}

TEST(Deformable, ZeroOffsetDeltaKernelIsIdentity) {
    const Tensor src = smooth_features(16, 6, 7);
    for (std::size_t n : {3u, 5u}) {
        const Tensor out = deformable_sample(src, OffsetField::zeros(8, n, 6, 7), KernelWeights::delta_center(8, n));
        for (std::size_t i = 0; i < src.numel(); ++i) {
            EXPECT_EQ(out.value(i), src.value(i));
        }
    }
}

TEST(Deformable, IntegerOffsetShiftsSource) {
    const Tensor src = smooth_features(8, 6, 7);
    const Tensor out = deformable_sample(src, OffsetField::constant(8, 3, 6, 7, 1.0, 0.0), KernelWeights::delta_center(8, 3));
    for (std::size_t c = 0; c < 8; ++c) {
        for (std::size_t y = 0; y < 6; ++y) {
            for (std::size_t x = 0; x + 1 < 7; ++x) {
                EXPECT_NEAR(value_at(out, c, y, x), value_at(src, c, y, x + 1), 1e-12);
            }
        }
    }
}

TEST(Deformable, OffsetShiftConsistency) {
    // Adding (dx, dy) to all offsets equals sampling the translated source.
    const std::size_t C = 8, H = 9, W = 10;
    const Tensor src = smooth_features(C, H, W);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    std::vector<double> base(8 * 18 * H * W);
    for (auto &x : base) {
        x = u(rng);
    }
    const OffsetField o0(8, 3, Tensor({144, H, W}, base));
    const OffsetField shift = OffsetField::constant(8, 3, H, W, 1.0, -1.0);
    const OffsetField o1(8, 3, o0.values + shift.values);
    std::uniform_real_distribution<double> wd(-1.0, 1.0);
    std::vector<double> w(8 * 9);
    for (auto &x : w) {
        x = wd(rng);
    }
    const KernelWeights kw(8, 3, Tensor({8, 9}, w));
    // Translated source: translated(y, x) = src(y - 1, x + 1).
    std::vector<double> tv(C * H * W, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 1; y < H; ++y) {
            for (std::size_t x = 0; x + 1 < W; ++x) {
                tv[(c * H + y) * W + x] = value_at(src, c, y - 1, x + 1);
            }
        }
    }
    const Tensor a = deformable_sample(src, o1, kw);
    const Tensor b = deformable_sample(Tensor({C, H, W}, tv), o0, kw);
    // Interior: far enough from borders that no tap reaches them.
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 3; y + 3 < H; ++y) {
            for (std::size_t x = 3; x + 3 < W; ++x) {
                EXPECT_NEAR(value_at(a, c, y, x), value_at(b, c, y, x), 1e-12);
            }
        }
    }
}

TEST(Deformable, GroupIndependence) {
    const Tensor src = smooth_features(16, 5, 5);
    const auto weights = KernelWeights::delta_center(8, 3);
    const Tensor base = deformable_sample(src, OffsetField::zeros(8, 3, 5, 5), weights);
    std::vector<double> v(144 * 25, 0.0);
    const std::size_t g = 3;
    for (std::size_t ch = g * 18; ch < (g + 1) * 18; ++ch) {
        std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(ch * 25), 25, 0.37);
    }
    const Tensor moved = deformable_sample(src, OffsetField(8, 3, Tensor({144, 5, 5}, v)), weights);
    for (std::size_t c = 0; c < 16; ++c) {
        bool changed = false;
        for (std::size_t i = 0; i < 25; ++i) {
            changed |= moved.value(c * 25 + i) != base.value(c * 25 + i);
        }
        EXPECT_EQ(changed, c / 2 == g) << "channel " << c;
    }
}

TEST(Deformable, ChannelGroupMismatch) {
    EXPECT_THROW(deformable_sample(smooth_features(12, 4, 4), OffsetField::zeros(8, 3, 4, 4), KernelWeights::delta_center(8, 3)),
                 ContractViolation);
    EXPECT_THROW(deformable_sample(smooth_features(8, 4, 4), OffsetField::zeros(8, 3, 4, 5), KernelWeights::delta_center(8, 3)),
                 ContractViolation);
    EXPECT_THROW(deformable_sample(smooth_features(8, 4, 4), OffsetField::zeros(8, 3, 4, 4), KernelWeights::delta_center(4, 3)),
                 ContractViolation);
}

TEST(Recon, Examples) {
    const Tensor a = Tensor::full({4, 4, 3}, 0.5);
    EXPECT_EQ(recon_loss(a, a).item(), 0.0);
    EXPECT_NEAR(recon_loss(a, Tensor::full({4, 4, 3}, 0.6)).item(), 0.01, 1e-15);
    EXPECT_THROW(recon_loss(a, Tensor::full({4, 4, 2}, 0.6)), ContractViolation);
}

TEST(Recon, MatchesBruteForce) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> a(16), b(16);
    double expect = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        a[i] = u(rng);
        b[i] = u(rng);
        expect += (a[i] - b[i]) * (a[i] - b[i]);
    }
    expect /= 16.0;
    EXPECT_NEAR(recon_loss(Tensor({4, 4}, a), Tensor({4, 4}, b)).item(), expect, 1e-12);
}

TEST(DfLoss, IdentityIsZero) {
    const Tensor f = smooth_features(8, 6, 6);
    EXPECT_EQ(df_loss(f, f, OffsetField::zeros(8, 3, 6, 6), KernelWeights::delta_center(8, 3)).item(), 0.0);
}

TEST(DfLoss, ExactAlignmentOffsetsWin) {
    const std::size_t C = 8, H = 12, W = 12;
    const Tensor src = bump(C, H, W);
    const Tensor ref = bump(C, H, W, 1, -2); // ref(y, x) = src(y - 2, x + 1)
    const auto kw = KernelWeights::delta_center(8, 3);
    const double aligned = df_loss(ref, src, OffsetField::constant(8, 3, H, W, 1.0, -2.0), kw).item();
    const double zero = df_loss(ref, src, OffsetField::zeros(8, 3, H, W), kw).item();
    EXPECT_LT(aligned, 1e-10);
    EXPECT_GT(zero, aligned);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> v(144 * H * W);
    for (auto &x : v) {
        x = u(rng);
    }
    EXPECT_GT(df_loss(ref, src, OffsetField(8, 3, Tensor({144, H, W}, v)), kw).item(), aligned);
}

TEST(Conv2d, PointwiseAndReplicatePadding) {
    const Tensor x({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    const auto stack = ConvStack::pointwise(2, 1, {2.0, -1.0}, {0.5, 0.0});
    const Tensor y = stack(x);
    EXPECT_EQ(y.shape(), (Shape{2, 2, 3}));
    EXPECT_EQ(y.value(0), 2.5);
    EXPECT_EQ(y.value(6 + 5), -6.0);
    // 3x3 box with replicate padding: top-left averages [1,1,2,1,1,2,4,4,5].
    const Tensor box = conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0 / 9.0), Tensor({1}, {0.0}));
    EXPECT_NEAR(box.value(0), 21.0 / 9.0, 1e-15);
}

TEST(Dfa, DecomposesIntoTerms) {
    const std::size_t H = 8, W = 8;
    const Tensor ref = chw_to_hwc(smooth_features(3, H, W));
    const Tensor src = chw_to_hwc(bump(3, H, W));
    const Tensor dref = smooth_features(8, H, W);
    const Tensor dsrc = bump(8, H, W);
    const auto offs = OffsetField::constant(8, 3, H, W, 0.3, -0.2);
    const auto kw = KernelWeights::delta_center(8, 3);
    std::vector<double> m(8 * 3, 0.0);
    for (std::size_t c = 0; c < 8; ++c) {
        m[c * 3 + c % 3] = 1.0;
    }
    const auto extractor = ConvStack::pointwise(8, 3, m);
    std::vector<double> r(3 * 8, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
        r[c * 8 + c] = 1.0;
    }
    const auto recon = ConvStack::pointwise(3, 8, r);
    const DfaTerms t = dfa_terms(ref, src, dref, dsrc, offs, kw, extractor, recon);
    const double re = recon_loss(ref, chw_to_hwc(recon(deformable_sample(extractor(hwc_to_chw(src)), offs, kw)))).item();
    const double df = df_loss(dref, dsrc, offs, kw).item();
    EXPECT_EQ(t.recon.item(), re);
    EXPECT_EQ(t.df.item(), df);
    EXPECT_EQ(t.total.item(), re + df);
    EXPECT_EQ(dfa_loss(ref, src, dref, dsrc, offs, kw, extractor, recon).item(), re + df);

    const Tensor z3 = Tensor::zeros({H, W, 3});
    const Tensor z8 = Tensor::zeros({8, H, W});
    EXPECT_EQ(dfa_loss(z3, z3, z8, z8, OffsetField::zeros(8, 3, H, W), KernelWeights(8, 3, Tensor::zeros({8, 9})),
                       extractor, recon)
                  .item(),
              0.0);
}

TEST(Deformable, GradientsMatchFiniteDifferences) {
    const std::size_t H = 8, W = 8;
    const Tensor src = smooth_features(8, H, W);
    const Tensor ref = smooth_features(8, H, W) * 0.9 + 0.05;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.1, 0.4);
    std::vector<double> ov(144 * H * W);
    for (auto &x : ov) {
        x = u(rng); // keeps every sample off the integer lattice
    }
    const Tensor offs({144, H, W}, ov);
    std::uniform_real_distribution<double> wu(-1, 1);
    std::vector<double> wv(72);
    for (auto &x : wv) {
        x = wu(rng);
    }
    const Tensor w({8, 9}, wv);
    auto loss = [&](const Tensor &s, const Tensor &o, const Tensor &ww) {
        return df_loss(ref, s, OffsetField(8, 3, o), KernelWeights(8, 3, ww));
    };
    EXPECT_LT(finite_difference_check([&](const Tensor &t) { return loss(t, offs, w); }, src), 1e-6);
    EXPECT_LT(finite_difference_check([&](const Tensor &t) { return loss(src, t, w); }, offs), 1e-6);
    EXPECT_LT(finite_difference_check([&](const Tensor &t) { return loss(src, offs, t); }, w), 1e-6);

    const Tensor cw = Tensor({2, 8, 3, 3}, std::vector<double>(144, 0.05)) + Tensor({2, 1, 3, 3}, std::vector<double>(18, 0.01));
    const Tensor cb({2}, {0.1, -0.2});
    EXPECT_LT(finite_difference_check([&](const Tensor &t) { return sum(square(conv2d(t, cw, cb))); }, src), 1e-6);
    EXPECT_LT(finite_difference_check([&](const Tensor &t) { return sum(square(conv2d(src, t, cb))); }, cw), 1e-6);
    EXPECT_LT(finite_difference_check([&](const Tensor &t) { return sum(square(conv2d(src, cw, t))); }, cb), 1e-6);
}

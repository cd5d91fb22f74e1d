// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#include "xvc/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace xvc;

namespace {

DepthMap depth_row(std::vector<double> v) {
    const std::size_t n = v.size();
    return DepthMap::from_values(Tensor({1, n}, std::move(v)));
}

DepthMap random_depth(std::size_t H, std::size_t W, std::mt19937_64 &rng, double lo = 1.0, double hi = 70.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(H * W);
    for (auto &x : v) {
        x = u(rng);
    }
    return DepthMap::from_values(Tensor({H, W}, std::move(v)));
}

void expect_reports_near(const MetricReport &a, const MetricReport &b, double tol) {
    EXPECT_NEAR(a.abs_rel, b.abs_rel, tol);
    EXPECT_NEAR(a.sq_rel, b.sq_rel, tol);
    EXPECT_NEAR(a.rmse, b.rmse, tol);
    EXPECT_NEAR(a.rmse_log, b.rmse_log, tol);
    EXPECT_NEAR(a.log10, b.log10, tol);
    EXPECT_NEAR(a.delta1, b.delta1, tol);
    EXPECT_NEAR(a.delta2, b.delta2, tol);
    EXPECT_NEAR(a.delta3, b.delta3, tol);
}

} // namespace

TEST(Metrics, PerfectPrediction) {
    std::mt19937_64 rng(1);
    const auto gt = random_depth(6, 8, rng);
    const auto r = evaluate_depth(gt, gt);
    EXPECT_EQ(r.abs_rel, 0.0);
    EXPECT_EQ(r.rmse, 0.0);
    EXPECT_EQ(r.delta1, 1.0);
    EXPECT_EQ(r.delta2, 1.0);
    EXPECT_EQ(r.delta3, 1.0);
    EXPECT_EQ(r.n_pixels, 48u);
}

TEST(Metrics, HandComputedFixture) {
    const auto r = evaluate_depth(depth_row({5, 8}), depth_row({4, 10}), {80.0, false});
    EXPECT_NEAR(r.abs_rel, 0.225, 1e-9);
    EXPECT_NEAR(r.rmse, std::sqrt(2.5), 1e-9);
    EXPECT_NEAR(r.rmse, 1.5811, 1e-4);
    EXPECT_NEAR(r.sq_rel, (1.0 / 4 + 4.0 / 10) / 2, 1e-12);
    const double l1 = std::log(5.0 / 4.0);
    const double l2 = std::log(8.0 / 10.0);
    EXPECT_NEAR(r.rmse_log, std::sqrt((l1 * l1 + l2 * l2) / 2), 1e-12);
    EXPECT_NEAR(r.log10, (std::abs(std::log10(1.25)) + std::abs(std::log10(0.8))) / 2, 1e-12);
    // Both ratios are exactly 1.25: not below the first threshold.
    EXPECT_EQ(r.delta1, 0.0);
    EXPECT_EQ(r.delta2, 1.0);
}

TEST(Metrics, MedianScalingInvariance) {
    std::mt19937_64 rng(2);
    const auto gt = random_depth(5, 7, rng);
    const auto pred = random_depth(5, 7, rng);
    const auto base = evaluate_depth(pred, gt);
    std::uniform_real_distribution<double> c(1e-3, 1e3);
    for (int i = 0; i < 20; ++i) {
        const auto scaled = DepthMap::from_values(pred.values * c(rng));
        expect_reports_near(evaluate_depth(scaled, gt), base, 1e-9);
    }
    const auto twice = evaluate_depth(DepthMap::from_values(gt.values * 2.0), gt);
    EXPECT_NEAR(twice.abs_rel, 0.0, 1e-15);
}

TEST(Metrics, CapExcludesFarGroundTruth) {
    const auto r = evaluate_depth(depth_row({5, 1, 3}), depth_row({5, 90, 0}), {80.0, false});
    EXPECT_EQ(r.n_pixels, 1u);
    EXPECT_EQ(r.abs_rel, 0.0);
}

TEST(Metrics, MaskedGroundTruthIsExcluded) {
    DepthMap gt(Tensor({1, 2}, {4.0, 10.0}), {1, 0});
    const auto r = evaluate_depth(depth_row({5, 1}), gt, {80.0, false});
    EXPECT_EQ(r.n_pixels, 1u);
    EXPECT_NEAR(r.abs_rel, 0.25, 1e-15);
}

TEST(Metrics, Errors) {
    EXPECT_THROW(evaluate_depth(depth_row({1, 2}), depth_row({0, 0})), DomainError);
    EXPECT_THROW(evaluate_depth(depth_row({1, 2}), depth_row({1, 2, 3})), ContractViolation);
}

TEST(Metrics, EvenMedianUsesMiddlePair) {
    EXPECT_EQ(detail::median({4, 1, 3, 2}), 2.5);
    EXPECT_EQ(detail::median({7, 1, 3}), 3.0);
}

TEST(Metrics, DeltaMonotone) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto r = evaluate_depth(random_depth(4, 4, rng), random_depth(4, 4, rng));
        EXPECT_LE(r.delta1, r.delta2);
        EXPECT_LE(r.delta2, r.delta3);
        EXPECT_TRUE(std::isfinite(r.rmse) && std::isfinite(r.rmse_log));
    }
}

TEST(Metrics, PositiveNoiseNeverLowersRmse) {
    int violations = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        const auto gt = random_depth(6, 6, rng);
        std::exponential_distribution<double> noise(2.0);
        std::vector<double> noisy(36);
        for (std::size_t i = 0; i < 36; ++i) {
            noisy[i] = gt.values.value(i) + noise(rng);
        }
        // Without scaling the perfect prediction is the reference point.
        const EvalOptions raw{80.0, false};
        violations += evaluate_depth(DepthMap::from_values(Tensor({6, 6}, noisy)), gt, raw).rmse <
                      evaluate_depth(gt, gt, raw).rmse;
    }
    EXPECT_EQ(violations, 0);
}

TEST(Split, MotionOnlyOmitsStatic) {
    std::mt19937_64 rng(5);
    const auto gt = random_depth(3, 3, rng);
    const auto out = evaluate_split({{gt, gt, Split::motion}});
    ASSERT_EQ(out.reports.size(), 1u);
    EXPECT_EQ(out.reports.at(Split::motion).abs_rel, 0.0);
    ASSERT_EQ(out.warnings.size(), 1u);
    EXPECT_NE(out.warnings[0].find("static"), std::string::npos);
}

TEST(Split, IdenticalPairsGiveIdenticalReports) {
    std::mt19937_64 rng(6);
    const auto gt = random_depth(3, 4, rng);
    const auto pred = random_depth(3, 4, rng);
    const auto out = evaluate_split({{pred, gt, Split::motion}, {pred, gt, Split::static_scene}});
    expect_reports_near(out.reports.at(Split::motion), out.reports.at(Split::static_scene), 0.0);
    EXPECT_TRUE(out.warnings.empty());
}

TEST(Split, AggregationIsUnweightedMean) {
    std::mt19937_64 rng(8);
    std::vector<EvalPair> pairs;
    std::vector<MetricReport> per;
    for (int i = 0; i < 5; ++i) {
        const std::size_t H = 2 + rng() % 4;
        pairs.push_back({random_depth(H, 3, rng), random_depth(H, 3, rng), Split::static_scene});
        per.push_back(evaluate_depth(pairs.back().pred, pairs.back().gt));
    }
    const auto out = evaluate_split(pairs);
    double abs_rel = 0, rmse = 0, d1 = 0;
    std::size_t n = 0;
    for (const auto &r : per) {
        abs_rel += r.abs_rel;
        rmse += r.rmse;
        d1 += r.delta1;
        n += r.n_pixels;
    }
    const auto &s = out.reports.at(Split::static_scene);
    EXPECT_NEAR(s.abs_rel, abs_rel / 5, 1e-15);
    EXPECT_NEAR(s.rmse, rmse / 5, 1e-14);
    EXPECT_NEAR(s.delta1, d1 / 5, 1e-15);
    EXPECT_EQ(s.n_pixels, n);
}

TEST(Metrics, CsvRowFollowsHeader) {
    MetricReport r;
    r.abs_rel = 0.5;
    r.delta3 = 1.0;
    EXPECT_STREQ(kMetricsCsvHeader, "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3");
    EXPECT_EQ(metrics_csv_row(r), "0.5,0,0,0,0,0,1");
}

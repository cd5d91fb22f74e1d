// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Standard depth evaluation metrics and the motion/static split protocol.

#include "xvc/camera.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xvc {

struct MetricReport {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double rmse_log = 0.0;
    double log10 = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    std::size_t n_pixels = 0;
};

struct EvalOptions {
    double cap = 80.0;
    bool median_scale = true;
    double min_depth = 1e-3; // predictions are clamped to [min_depth, cap]
};

namespace detail {

inline double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
    const double hi = v[n / 2];
    if (n % 2 == 1) {
        return hi;
    }
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Metrics over pixels whose ground truth is valid and within (0, cap].
/// abs_rel, sq_rel and log10 normalize by ground truth.
inline MetricReport evaluate_depth(const DepthMap &pred, const DepthMap &gt, const EvalOptions &opt = {}) {
    detail::require(pred.values.shape() == gt.values.shape(), "evaluate_depth: prediction " +
                                                                  shape_str(pred.values.shape()) +
                                                                  " and ground truth " + shape_str(gt.values.shape()) +
                                                                  " differ");
    detail::require(opt.cap > 0.0, "evaluate_depth: cap must be positive");
    std::vector<double> p;
    std::vector<double> g;
    for (std::size_t i = 0; i < gt.mask.size(); ++i) {
        const double d = gt.values.value(i);
        if (!gt.mask[i] || !(d > 0.0) || d > opt.cap) {
            continue;
        }
        g.push_back(d);
        p.push_back(pred.values.value(i));
    }
    if (g.empty()) {
        throw DomainError("evaluate_depth: no valid pixels");
    }
    if (opt.median_scale) {
        const double mp = detail::median(p);
        if (!(mp > 0.0)) {
            throw DomainError("evaluate_depth: median prediction is not positive");
        }
        const double ratio = detail::median(g) / mp;
        for (auto &v : p) {
            v *= ratio;
        }
    }
    MetricReport r;
    r.n_pixels = g.size();
    std::size_t a1 = 0, a2 = 0, a3 = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = std::clamp(p[i], opt.min_depth, opt.cap);
        const double t = g[i];
        const double diff = d - t;
        r.abs_rel += std::abs(diff) / t;
        r.sq_rel += diff * diff / t;
        r.rmse += diff * diff;
        const double dl = std::log(d) - std::log(t);
        r.rmse_log += dl * dl;
        r.log10 += std::abs(std::log10(d) - std::log10(t));
        const double ratio = std::max(d / t, t / d);
        a1 += ratio < 1.25;
        a2 += ratio < 1.25 * 1.25;
        a3 += ratio < 1.25 * 1.25 * 1.25;
    }
    const auto n = static_cast<double>(g.size());
    r.abs_rel /= n;
    r.sq_rel /= n;
    r.rmse = std::sqrt(r.rmse / n);
    r.rmse_log = std::sqrt(r.rmse_log / n);
    r.log10 /= n;
    r.delta1 = static_cast<double>(a1) / n;
    r.delta2 = static_cast<double>(a2) / n;
    r.delta3 = static_cast<double>(a3) / n;
    return r;
}

enum class Split { motion, static_scene };

inline const char *split_name(Split s) { return s == Split::motion ? "motion" : "static"; }

struct EvalPair {
    DepthMap pred;
    DepthMap gt;
    Split split = Split::static_scene;
};

struct SplitReport {
    std::map<Split, MetricReport> reports; // only non-empty splits
    std::vector<std::string> warnings;     // one per omitted split
};

/// Unweighted mean of per-image reports; unlike other fields, n_pixels is summed.
inline MetricReport mean_report(const std::vector<MetricReport> &reports) {
    detail::require(!reports.empty(), "mean_report: no reports");
    MetricReport m;
    for (const auto &r : reports) {
        m.abs_rel += r.abs_rel;
        m.sq_rel += r.sq_rel;
        m.rmse += r.rmse;
        m.rmse_log += r.rmse_log;
        m.log10 += r.log10;
        m.delta1 += r.delta1;
        m.delta2 += r.delta2;
        m.delta3 += r.delta3;
        m.n_pixels += r.n_pixels;
    }
    const auto n = static_cast<double>(reports.size());
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse /= n;
    m.rmse_log /= n;
    m.log10 /= n;
    m.delta1 /= n;
    m.delta2 /= n;
    m.delta3 /= n;
    return m;
}

inline SplitReport evaluate_split(const std::vector<EvalPair> &pairs, const EvalOptions &opt = {}) {
    std::map<Split, std::vector<MetricReport>> per_split;
    for (const auto &p : pairs) {
        per_split[p.split].push_back(evaluate_depth(p.pred, p.gt, opt));
    }
    SplitReport out;
    for (Split s : {Split::motion, Split::static_scene}) {
        auto it = per_split.find(s);
        if (it == per_split.end()) {
            out.warnings.push_back(std::string("split '") + split_name(s) + "' is empty; report omitted");
            continue;
        }
        out.reports[s] = mean_report(it->second);
    }
    return out;
}

inline constexpr const char *kMetricsCsvHeader = "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3";

/// One CSV row in kMetricsCsvHeader column order.
inline std::string metrics_csv_row(const MetricReport &r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.abs_rel, r.sq_rel, r.rmse,
                  r.rmse_log, r.delta1, r.delta2, r.delta3);
    return buf;
}

} // namespace xvc

// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

// Command-line harness: `xvc <experiment> --config f --out dir`.

#include "xvc/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

struct Options {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sweeps;
    bool gnuplot = false;
};

void print_check(const xvc::Check &c) {
    std::printf("%s  %s: %.17g %s %.17g\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.relation.c_str(),
                c.threshold);
}

bool run_one(const std::string &name, const Options &o) {
    xvc::Config cfg;
    std::filesystem::path base = ".";
    if (!o.config.empty()) {
        cfg = xvc::Config::load(o.config);
        base = std::filesystem::path(o.config).parent_path();
        if (base.empty()) {
            base = ".";
        }
    }
    auto ctx = xvc::make_context(name, std::move(cfg), o.out, base, o.seed, o.sweeps);
    ctx.gnuplot = o.gnuplot;
    const auto res = xvc::run_experiment(ctx);
    std::printf("== %s (config_hash=%s)\n", name.c_str(), ctx.config.hash().c_str());
    for (const auto &c : res.checks) {
        print_check(c);
    }
    for (const auto &w : res.warnings) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    }
    for (const auto &f : res.files) {
        std::printf("wrote %s\n", f.string().c_str());
    }
    return res.ok();
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Cross-view consistency experiments"};
    app.require_subcommand(1);
    Options o;
    std::vector<CLI::App *> subs;
    auto add_common = [&](CLI::App *s) {
        s->add_option("--config,-c", o.config, "config file (key = value, [sections])");
        s->add_option("--out,-o", o.out, "output directory")->capture_default_str();
        s->add_option("--seed", o.seed, "random seed, overrides the config");
        s->add_option("--sweep", o.sweeps, "k=v1,v2,... replaces a list key (repeatable)");
        s->add_flag("--gnuplot", o.gnuplot, "also write a gnuplot script");
    };
    const std::map<std::string, std::string> about = {
        {"gradcheck", "finite-difference check of every differentiable op"},
        {"photometric", "photometric loss under static, illumination, moving-object and occlusion variants"},
        {"robustness", "point-cloud, voxel-index and VDA losses under object displacement"},
        {"voxelsweep", "VDA across voxel grid resolutions"},
        {"totalloss", "weighted total loss breakdown on a rendered pair"},
        {"metrics", "depth metrics over [pair] sections"},
    };
    for (const auto &name : xvc::experiment_names()) {
        auto *s = app.add_subcommand(name, about.at(name));
        add_common(s);
        subs.push_back(s);
    }
    auto *all = app.add_subcommand("all", "every experiment except metrics, each into <out>/<name>");
    add_common(all);
    auto *ref = app.add_subcommand("reference", "print every config key with its default");
    app.footer("Run `xvc reference` for the config keys and their defaults.");

    CLI11_PARSE(app, argc, argv);
    try {
        if (ref->parsed()) {
            std::cout << xvc::config_reference();
            return 0;
        }
        bool ok = true;
        if (all->parsed()) {
            const std::string root = o.out;
            for (const auto &name : xvc::experiment_names()) {
                if (name == "metrics") {
                    continue;
                }
                Options each = o;
                each.out = (std::filesystem::path(root) / name).string();
                each.sweeps.clear();
                ok = run_one(name, each) && ok;
            }
        } else {
            for (auto *s : subs) {
                if (s->parsed()) {
                    ok = run_one(s->get_name(), o);
                }
            }
        }
        return ok ? 0 : 1;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

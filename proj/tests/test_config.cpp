// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#include "xvc/config.hpp"

#include <gtest/gtest.h>

using namespace xvc;

TEST(Config, ParsesSectionsAndComments) {
    const auto cfg = Config::parse(R"(
# leading comment
seed = 3
name = demo   # trailing comment

[grid]
voxels = 20, 20, 24
[pair]
pred = a.xvt
[pair]
pred = b.xvt
)");
    EXPECT_EQ(cfg.global().get_int("seed", 0), 3);
    EXPECT_EQ(cfg.global().require_string("name"), "demo");
    EXPECT_EQ(cfg.section("grid").require_doubles("voxels", 3), (std::vector<double>{20, 20, 24}));
    const auto pairs = cfg.sections("pair");
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_EQ(pairs[1]->require_string("pred"), "b.xvt");
    EXPECT_FALSE(cfg.section("missing").has("x"));
}

TEST(Config, TypedAccessorsReportBadValues) {
    const auto cfg = Config::parse("a = 1.5\nb = maybe\nc = 1 2\n");
    EXPECT_THROW(cfg.global().get_int("a", 0), ConfigError);
    EXPECT_THROW(cfg.global().get_bool("b", false), ConfigError);
    EXPECT_THROW(cfg.global().get_double("b", 0.0), ConfigError);
    EXPECT_THROW(cfg.global().require_doubles("c", 3), ConfigError);
    EXPECT_THROW(cfg.global().require_string("zzz"), ConfigError);
    EXPECT_EQ(cfg.global().get_doubles("c"), (std::vector<double>{1, 2}));
}

TEST(Config, MalformedLines) {
    EXPECT_THROW(Config::parse("[broken\n"), ConfigError);
    EXPECT_THROW(Config::parse("novalue\n"), ConfigError);
    EXPECT_THROW(Config::parse(" = 3\n"), ConfigError);
    EXPECT_THROW(Config::load("/nonexistent/xvc.cfg"), ConfigError);
}

TEST(Config, HashIgnoresFormattingButNotContent) {
    const auto a = Config::parse("x = 1\n[s]\ny = 2\n");
    const auto b = Config::parse("# comment\n  x=1  \n\n[ s ]\ny   = 2\n");
    const auto c = Config::parse("x = 1\n[s]\ny = 3\n");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
    EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Config, HashIsFnv1a) {
    // FNV-1a 64 of the empty string is the offset basis.
    EXPECT_EQ(Config().hash(), "cbf29ce484222325");
    EXPECT_EQ(Config().canonical(), "");
    EXPECT_EQ(Config::parse("[a]\n").canonical(), "[a]\n");
    EXPECT_EQ(Config::parse("[a]\n").hash(), "34b82c67736af1ba");
}

TEST(Config, LaterKeyOverridesEarlier) {
    auto cfg = Config::parse("k = 1\nk = 2\n");
    EXPECT_EQ(cfg.global().get_int("k", 0), 2);
    cfg.section_mut("new").set("z", "9");
    EXPECT_EQ(cfg.section("new").get_int("z", 0), 9);
}

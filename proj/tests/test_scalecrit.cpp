#include <doctest.h>

#include <cmath>

#include "resstream/scalecrit.hpp"
#include "resstream/toynets.hpp"
#include "testutil.hpp"

using namespace resstream;

TEST_SUITE_BEGIN("scalecrit");

TEST_CASE("scale transform of a constant image is the same constant") {
    Tensor gray = Tensor::full({3, 224, 224}, 0.37f);
    Tensor up = scale_up(gray);
    REQUIRE(up.shape() == std::vector<int>{3, 224, 224});
    for (float v : up.vec()) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
}

TEST_CASE("center content stays at the center") {
    Tensor img = Tensor::full({3, 224, 224}, 0.0f);
    for (int c = 0; c < 3; ++c) img.at(c, 112, 112) = 1.0f;
    Tensor up = scale_up(img);
    CHECK(up.at(0, 112, 112) > 0.5f);
    // mass stays local: nothing lights up away from the center
    CHECK(up.at(0, 100, 100) == 0.0f);
    CHECK(up.at(0, 130, 130) == 0.0f);
}

TEST_CASE("scale transform matches an independent reference interpolator") {
    SUBCASE("random images") {
        for (uint64_t seed : {1u, 2u, 3u}) {
            Tensor img = testutil::random_image(224, 224, seed);
            Tensor ours = scale_up(img);
            Tensor ref = testutil::ref_crop_resize(img, 112, 224);
            CHECK(testutil::max_abs_diff(ours, ref) <= 1e-6f);
        }
    }
    SUBCASE("two-pixel checkerboard") {
        Tensor img({3, 224, 224});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 224; ++y)
                for (int x = 0; x < 224; ++x)
                    img.at(c, y, x) = ((x / 2 + y / 2) % 2) ? 1.0f : 0.0f;
        CHECK(testutil::max_abs_diff(scale_up(img), testutil::ref_crop_resize(img, 112, 224)) <=
              1e-6f);
    }
}

TEST_CASE("scale transform rejects wrong resolutions") {
    CHECK_THROWS_AS(scale_up(Tensor({3, 112, 112})), std::invalid_argument);
    CHECK_THROWS_AS(scale_up(Tensor({3, 224, 225})), std::invalid_argument);
}

TEST_CASE("criteria arithmetic honors rectification and strict bounds") {
    BlockAddress b{2, 1};
    SUBCASE("negative raw pre-activation rectifies to zero on the left") {
        auto v = judge_criteria(b, 0, -1.0, 0.5, 1.0, 1.0);
        CHECK(v.eq1_lhs == 0.0);
        CHECK(v.passes_eq1);
        CHECK(v.passes_eq2);
        CHECK(v.passes);
    }
    SUBCASE("identity ratio passes the band") {
        auto v = judge_criteria(b, 0, -1.0, 0.5, 3.2, 3.2);
        CHECK(v.eq2_ratio == 1.0);
        CHECK(v.passes);
    }
    SUBCASE("boundary ratios fail strictly") {
        CHECK_FALSE(judge_criteria(b, 0, -1.0, 0.5, 1.5, 1.0).passes_eq2);
        CHECK_FALSE(judge_criteria(b, 0, -1.0, 0.5, 2.0, 3.0).passes_eq2);  // exactly 2/3
        CHECK(judge_criteria(b, 0, -1.0, 0.5, 1.49, 1.0).passes_eq2);
    }
    SUBCASE("equal sides fail the strict first condition") {
        CHECK_FALSE(judge_criteria(b, 0, 0.0, 0.0, 1.0, 1.0).passes_eq1);
        CHECK_FALSE(judge_criteria(b, 0, 0.7, 0.7, 1.0, 1.0).passes_eq1);
        CHECK(judge_criteria(b, 0, 0.7, 0.700001, 1.0, 1.0).passes_eq1);
    }
    SUBCASE("raw right-hand side may be negative and still count") {
        // only the left side is rectified
        auto v = judge_criteria(b, 0, -2.0, -0.5, 1.0, 1.0);
        CHECK(v.eq1_lhs == 0.0);
        CHECK_FALSE(v.passes_eq1);  // 0 < -0.5 is false
    }
    SUBCASE("zero denominator is degenerate and fails") {
        auto v = judge_criteria(b, 0, -1.0, 0.5, 1.0, 0.0);
        CHECK(v.degenerate);
        CHECK_FALSE(v.passes_eq2);
        CHECK_FALSE(v.passes);
        CHECK(std::isnan(v.eq2_ratio));
    }
}

TEST_CASE("criteria evaluation equals direct forward computation") {
    Network net = toynets::build(toynets::planted_scale_pair_spec());
    FZConfig cfg;
    cfg.steps = 64;
    cfg.jitter_primary = 0;
    cfg.seed = 7;
    BlockAddress addr{1, 0};
    FeatureVisual fz_in =
        optimize_fz(net, {addr, TapKind::In, 0, FZMode::CenterNeuron}, cfg);
    FeatureVisual fz_pre =
        optimize_fz(net, {addr, TapKind::Pre, 0, FZMode::CenterNeuron}, cfg);
    CriteriaVerdict v = evaluate_criteria(net, addr, 0, fz_in, fz_pre);

    // direct recomputation of the four clean passes
    double pre_in = net.tap_center(net.normalize_input(fz_in.image), addr, TapKind::Pre, 0);
    double pre_scaled =
        net.tap_center(net.normalize_input(scale_up(fz_in.image)), addr, TapKind::Pre, 0);
    double post_in = net.tap_center(net.normalize_input(fz_in.image), addr, TapKind::Post, 0);
    double post_pre = net.tap_center(net.normalize_input(fz_pre.image), addr, TapKind::Post, 0);
    CHECK(v.pre_in_raw == pre_in);
    CHECK(v.eq1_lhs == std::max(0.0, pre_in));
    CHECK(v.eq1_rhs == pre_scaled);
    CHECK(v.post_in == post_in);
    CHECK(v.post_pre == post_pre);
    CHECK(v.eq2_ratio == post_in / post_pre);
    CHECK(v.fz_in_fp == fz_in.config_fingerprint);

    // mismatched inputs are rejected
    CHECK_THROWS_AS(evaluate_criteria(net, addr, 1, fz_in, fz_pre), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_criteria(net, addr, 0, fz_pre, fz_in), std::invalid_argument);
}

TEST_CASE("screening covers every channel and records failures") {
    // Channel 1's In filter is planted with overflowing weights so its FZ
    // aborts; the verdict must record the error and keep the channel failing
    // while channel 0 still screens normally.
    nlohmann::json spec = toynets::planted_scale_pair_spec();
    auto& w = spec["stages"][0]["blocks"][0]["downsample"][0]["weight"];
    size_t per_channel = w.size() / 2;
    for (size_t i = per_channel; i < w.size(); ++i) w[i] = 1e38;
    Network net = toynets::build(spec);

    FZConfig cfg;
    cfg.steps = 8;
    cfg.jitter_primary = 0;
    auto verdicts = screen_blocks(net, {{1, 0}}, cfg, {}, 0, "");
    REQUIRE(verdicts.size() == 2);  // coverage: one verdict per channel
    CHECK(verdicts[1].error != "");
    CHECK_FALSE(verdicts[1].passes);
    CHECK(verdicts[0].error == "");

    CHECK_THROWS_AS(screen_blocks(net, {}, cfg, {}, 0, ""), std::invalid_argument);
}

TEST_CASE("verdict tables round-trip through CSV") {
    testutil::TempDir tmp("verdicts");
    std::vector<CriteriaVerdict> verdicts;
    verdicts.push_back(judge_criteria({2, 1}, 15, -0.25, 1.75, 3.0, 2.5));
    verdicts.push_back(judge_criteria({2, 1}, 16, 0.5, 0.25, 1.0, 0.0));  // degenerate
    verdicts[0].fz_in_fp = "aaaa";
    verdicts[0].fz_pre_fp = "bbbb";
    verdicts[1].error = "synthetic failure, with comma";
    std::string path = (tmp.path / "v.csv").string();
    write_verdicts_csv(path, verdicts);
    auto loaded = read_verdicts_csv(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].addr == verdicts[0].addr);
    CHECK(loaded[0].channel == 15);
    CHECK(loaded[0].pre_in_raw == verdicts[0].pre_in_raw);
    CHECK(loaded[0].eq2_ratio == verdicts[0].eq2_ratio);
    CHECK(loaded[0].passes == verdicts[0].passes);
    CHECK(loaded[0].fz_in_fp == "aaaa");
    CHECK(std::isnan(loaded[1].eq2_ratio));
    CHECK(loaded[1].degenerate);
    CHECK(loaded[1].error != "");
    CHECK(passing_channels(loaded, {2, 1}) == std::vector<int>{15});
}

TEST_SUITE_END();

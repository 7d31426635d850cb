#include <doctest.h>

#include <numeric>

#include "resstream/diffops.hpp"
#include "resstream/featviz.hpp"
#include "resstream/toynets.hpp"
#include "testutil.hpp"

using namespace resstream;

TEST_SUITE_BEGIN("featviz");

TEST_CASE("jitter schedule matches the per-block table") {
    // omitted for all of 1.1 and 2.0
    for (TapKind tap : {TapKind::In, TapKind::Pre, TapKind::Post}) {
        CHECK(jitter_for_block({1, 1}, tap) == 0);
        CHECK(jitter_for_block({2, 0}, tap) == 0);
    }
    // 4 for 2.1 Pre and the entire 3.0 block
    CHECK(jitter_for_block({2, 1}, TapKind::Pre) == 4);
    for (TapKind tap : {TapKind::In, TapKind::Pre, TapKind::Post})
        CHECK(jitter_for_block({3, 0}, tap) == 4);
    // default 16 for the remainder
    CHECK(jitter_for_block({2, 1}, TapKind::In) == 16);
    CHECK(jitter_for_block({2, 1}, TapKind::Post) == 16);
    CHECK(jitter_for_block({3, 1}, TapKind::In) == 16);
    CHECK(jitter_for_block({1, 0}, TapKind::Post) == 16);
    CHECK(jitter_for_block({4, 0}, TapKind::Pre) == 16);
    CHECK(jitter_for_block({4, 1}, TapKind::In) == 16);
    // secondary is always half the primary
    CHECK(FZConfig::jitter_secondary_of(16) == 8);
    CHECK(FZConfig::jitter_secondary_of(4) == 2);
    CHECK(FZConfig::jitter_secondary_of(0) == 0);
}

namespace {

double dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        acc += static_cast<double>(a.data()[i]) * b.data()[i];
    return acc;
}

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
    Tensor t(std::move(shape));
    auto rng = make_rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (auto& v : t.vec()) v = n(rng);
    return t;
}

/// <f(x), g> must equal <x, adjoint(g)> for exact adjoint pairs.
void check_adjoint(const Tensor& x, const Tensor& fx, const Tensor& g, const Tensor& adj,
                   double tol) {
    double lhs = dot(fx, g);
    double rhs = dot(x, adj);
    CHECK(std::abs(lhs - rhs) <= tol * (1.0 + std::abs(lhs)));
}

}  // namespace

TEST_CASE("transform adjoints satisfy the dot-product identity") {
    Tensor x = random_tensor({2, 13, 17}, 1);

    SUBCASE("pad") {
        Tensor fx = pad_constant(x, 3, 0.0f);  // constant contributes an offset, not linearity;
                                               // test with 0 padding value
        Tensor g = random_tensor(fx.shape(), 2);
        check_adjoint(x, fx, g, pad_constant_adjoint(g, 3, 13, 17), 1e-5);
    }
    SUBCASE("roll") {
        Tensor fx = roll2d(x, 5, 9);
        Tensor g = random_tensor(fx.shape(), 3);
        check_adjoint(x, fx, g, roll2d(g, -5, -9), 1e-5);
    }
    SUBCASE("resize up") {
        Tensor fx = resize_align_corners(x, 19, 23);
        Tensor g = random_tensor(fx.shape(), 4);
        check_adjoint(x, fx, g, resize_align_corners_adjoint(g, 13, 17), 1e-5);
    }
    SUBCASE("resize down") {
        Tensor fx = resize_align_corners(x, 9, 11);
        Tensor g = random_tensor(fx.shape(), 5);
        check_adjoint(x, fx, g, resize_align_corners_adjoint(g, 13, 17), 1e-5);
    }
    SUBCASE("embed / extract") {
        Tensor fx = embed_center(x, 20, 21);
        Tensor g = random_tensor(fx.shape(), 6);
        check_adjoint(x, fx, g, extract_center(g, 13, 17), 1e-5);
    }
    SUBCASE("rotate") {
        for (double deg : {7.0, -10.0, 3.5}) {
            Tensor fx = rotate_bilinear(x, deg);
            Tensor g = random_tensor(fx.shape(), 7);
            check_adjoint(x, fx, g, rotate_bilinear_adjoint(g, deg), 1e-4);
        }
    }
}

TEST_CASE("packed inverse FFT and its adjoint are exact adjoints") {
    for (auto [h, w] : {std::pair{12, 16}, std::pair{9, 13}, std::pair{16, 9}}) {
        int wh = w / 2 + 1;
        auto rng = make_rng(static_cast<uint64_t>(h * 100 + w));
        std::normal_distribution<float> n(0.0f, 1.0f);
        std::vector<float> packed(static_cast<size_t>(h) * wh * 2);
        for (auto& v : packed) v = n(rng);
        std::vector<float> g(static_cast<size_t>(h) * w);
        for (auto& v : g) v = n(rng);

        std::vector<float> img = packed_irfft2(packed, h, w);
        std::vector<float> adj = packed_irfft2_adjoint(g, h, w);
        double lhs = 0.0, rhs = 0.0;
        for (size_t i = 0; i < img.size(); ++i)
            lhs += static_cast<double>(img[i]) * g[i];
        for (size_t i = 0; i < packed.size(); ++i)
            rhs += static_cast<double>(packed[i]) * adj[i];
        CAPTURE(h);
        CAPTURE(w);
        CHECK(std::abs(lhs - rhs) <= 1e-4 * (1.0 + std::abs(lhs)));
    }
}

TEST_CASE("packed inverse FFT produces real images with the expected DC") {
    int h = 8, w = 8, wh = 5;
    std::vector<float> packed(static_cast<size_t>(h) * wh * 2, 0.0f);
    packed[0] = static_cast<float>(std::sqrt(64.0));  // DC re: image of ones
    std::vector<float> img = packed_irfft2(packed, h, w);
    for (float v : img) CHECK(v == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("optimization is deterministic given the seed") {
    Network net = toynets::build(toynets::planted_scale_pair_spec());
    FZConfig cfg;
    cfg.steps = 12;
    cfg.jitter_primary = 4;
    cfg.seed = 42;
    FZObjective obj{{1, 0}, TapKind::In, 0, FZMode::CenterNeuron};
    FeatureVisual a = optimize_fz(net, obj, cfg);
    FeatureVisual b = optimize_fz(net, obj, cfg);
    CHECK(a.achieved_activation == b.achieved_activation);
    CHECK(a.image.vec() == b.image.vec());
    CHECK(a.config_fingerprint == b.config_fingerprint);

    cfg.seed = 43;
    FeatureVisual c = optimize_fz(net, obj, cfg);
    CHECK(c.image.vec() != a.image.vec());
}

TEST_CASE("blob objective produces a center-bright visualization") {
    Network net = toynets::build(toynets::planted_scale_pair_spec());
    FZConfig cfg;
    cfg.steps = 96;
    cfg.jitter_primary = 0;
    cfg.seed = 1;
    FZObjective obj{{1, 0}, TapKind::In, 0, FZMode::CenterNeuron};
    FeatureVisual fz = optimize_fz(net, obj, cfg);

    // structural property: center disk brighter than the far surround
    double center = 0.0, surround = 0.0;
    int nc = 0, ns = 0;
    for (int y = 0; y < 224; ++y)
        for (int x = 0; x < 224; ++x) {
            double r2 = (y - 112.0) * (y - 112.0) + (x - 112.0) * (x - 112.0);
            double mean = (fz.image.at(0, y, x) + fz.image.at(1, y, x) + fz.image.at(2, y, x)) / 3;
            if (r2 <= 6 * 6) {
                center += mean;
                ++nc;
            } else if (r2 >= 40 * 40 && r2 <= 80 * 80) {
                surround += mean;
                ++ns;
            }
        }
    CHECK(center / nc > surround / ns);

    // gradient ascent must not underperform the constant mid-gray baseline
    float baseline =
        net.tap_center(net.normalize_input(Tensor::full({3, 224, 224}, 0.5f)), {1, 0},
                       TapKind::In, 0);
    CHECK(fz.achieved_activation >= baseline);
    CHECK_FALSE(fz.degenerate);
}

TEST_CASE("achieved activation equals a clean re-evaluation after persistence") {
    testutil::TempDir store("fzstore");
    Network net = toynets::build(toynets::planted_scale_pair_spec());
    FZConfig cfg;
    cfg.steps = 16;
    cfg.jitter_primary = 2;
    cfg.seed = 9;
    FZObjective obj{{1, 0}, TapKind::Pre, 0, FZMode::CenterNeuron};
    FeatureVisual fz = obtain_fz(net, obj, cfg, store.str());

    auto reloaded = load_feature_visual(obj, cfg.seed, fz.config_fingerprint, store.str(), 224);
    REQUIRE(reloaded.has_value());
    float fresh = net.tap_center(net.normalize_input(reloaded->image), {1, 0}, TapKind::Pre, 0);
    CHECK(std::abs(fresh - fz.achieved_activation) <= 1e-4f);

    // second obtain is a cache hit returning identical data
    FeatureVisual again = obtain_fz(net, obj, cfg, store.str());
    CHECK(again.image.vec() == fz.image.vec());
    CHECK(again.achieved_activation == fz.achieved_activation);
}

TEST_CASE("whole-channel mode maximizes and reports the spatial mean") {
    Network net = toynets::build(toynets::planted_scale_pair_spec());
    FZConfig cfg;
    cfg.steps = 24;
    cfg.jitter_primary = 0;
    cfg.seed = 5;
    FZObjective obj{{1, 0}, TapKind::Post, 1, FZMode::WholeChannel};
    FeatureVisual fz = optimize_fz(net, obj, cfg);
    Tensor map = net.tap_map(net.normalize_input(fz.image), {1, 0}, TapKind::Post);
    double mean = 0.0;
    const float* p = map.plane(1);
    for (int64_t i = 0, n = static_cast<int64_t>(map.dim(1)) * map.dim(2); i < n; ++i)
        mean += p[i];
    mean /= static_cast<double>(map.dim(1)) * map.dim(2);
    CHECK(fz.achieved_activation == doctest::Approx(mean).epsilon(1e-5));
}

TEST_CASE("dead objectives are flagged degenerate") {
    Network net = toynets::build(toynets::constant_post_spec());
    FZConfig cfg;
    cfg.steps = 4;
    cfg.jitter_primary = 0;
    cfg.seed = 2;
    // Channel 1 Post is identically zero: its ReLU gate never opens.
    FZObjective obj{{1, 0}, TapKind::Post, 1, FZMode::CenterNeuron};
    FeatureVisual fz = optimize_fz(net, obj, cfg);
    CHECK(fz.degenerate);
}

TEST_CASE("matched-filter oracle: shared-pattern taps visualize the same stimulus") {
    // Channel 0 of the shared-pattern block detects the identical blob at In
    // and Pre, so the two FZs must agree under the pattern's matched filter:
    // their filter response maps around the center correlate strongly.
    Network net = toynets::build(toynets::shared_pattern_spec());
    FZConfig cfg;
    cfg.steps = 96;
    cfg.jitter_primary = 0;
    cfg.seed = 3;

    auto tmpl = toynets::blob_template(15, 3.0);
    auto response_map = [&](const FeatureVisual& fz) {
        std::vector<double> r;
        for (int oy = -16; oy <= 16; ++oy)
            for (int ox = -16; ox <= 16; ++ox) {
                double acc = 0;
                for (int y = 0; y < 15; ++y)
                    for (int x = 0; x < 15; ++x) {
                        double m = (fz.image.at(0, 105 + oy + y, 105 + ox + x) +
                                    fz.image.at(1, 105 + oy + y, 105 + ox + x) +
                                    fz.image.at(2, 105 + oy + y, 105 + ox + x)) /
                                   3.0;
                        acc += m * tmpl[static_cast<size_t>(y) * 15 + x];
                    }
                r.push_back(acc);
            }
        double mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
        for (double& v : r) v -= mean;
        return r;
    };
    auto ncc = [](const std::vector<double>& a, const std::vector<double>& b) {
        double ab = 0, aa = 0, bb = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        return ab / std::sqrt(aa * bb + 1e-30);
    };

    FeatureVisual fz_in =
        optimize_fz(net, {{1, 0}, TapKind::In, 0, FZMode::CenterNeuron}, cfg);
    FeatureVisual fz_pre =
        optimize_fz(net, {{1, 0}, TapKind::Pre, 0, FZMode::CenterNeuron}, cfg);
    CHECK(ncc(response_map(fz_in), response_map(fz_pre)) > 0.5);
}

TEST_CASE("triples carry tap-appropriate jitter in their fingerprints") {
    Network net = load_network("resnet18-random");
    FZConfig cfg;  // jitter -1: per-block schedule
    FZObjective in_obj{{2, 1}, TapKind::In, 0, FZMode::CenterNeuron};
    FZObjective pre_obj{{2, 1}, TapKind::Pre, 0, FZMode::CenterNeuron};
    // jitter 16 vs 4 must yield different fingerprints
    CHECK(fz_fingerprint(net, in_obj, cfg) != fz_fingerprint(net, pre_obj, cfg));
    CHECK(effective_jitter(in_obj, cfg) == 16);
    CHECK(effective_jitter(pre_obj, cfg) == 4);
    cfg.jitter_primary = 4;
    CHECK(effective_jitter(in_obj, cfg) == 4);
}

TEST_CASE("fz_triple produces the three center-neuron visuals") {
    testutil::TempDir store("triple");
    Network net = toynets::build(toynets::planted_scale_pair_spec());
    FZConfig cfg;
    cfg.steps = 8;
    cfg.jitter_primary = 0;
    cfg.seed = 11;
    auto triple = fz_triple(net, {1, 0}, 0, cfg, store.str());
    CHECK(triple[0].objective.tap == TapKind::In);
    CHECK(triple[1].objective.tap == TapKind::Pre);
    CHECK(triple[2].objective.tap == TapKind::Post);
    for (const auto& fz : triple) {
        CHECK(fz.objective.mode == FZMode::CenterNeuron);
        CHECK(fz.image.dim(1) == 224);
    }
    // artifacts persisted: 3 x (raw, png, json)
    size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(store.path)) {
        (void)e;
        ++files;
    }
    CHECK(files == 9);
}

TEST_SUITE_END();

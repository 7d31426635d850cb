// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line; criteria
// that need external assets (the pretrained checkpoint, the labeled
// validation set) print [SKIP] and exit 77 when those are absent:
//   RESSTREAM_WEIGHTS_DIR   directory holding resnet18-imagenet-v1.safetensors
//   RESSTREAM_IMAGENET_DIR  class-per-directory validation images
//   RESSTREAM_SMOKE=1       subset variants of the long criteria
//
// Run a single criterion with --criterion N (default: all runnable).

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <map>
#include <set>

#include "resstream/ablate.hpp"
#include "resstream/config.hpp"
#include "resstream/registry.hpp"
#include "resstream/scalecrit.hpp"
#include "resstream/toynets.hpp"
#include "resstream/util.hpp"
#include "testutil.hpp"

using namespace resstream;

namespace {

int g_failures = 0;

void verdict(int criterion, const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << "criterion " << criterion << ": " << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!ok) ++g_failures;
}

int skip(int criterion, const std::string& why) {
    std::cout << "[SKIP] criterion " << criterion << ": " << why << "\n";
    return 77;
}

const char* env(const char* name) {
    const char* v = std::getenv(name);
    return v && *v ? v : nullptr;
}

// ---- criterion 1: transform exactness ---------------------------------------

int criterion1() {
    float worst_s = 0.0f;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Tensor img = testutil::random_image(224, 224, 9000 + seed);
        worst_s = std::max(worst_s, testutil::max_abs_diff(
                                        scale_up(img), testutil::ref_crop_resize(img, 112, 224)));
    }
    verdict(1, "S(X) matches the reference interpolator on 100 random images",
            worst_s <= 1e-6f, "max abs err " + fmt_float(worst_s));

    float worst_e = 0.0f;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Tensor img = testutil::random_image(256, 299 + static_cast<int>(seed % 60), 500 + seed);
        int p = static_cast<int>((seed % 6) * 10);
        int crop = p == 0 ? 224 : eval_scale_crop_size(p);
        worst_e = std::max(worst_e, testutil::max_abs_diff(
                                        apply_eval_scale(img, p),
                                        testutil::ref_crop_resize(img, crop, 224)));
    }
    verdict(1, "evaluation scale transforms match the reference on 100 random images",
            worst_e <= 1e-6f, "max abs err " + fmt_float(worst_e));

    bool sizes = eval_scale_crop_size(10) == 231 && eval_scale_crop_size(30) == 180 &&
                 eval_scale_crop_size(50) == 128;
    for (int p = 0; p < 100; ++p)
        sizes = sizes && eval_scale_crop_size(p) == 256 - (256 * p) / 100;
    verdict(1, "crop sizes follow the formula incl. the published 10% -> 231 case", sizes);
    return 0;
}

// ---- criterion 2: residual identity ------------------------------------------

int criterion2() {
    Network net;
    std::string which;
    if (const char* dir = env("RESSTREAM_WEIGHTS_DIR")) {
        net = load_network("resnet18-imagenet-v1", dir);
        which = "pretrained checkpoint";
    } else {
        net = load_network("resnet18-random");
        which = "seeded random weights";
    }
    float worst = 0.0f;
    std::string worst_site;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Tensor x = net.normalize_input(testutil::random_image(224, 224, 40 + seed));
        for (BlockAddress addr : net.blocks()) {
            auto maps = net.observe(
                x, {{addr, TapKind::In}, {addr, TapKind::Pre}, {addr, TapKind::Post}});
            for (int64_t i = 0; i < maps[2].numel(); ++i) {
                float expect = std::max(0.0f, maps[0].data()[i] + maps[1].data()[i]);
                float err = std::abs(maps[2].data()[i] - expect);
                if (err > worst) {
                    worst = err;
                    worst_site = addr.str();
                }
            }
        }
    }
    verdict(2, "Post = ReLU(In + Pre) on all blocks, 20 random images (" + which + ")",
            worst <= 1e-5f, "max abs err " + fmt_float(worst) +
                                (worst_site.empty() ? "" : " at " + worst_site));
    return 0;
}

// ---- criterion 3: criteria oracle ---------------------------------------------

int criterion3() {
    Network net = toynets::build(toynets::planted_scale_pair_spec());
    FZConfig cfg;
    cfg.steps = 256;
    cfg.jitter_primary = 0;  // the shallow-block schedule value
    cfg.seed = 3;
    auto verdicts = screen_blocks(net, {{1, 0}}, cfg, {}, 0, "");
    auto passers = passing_channels(verdicts, {1, 0});
    verdict(3, "screening passes exactly the planted scale-equivariant channel",
            passers == std::vector<int>{0},
            "passers: " + [&] {
                std::string s;
                for (int p : passers) s += std::to_string(p) + " ";
                return s.empty() ? std::string("none") : s;
            }());

    bool fields_ok = true;
    for (const CriteriaVerdict& v : verdicts) {
        // verify against direct forward computation on the same FZ images
        FZObjective in_obj{{1, 0}, TapKind::In, v.channel, FZMode::CenterNeuron};
        FZObjective pre_obj{{1, 0}, TapKind::Pre, v.channel, FZMode::CenterNeuron};
        FeatureVisual fz_in = optimize_fz(net, in_obj, cfg);
        FeatureVisual fz_pre = optimize_fz(net, pre_obj, cfg);
        double pre_in = net.tap_center(net.normalize_input(fz_in.image), {1, 0}, TapKind::Pre,
                                       v.channel);
        double pre_scaled = net.tap_center(net.normalize_input(scale_up(fz_in.image)), {1, 0},
                                           TapKind::Pre, v.channel);
        double post_in = net.tap_center(net.normalize_input(fz_in.image), {1, 0}, TapKind::Post,
                                        v.channel);
        double post_pre = net.tap_center(net.normalize_input(fz_pre.image), {1, 0}, TapKind::Post,
                                         v.channel);
        fields_ok = fields_ok && v.pre_in_raw == pre_in && v.eq1_rhs == pre_scaled &&
                    v.post_in == post_in && v.post_pre == post_pre &&
                    v.eq1_lhs == std::max(0.0, pre_in);
    }
    verdict(3, "verdict fields equal direct forward computation", fields_ok);

    bool ch1_fails_eq1 = !verdicts[1].passes_eq1 && !verdicts[1].passes;
    verdict(3, "the scale-unrelated channel fails", ch1_fails_eq1,
            "eq1 " + fmt_double(verdicts[1].eq1_lhs) + " !< " + fmt_double(verdicts[1].eq1_rhs));
    return 0;
}

// ---- criterion 4: ablation semantics ------------------------------------------

int criterion4() {
    testutil::TempDir data("acc_c4");
    testutil::make_brightness_dataset(data.path);
    Network net = toynets::build(toynets::center_classifier_spec());
    DatasetSlice slice = load_dataset(data.str(), 1.0);
    ActivationCache cache = sweep_center_activations(net, slice, {1, 0}, TapKind::Post);
    AblationSpec spec = make_ablation_spec({1, 0}, {0}, cache);

    Tensor input = eval_input(net.model(), load_image_rgb01(slice.paths[2]), 0);
    Tensor once = net.tap_map(input, {1, 0}, TapKind::Post, &spec);
    Tensor twice = once;
    for (const auto& [ch, mean] : spec.channel_means) {
        float* p = twice.plane(ch);
        std::fill(p, p + static_cast<int64_t>(twice.dim(1)) * twice.dim(2), mean);
    }
    verdict(4, "mean ablation is idempotent", testutil::max_abs_diff(once, twice) == 0.0f);

    Tensor plain = net.tap_map(input, {1, 0}, TapKind::Post);
    float local_err = 0.0f;
    for (int y = 0; y < plain.dim(1); ++y)
        for (int x = 0; x < plain.dim(2); ++x)
            local_err = std::max(local_err, std::abs(once.at(1, y, x) - plain.at(1, y, x)));
    verdict(4, "non-listed channels are bit identical", local_err == 0.0f);

    double unablated = evaluate_accuracy(net, slice, 0);
    double ablated = evaluate_accuracy(net, slice, 0, &spec);
    double predicted = 24.0 / 40.0;  // base rate of the class favored by the mean
    verdict(4, "analytic toy classifier hits the predicted post-ablation accuracy",
            unablated == 1.0 && ablated == predicted,
            "unablated " + fmt_double(unablated) + ", ablated " + fmt_double(ablated) +
                ", predicted " + fmt_double(predicted));
    return 0;
}

// ---- criterion 5: ratio arithmetic ---------------------------------------------

int criterion5() {
    bool ok = eq3_ratio(0.5, {0.5, 0.25}) == 1.5 && eq3_ratio(0.5, {0.5}) == 1.0 &&
              eq3_ratio(0.9, {0.3}) == 0.9 / 0.3 &&
              eq3_ratio(0.6, {0.6, 0.3, 0.2}) == (1.0 + 2.0 + 3.0) / 3.0;
    verdict(5, "ratio aggregation reproduces hand-computed values exactly", ok);
    return 0;
}

// ---- criterion 6: paper-scale screening -----------------------------------------

int criterion6() {
    const char* dir = env("RESSTREAM_WEIGHTS_DIR");
    if (!dir)
        return skip(6, "needs the pretrained checkpoint; set RESSTREAM_WEIGHTS_DIR to a "
                       "directory holding resnet18-imagenet-v1.safetensors "
                       "(tools/export_weights.py)");
    Network net = load_network("resnet18-imagenet-v1", dir);
    FZConfig cfg;  // full defaults: 512 steps, schedule jitter
    bool smoke = env("RESSTREAM_SMOKE") != nullptr;
    std::vector<BlockAddress> blocks{{1, 1}, {2, 0}, {2, 1}, {3, 1}};
    std::map<std::string, int> expected{{"1.1", 6}, {"2.0", 2}, {"2.1", 23}, {"3.1", 46}};
    if (smoke) blocks = {{2, 1}};

    std::map<std::string, double> rate;
    for (BlockAddress addr : blocks) {
        auto verdicts = screen_blocks(net, {addr}, cfg, {}, 0, "");
        int passers = static_cast<int>(passing_channels(verdicts, addr).size());
        int channels = net.channel_count(addr);
        rate[addr.str()] = static_cast<double>(passers) / channels;
        int want = expected[addr.str()];
        bool in_band = std::abs(passers - want) <= 0.5 * want;
        verdict(6, "block " + addr.str() + " passer count within +-50% of " +
                       std::to_string(want),
                in_band, std::to_string(passers) + " passers");
    }
    if (!smoke) {
        verdict(6, "blocks 2.1 and 3.1 each exceed 10% pass rate",
                rate["2.1"] > 0.10 && rate["3.1"] > 0.10);
        verdict(6, "intermediate blocks dominate 1.1 and 2.0",
                rate["2.1"] > std::max(rate["1.1"], rate["2.0"]) &&
                    rate["3.1"] > std::max(rate["1.1"], rate["2.0"]));
    }
    return 0;
}

// ---- criterion 7: paper-scale ablation property ----------------------------------

int criterion7() {
    const char* wdir = env("RESSTREAM_WEIGHTS_DIR");
    const char* ddir = env("RESSTREAM_IMAGENET_DIR");
    if (!wdir || !ddir)
        return skip(7, "needs the pretrained checkpoint and the labeled validation set; set "
                       "RESSTREAM_WEIGHTS_DIR and RESSTREAM_IMAGENET_DIR");
    Network net = load_network("resnet18-imagenet-v1", wdir);
    DatasetSlice slice = load_dataset(ddir, 0.1, 7);
    FZConfig fz;  // full schedule
    for (BlockAddress addr : {BlockAddress{2, 1}, BlockAddress{3, 1}}) {
        auto verdicts = screen_blocks(net, {addr}, fz, {}, 0, "");
        std::vector<int> passers = passing_channels(verdicts, addr);
        if (passers.empty()) {
            verdict(7, "block " + addr.str() + " has passers to ablate", false);
            continue;
        }
        ActivationCache cache = sweep_center_activations(net, slice, addr, TapKind::Post);
        ExperimentConfig cfg;
        cfg.trials = 10;
        cfg.percentages = {10, 20, 30, 40, 50};
        cfg.relaxation = addr.str() == "3.1" ? 0.01 : 0.0;
        AblationReport rep = run_ablation_experiment(net, slice, addr, passers, cache, cfg);
        double mean_scaled = 0.0;
        for (int p : cfg.percentages) mean_scaled += rep.ratios.at(p);
        mean_scaled /= static_cast<double>(cfg.percentages.size());
        verdict(7, "block " + addr.str() +
                       ": mean scale-transformed ratio below the no-scale ratio",
                mean_scaled < rep.no_scale_ratio,
                fmt_double(mean_scaled) + " vs " + fmt_double(rep.no_scale_ratio));
    }
    return 0;
}

// ---- criterion 8: checkpoint sanity ----------------------------------------------

int criterion8() {
    const char* wdir = env("RESSTREAM_WEIGHTS_DIR");
    const char* ddir = env("RESSTREAM_IMAGENET_DIR");
    if (!wdir || !ddir)
        return skip(8, "needs the pretrained checkpoint and the labeled validation set; set "
                       "RESSTREAM_WEIGHTS_DIR and RESSTREAM_IMAGENET_DIR");
    Network net = load_network("resnet18-imagenet-v1", wdir);
    bool smoke = env("RESSTREAM_SMOKE") != nullptr;
    double fraction = smoke ? 0.1 : 1.0;
    double tolerance = smoke ? 0.015 : 0.003;
    DatasetSlice slice = load_dataset(ddir, fraction, 7);
    double acc = evaluate_accuracy(net, slice, 0);
    const double published = 0.69758;  // checkpoint's published top-1
    verdict(8, std::string("unablated top-1 within ") + (smoke ? "1.5" : "0.3") +
                   " points of the published figure" + (smoke ? " (subset smoke)" : ""),
            std::abs(acc - published) <= tolerance, "top-1 " + fmt_double(acc));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);

    int (*runners[])() = {criterion1, criterion2, criterion3, criterion4,
                          criterion5, criterion6, criterion7, criterion8};
    if (only >= 1 && only <= 8) {
        int rc = runners[only - 1]();
        if (rc == 77) return 77;
        return g_failures == 0 ? 0 : 1;
    }
    bool any_skipped = false;
    for (int c = 1; c <= 8; ++c)
        if (runners[c - 1]() == 77) any_skipped = true;
    if (g_failures > 0) return 1;
    std::cout << (any_skipped ? "acceptance: runnable criteria passed (some skipped)\n"
                              : "acceptance: all criteria passed\n");
    return 0;
}

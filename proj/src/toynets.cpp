#include "resstream/toynets.hpp"

#include <cmath>

#include "resstream/util.hpp"

namespace resstream::toynets {

using nlohmann::json;

namespace {

void zero_mean_normalize(std::vector<float>& t, double gain) {
    double mean = 0.0;
    for (float v : t) mean += v;
    mean /= static_cast<double>(t.size());
    double possum = 0.0;
    for (float& v : t) {
        v -= static_cast<float>(mean);
        if (v > 0) possum += v;
    }
    if (possum <= 0) throw std::logic_error("degenerate template");
    for (float& v : t) v = static_cast<float>(v / possum * gain);
}

/// Replicates a single-plane template across 3 input channels, scaled by 1/3
/// so the response to an RGB-equal stimulus matches the plane inner product.
json replicate_rgb(const std::vector<float>& plane) {
    json arr = json::array();
    for (int c = 0; c < 3; ++c)
        for (float v : plane) arr.push_back(v / 3.0f);
    return arr;
}

json single_color(const std::vector<float>& plane, int color) {
    json arr = json::array();
    for (int c = 0; c < 3; ++c)
        for (float v : plane) arr.push_back(c == color ? v : 0.0f);
    return arr;
}

json zeros(size_t n) {
    json arr = json::array();
    for (size_t i = 0; i < n; ++i) arr.push_back(0.0f);
    return arr;
}

json concat(std::initializer_list<json> parts) {
    json arr = json::array();
    for (const json& p : parts)
        for (const auto& v : p) arr.push_back(v);
    return arr;
}

json identity_norm() { return json{{"mean", {0.0, 0.0, 0.0}}, {"std", {1.0, 1.0, 1.0}}}; }

}  // namespace

std::vector<float> blob_template(int k, double sigma, double gain) {
    std::vector<float> t(static_cast<size_t>(k) * k);
    double c = (k - 1) / 2.0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            double r2 = (x - c) * (x - c) + (y - c) * (y - c);
            t[static_cast<size_t>(y) * k + x] =
                static_cast<float>(std::exp(-r2 / (2.0 * sigma * sigma)));
        }
    zero_mean_normalize(t, gain);
    return t;
}

std::vector<float> grating_template(int k, double period, int embed_k, double gain) {
    std::vector<float> t(static_cast<size_t>(k) * k);
    double c = (k - 1) / 2.0;
    for (int y = 0; y < k; ++y) {
        double win = 0.5 * (1.0 + std::cos(2.0 * M_PI * (y - c) / k));
        for (int x = 0; x < k; ++x)
            t[static_cast<size_t>(y) * k + x] =
                static_cast<float>(std::cos(2.0 * M_PI * (x - c) / period) * win);
    }
    zero_mean_normalize(t, gain);
    if (embed_k > k) {
        std::vector<float> big(static_cast<size_t>(embed_k) * embed_k, 0.0f);
        int off = (embed_k - k) / 2;
        for (int y = 0; y < k; ++y)
            for (int x = 0; x < k; ++x)
                big[static_cast<size_t>(y + off) * embed_k + (x + off)] =
                    t[static_cast<size_t>(y) * k + x];
        return big;
    }
    return t;
}

json planted_scale_pair_spec() {
    // In path: k=15 stride 4 (56x56 maps). Main path: k=29 stride 4.
    auto in_blob = blob_template(15, 3.0);
    auto in_grating = grating_template(15, 8.0);
    auto pre_blob = blob_template(29, 6.0);
    auto pre_grating = grating_template(15, 8.0, 29);

    json block;
    block["downsample"] = json::array(
        {json{{"op", "conv"},
              {"out", 2},
              {"kernel", 15},
              {"stride", 4},
              {"pad", 7},
              {"weight", concat({replicate_rgb(in_blob), replicate_rgb(in_grating)})}}});
    block["main"] = json::array(
        {json{{"op", "conv"},
              {"out", 2},
              {"kernel", 29},
              {"stride", 4},
              {"pad", 14},
              {"weight", concat({replicate_rgb(pre_blob), replicate_rgb(pre_grating)})}},
         json{{"op", "bn"}, {"identity", true}}});

    json spec;
    spec["name"] = "toy-planted-pair";
    spec["input_resolution"] = 224;
    spec["input_channels"] = 3;
    spec["normalization"] = identity_norm();
    spec["stages"] = json::array({json{{"blocks", json::array({block})}}});
    return spec;
}

namespace {

json classifier_block(const std::vector<json>& in_kernels) {
    // Shortcut holds the detectors; the main path is dead (zero 1x1 conv).
    int out = static_cast<int>(in_kernels.size());
    json wcat = json::array();
    for (const json& k : in_kernels)
        for (const auto& v : k) wcat.push_back(v);
    json block;
    block["downsample"] = json::array({json{{"op", "conv"},
                                            {"out", out},
                                            {"kernel", 15},
                                            {"stride", 4},
                                            {"pad", 7},
                                            {"weight", wcat}}});
    block["main"] = json::array({json{{"op", "conv"},
                                      {"out", out},
                                      {"kernel", 1},
                                      {"stride", 4},
                                      {"pad", 0},
                                      {"weight", zeros(static_cast<size_t>(out) * 3)}},
                                 json{{"op", "bn"}, {"identity", true}}});
    return block;
}

std::vector<float> positive_center_kernel(int k, double sigma) {
    std::vector<float> t(static_cast<size_t>(k) * k);
    double c = (k - 1) / 2.0, sum = 0.0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            double r2 = (x - c) * (x - c) + (y - c) * (y - c);
            double v = std::exp(-r2 / (2.0 * sigma * sigma));
            t[static_cast<size_t>(y) * k + x] = static_cast<float>(v);
            sum += v;
        }
    for (float& v : t) v = static_cast<float>(v / sum);
    return t;
}

}  // namespace

json center_classifier_spec(double threshold) {
    auto probe = positive_center_kernel(15, 4.0);
    json block = classifier_block({replicate_rgb(probe), zeros(probe.size() * 3)});
    json spec;
    spec["name"] = "toy-center-classifier";
    spec["input_resolution"] = 224;
    spec["input_channels"] = 3;
    spec["normalization"] = identity_norm();
    spec["stages"] = json::array({json{{"blocks", json::array({block})}}});
    // logit0 = post0 - threshold, logit1 = threshold - post0
    spec["head"] = json{{"pool", "center"},
                        {"classes", 2},
                        {"weight", json::array({1.0, 0.0, -1.0, 0.0})},
                        {"bias", json::array({-threshold, threshold})}};
    return spec;
}

json two_signal_classifier_spec(double threshold) {
    auto probe = positive_center_kernel(15, 4.0);
    json block = classifier_block(
        {single_color(probe, 0), single_color(probe, 1), zeros(probe.size() * 3)});
    json spec;
    spec["name"] = "toy-two-signal-classifier";
    spec["input_resolution"] = 224;
    spec["input_channels"] = 3;
    spec["normalization"] = identity_norm();
    spec["stages"] = json::array({json{{"blocks", json::array({block})}}});
    // logit0 = post0 + post1 - threshold, logit1 = -(post0 + post1) + threshold
    spec["head"] = json{{"pool", "center"},
                        {"classes", 2},
                        {"weight", json::array({1.0, 1.0, 0.0, -1.0, -1.0, 0.0})},
                        {"bias", json::array({-threshold, threshold})}};
    return spec;
}

json constant_post_spec() {
    json block;
    block["downsample"] = json::array({json{{"op", "conv"},
                                            {"out", 2},
                                            {"kernel", 1},
                                            {"stride", 4},
                                            {"pad", 0},
                                            {"weight", zeros(2 * 3)}}});
    block["main"] = json::array(
        {json{{"op", "conv"},
              {"out", 2},
              {"kernel", 1},
              {"stride", 4},
              {"pad", 0},
              {"weight", zeros(2 * 3)}},
         json{{"op", "bn"},
              {"gamma", json::array({1.0, 1.0})},
              {"beta", json::array({2.0, -1.0})},
              {"mean", json::array({0.0, 0.0})},
              {"var", json::array({1.0, 1.0})}}});
    json spec;
    spec["name"] = "toy-constant-post";
    spec["input_resolution"] = 224;
    spec["input_channels"] = 3;
    spec["normalization"] = identity_norm();
    spec["stages"] = json::array({json{{"blocks", json::array({block})}}});
    return spec;
}

json shared_pattern_spec() {
    auto blob = blob_template(15, 3.0);
    json block;
    block["downsample"] = json::array({json{{"op", "conv"},
                                            {"out", 1},
                                            {"kernel", 15},
                                            {"stride", 4},
                                            {"pad", 7},
                                            {"weight", replicate_rgb(blob)}}});
    block["main"] = json::array({json{{"op", "conv"},
                                      {"out", 1},
                                      {"kernel", 15},
                                      {"stride", 4},
                                      {"pad", 7},
                                      {"weight", replicate_rgb(blob)}},
                                 json{{"op", "bn"}, {"identity", true}}});
    json spec;
    spec["name"] = "toy-shared-pattern";
    spec["input_resolution"] = 224;
    spec["input_channels"] = 3;
    spec["normalization"] = identity_norm();
    spec["stages"] = json::array({json{{"blocks", json::array({block})}}});
    return spec;
}

json positive_stage1_spec(uint64_t seed) {
    auto rng = make_rng(mix_seed(seed, fnv1a64(std::string("positive-stage1"))));
    std::uniform_real_distribution<float> unif(0.05f, 1.0f);
    auto positive_weights = [&](int out, int in, int k) {
        json arr = json::array();
        float scale = 1.0f / (static_cast<float>(in) * k * k);
        for (int i = 0; i < out * in * k * k; ++i) arr.push_back(unif(rng) * scale);
        return arr;
    };

    const int ch = 8;
    json stem = json::array(
        {json{{"op", "conv"},
              {"out", ch},
              {"kernel", 7},
              {"stride", 2},
              {"pad", 3},
              {"weight", positive_weights(ch, 3, 7)}},
         json{{"op", "bn"}, {"identity", true}}, json{{"op", "relu"}},
         json{{"op", "maxpool"}, {"kernel", 3}, {"stride", 2}, {"pad", 1}}});

    auto block = [&]() {
        json b;
        b["main"] = json::array({json{{"op", "conv"},
                                      {"out", ch},
                                      {"kernel", 3},
                                      {"stride", 1},
                                      {"pad", 1},
                                      {"weight", positive_weights(ch, ch, 3)}},
                                 json{{"op", "bn"}, {"identity", true}}, json{{"op", "relu"}},
                                 json{{"op", "conv"},
                                      {"out", ch},
                                      {"kernel", 3},
                                      {"stride", 1},
                                      {"pad", 1},
                                      {"weight", positive_weights(ch, ch, 3)}},
                                 json{{"op", "bn"}, {"identity", true}}});
        return b;
    };

    json spec;
    spec["name"] = "toy-positive-stage1";
    spec["input_resolution"] = 224;
    spec["input_channels"] = 3;
    spec["normalization"] = identity_norm();
    spec["stem"] = stem;
    spec["stages"] = json::array({json{{"blocks", json::array({block(), block()})}}});
    return spec;
}

}  // namespace resstream::toynets

#include "resstream/registry.hpp"

#include <filesystem>
#include <fstream>

#include "resstream/safetensors.hpp"
#include "resstream/util.hpp"

namespace resstream {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const Tensor& want(const std::map<std::string, Tensor>& state, const std::string& key) {
    auto it = state.find(key);
    if (it == state.end())
        throw std::runtime_error("checkpoint is missing tensor '" + key + "'");
    return it->second;
}

std::vector<float> want_vec(const std::map<std::string, Tensor>& state, const std::string& key) {
    return want(state, key).vec();
}

Conv2d conv_from(const std::map<std::string, Tensor>& state, const std::string& key, int stride,
                 int pad) {
    const Tensor& w = want(state, key);
    if (w.ndim() != 4 || w.dim(2) != w.dim(3))
        throw std::runtime_error("tensor '" + key + "' is not a square conv weight");
    Conv2d c;
    c.out_ch = w.dim(0);
    c.in_ch = w.dim(1);
    c.kernel = w.dim(2);
    c.stride = stride;
    c.pad = pad;
    c.weight = w;
    c.validate();
    return c;
}

BatchNorm bn_from(const std::map<std::string, Tensor>& state, const std::string& prefix) {
    return BatchNorm::from_moments(want_vec(state, prefix + ".weight"),
                                   want_vec(state, prefix + ".bias"),
                                   want_vec(state, prefix + ".running_mean"),
                                   want_vec(state, prefix + ".running_var"));
}

ResBlock basic_block(const std::map<std::string, Tensor>& state, const std::string& prefix,
                     int stride) {
    ResBlock blk;
    blk.main.push_back(Op::make_conv(conv_from(state, prefix + ".conv1.weight", stride, 1)));
    blk.main.push_back(Op::make_norm(bn_from(state, prefix + ".bn1")));
    blk.main.push_back(Op::make_relu());
    blk.main.push_back(Op::make_conv(conv_from(state, prefix + ".conv2.weight", 1, 1)));
    blk.main.push_back(Op::make_norm(bn_from(state, prefix + ".bn2")));
    if (state.count(prefix + ".downsample.0.weight")) {
        blk.shortcut.push_back(
            Op::make_conv(conv_from(state, prefix + ".downsample.0.weight", stride, 0)));
        blk.shortcut.push_back(Op::make_norm(bn_from(state, prefix + ".downsample.1")));
    }
    blk.out_channels = blk.main.back().norm.channels();
    return blk;
}

}  // namespace

NetModel resnet18_from_state(const std::map<std::string, Tensor>& state, std::string weights_id) {
    NetModel m;
    m.weights_id = std::move(weights_id);
    m.input_resolution = 224;
    m.input_channels = 3;

    m.stem.push_back(Op::make_conv(conv_from(state, "conv1.weight", 2, 3)));
    m.stem.push_back(Op::make_norm(bn_from(state, "bn1")));
    m.stem.push_back(Op::make_relu());
    m.stem.push_back(Op::make_pool(MaxPool{3, 2, 1}));

    for (int stage = 1; stage <= 4; ++stage) {
        std::vector<ResBlock> blocks;
        for (int b = 0; b < 2; ++b) {
            std::string prefix = "layer" + std::to_string(stage) + "." + std::to_string(b);
            int stride = (stage > 1 && b == 0) ? 2 : 1;
            blocks.push_back(basic_block(state, prefix, stride));
        }
        m.stages.push_back(std::move(blocks));
    }

    const Tensor& fw = want(state, "fc.weight");
    m.head.pool = HeadSpec::Pool::Avg;
    m.head.has_fc = true;
    m.head.fc.out_features = fw.dim(0);
    m.head.fc.in_features = fw.dim(1);
    m.head.fc.weight = fw;
    m.head.fc.bias = want_vec(state, "fc.bias");
    m.validate();
    return m;
}

NetModel resnet18_random(uint64_t seed, std::string weights_id) {
    return resnet18_from_state(resnet18_random_state(seed), std::move(weights_id));
}

std::map<std::string, Tensor> resnet18_random_state(uint64_t seed) {
    std::map<std::string, Tensor> state;
    auto rng = make_rng(mix_seed(seed, fnv1a64(std::string("resnet18-random"))));
    std::normal_distribution<float> normal(0.0f, 1.0f);
    std::uniform_real_distribution<float> unif(0.5f, 1.5f);

    auto add_conv = [&](const std::string& key, int out, int in, int k) {
        Tensor w({out, in, k, k});
        // He-style scale keeps activations in a sane range through the depth.
        float std_dev = std::sqrt(2.0f / (static_cast<float>(in) * k * k));
        for (auto& v : w.vec()) v = normal(rng) * std_dev;
        state.emplace(key, std::move(w));
    };
    auto add_bn = [&](const std::string& prefix, int ch) {
        Tensor gamma({ch}), beta({ch}), mean({ch}), var({ch});
        for (int i = 0; i < ch; ++i) {
            gamma.vec()[static_cast<size_t>(i)] = unif(rng);
            beta.vec()[static_cast<size_t>(i)] = 0.2f * normal(rng);
            mean.vec()[static_cast<size_t>(i)] = 0.2f * normal(rng);
            var.vec()[static_cast<size_t>(i)] = 0.5f + std::abs(normal(rng));
        }
        state.emplace(prefix + ".weight", std::move(gamma));
        state.emplace(prefix + ".bias", std::move(beta));
        state.emplace(prefix + ".running_mean", std::move(mean));
        state.emplace(prefix + ".running_var", std::move(var));
    };

    add_conv("conv1.weight", 64, 3, 7);
    add_bn("bn1", 64);
    int widths[4] = {64, 128, 256, 512};
    int in_ch = 64;
    for (int stage = 1; stage <= 4; ++stage) {
        int out_ch = widths[stage - 1];
        for (int b = 0; b < 2; ++b) {
            std::string prefix = "layer" + std::to_string(stage) + "." + std::to_string(b);
            int block_in = (b == 0) ? in_ch : out_ch;
            add_conv(prefix + ".conv1.weight", out_ch, block_in, 3);
            add_bn(prefix + ".bn1", out_ch);
            add_conv(prefix + ".conv2.weight", out_ch, out_ch, 3);
            add_bn(prefix + ".bn2", out_ch);
            if (b == 0 && stage > 1) {
                add_conv(prefix + ".downsample.0.weight", out_ch, block_in, 1);
                add_bn(prefix + ".downsample.1", out_ch);
            }
        }
        in_ch = out_ch;
    }
    Tensor fw({1000, 512});
    for (auto& v : fw.vec()) v = normal(rng) * 0.04f;
    state.emplace("fc.weight", std::move(fw));
    Tensor fb({1000});
    for (auto& v : fb.vec()) v = 0.01f * normal(rng);
    state.emplace("fc.bias", std::move(fb));
    return state;
}

// ---- synthetic specs --------------------------------------------------------

namespace {

std::vector<float> float_array(const json& j, size_t expected, const std::string& what) {
    if (!j.is_array() || j.size() != expected)
        throw std::runtime_error("synthetic spec: '" + what + "' must be an array of " +
                                 std::to_string(expected) + " numbers");
    std::vector<float> out;
    out.reserve(expected);
    for (const auto& v : j) out.push_back(v.get<float>());
    return out;
}

Tensor tensor_field(const json& op, const std::string& key, std::vector<int> shape,
                    uint64_t init_salt) {
    Tensor t(shape);
    if (op.contains(key)) {
        const json& arr = op.at(key);
        if (!arr.is_array() || static_cast<int64_t>(arr.size()) != t.numel())
            throw std::runtime_error("synthetic spec: '" + key + "' must hold " +
                                     std::to_string(t.numel()) + " values");
        for (int64_t i = 0; i < t.numel(); ++i)
            t.data()[i] = arr[static_cast<size_t>(i)].get<float>();
        return t;
    }
    if (op.contains("init")) {
        const json& init = op.at("init");
        std::string kind = init.value("kind", "normal");
        uint64_t seed = init.value("seed", 0ULL);
        float std_dev = init.value("std", 0.1f);
        auto rng = make_rng(mix_seed(seed, init_salt));
        std::normal_distribution<float> normal(0.0f, std_dev);
        for (auto& v : t.vec()) {
            float x = normal(rng);
            v = (kind == "positive") ? std::abs(x) : x;
        }
        return t;
    }
    return t;  // zeros
}

Seq seq_from_json(const json& ops, int& channels, const std::string& where) {
    Seq seq;
    if (!ops.is_array())
        throw std::runtime_error("synthetic spec: '" + where + "' must be an array of ops");
    int idx = 0;
    for (const json& op : ops) {
        std::string kind = op.at("op").get<std::string>();
        uint64_t salt = fnv1a64(where + "#" + std::to_string(idx++));
        if (kind == "conv") {
            Conv2d c;
            c.in_ch = op.value("in", channels);
            c.out_ch = op.at("out").get<int>();
            c.kernel = op.at("kernel").get<int>();
            c.stride = op.value("stride", 1);
            c.pad = op.value("pad", c.kernel / 2);
            if (c.in_ch != channels)
                throw std::runtime_error("synthetic spec: conv in " + where +
                                         " expects " + std::to_string(c.in_ch) +
                                         " channels but gets " + std::to_string(channels));
            c.weight = tensor_field(op, "weight", {c.out_ch, c.in_ch, c.kernel, c.kernel}, salt);
            if (op.contains("bias"))
                c.bias = float_array(op.at("bias"), static_cast<size_t>(c.out_ch), "bias");
            c.validate();
            channels = c.out_ch;
            seq.push_back(Op::make_conv(std::move(c)));
        } else if (kind == "bn") {
            size_t n = static_cast<size_t>(channels);
            BatchNorm bn =
                op.value("identity", false)
                    ? BatchNorm::identity(channels)
                    : BatchNorm::from_moments(float_array(op.at("gamma"), n, "gamma"),
                                              float_array(op.at("beta"), n, "beta"),
                                              float_array(op.at("mean"), n, "mean"),
                                              float_array(op.at("var"), n, "var"));
            seq.push_back(Op::make_norm(std::move(bn)));
        } else if (kind == "relu") {
            seq.push_back(Op::make_relu());
        } else if (kind == "maxpool") {
            MaxPool p;
            p.kernel = op.value("kernel", 3);
            p.stride = op.value("stride", 2);
            p.pad = op.value("pad", 1);
            seq.push_back(Op::make_pool(p));
        } else {
            throw std::runtime_error("synthetic spec: unknown op '" + kind + "' in " + where);
        }
    }
    return seq;
}

}  // namespace

NetModel synthetic_from_json(const json& spec, const std::string& name_hint) {
    NetModel m;
    m.weights_id = spec.value("name", name_hint.empty() ? std::string("synthetic") : name_hint);
    m.input_resolution = spec.value("input_resolution", 224);
    m.input_channels = spec.value("input_channels", 3);
    if (spec.contains("normalization")) {
        auto mean = float_array(spec["normalization"].at("mean"), 3, "normalization.mean");
        auto sd = float_array(spec["normalization"].at("std"), 3, "normalization.std");
        std::copy(mean.begin(), mean.end(), m.norm_mean.begin());
        std::copy(sd.begin(), sd.end(), m.norm_std.begin());
    } else {
        m.norm_mean = {0.0f, 0.0f, 0.0f};
        m.norm_std = {1.0f, 1.0f, 1.0f};
    }

    int channels = m.input_channels;
    if (spec.contains("stem")) m.stem = seq_from_json(spec["stem"], channels, "stem");

    if (!spec.contains("stages") || !spec["stages"].is_array() || spec["stages"].empty())
        throw std::invalid_argument("synthetic spec '" + m.weights_id +
                                    "' defines no residual stages; In/Pre/Post taps require "
                                    "residual summation");
    int s_idx = 0;
    for (const json& stage : spec["stages"]) {
        ++s_idx;
        std::vector<ResBlock> blocks;
        int b_idx = 0;
        for (const json& bj : stage.at("blocks")) {
            std::string where = std::to_string(s_idx) + "." + std::to_string(b_idx++);
            ResBlock blk;
            int main_ch = channels;
            blk.main = seq_from_json(bj.at("main"), main_ch, where + ".main");
            int id_ch = channels;
            if (bj.contains("downsample") && !bj["downsample"].is_null())
                blk.shortcut = seq_from_json(bj["downsample"], id_ch, where + ".downsample");
            if (id_ch != main_ch)
                throw std::runtime_error("synthetic spec: block " + where +
                                         " cannot sum " + std::to_string(id_ch) + " identity with " +
                                         std::to_string(main_ch) + " main channels");
            blk.out_channels = main_ch;
            channels = main_ch;
            blocks.push_back(std::move(blk));
        }
        m.stages.push_back(std::move(blocks));
    }

    if (spec.contains("head") && !spec["head"].is_null()) {
        const json& h = spec["head"];
        std::string pool = h.value("pool", "avg");
        m.head.pool = pool == "center" ? HeadSpec::Pool::Center : HeadSpec::Pool::Avg;
        int classes = h.at("classes").get<int>();
        m.head.has_fc = true;
        m.head.fc.in_features = channels;
        m.head.fc.out_features = classes;
        m.head.fc.weight = tensor_field(h, "weight", {classes, channels}, fnv1a64("head"));
        if (h.contains("bias"))
            m.head.fc.bias = float_array(h.at("bias"), static_cast<size_t>(classes), "head.bias");
    } else {
        m.head.pool = HeadSpec::Pool::None;
        m.head.has_fc = false;
    }
    m.validate();
    return m;
}

NetModel synthetic_from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open synthetic spec: " + path);
    json spec = json::parse(f, nullptr, false);
    if (spec.is_discarded())
        throw std::runtime_error("synthetic spec is not valid JSON: " + path);
    return synthetic_from_json(spec, fs::path(path).stem().string());
}

Network load_network(const std::string& weights_id, const std::string& weights_root) {
    if (weights_id.rfind("synthetic:", 0) == 0)
        return network_from_model(synthetic_from_file(weights_id.substr(10)));

    if (weights_id.rfind("resnet18-random", 0) == 0) {
        uint64_t seed = 0;
        if (weights_id.size() > 16 && weights_id[15] == '-')
            seed = std::stoull(weights_id.substr(16));
        return network_from_model(resnet18_random(seed, weights_id));
    }

    fs::path root = weights_root.empty() ? fs::path(".") : fs::path(weights_root);
    fs::path st = root / (weights_id + ".safetensors");
    fs::path js = root / (weights_id + ".json");
    if (fs::exists(st)) {
        if (weights_id.rfind("resnet18", 0) != 0)
            throw std::runtime_error(
                "weights_id '" + weights_id +
                "' does not name a registered architecture (expected resnet18-* for "
                "safetensors checkpoints)");
        return network_from_model(resnet18_from_state(load_safetensors(st.string()), weights_id));
    }
    if (fs::exists(js)) return network_from_model(synthetic_from_file(js.string()));

    throw std::runtime_error("unknown weights_id '" + weights_id + "': no " + st.string() +
                             ", no " + js.string() +
                             ", and it is neither 'resnet18-random[-N]' nor 'synthetic:<path>'");
}

}  // namespace resstream

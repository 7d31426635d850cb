#include "resstream/network.hpp"

#include <algorithm>
#include <stdexcept>

namespace resstream {

namespace {

struct OpTrace {
    int in_h = 0, in_w = 0, in_c = 0;
    Tensor relu_out;               // Relu ops: forward output (mask)
    std::vector<int32_t> pool_idx; // Pool ops: argmax indices
    int out_h = 0, out_w = 0;
};

struct SeqTrace {
    std::vector<OpTrace> ops;
};

Tensor run_seq(const Seq& seq, Tensor x, SeqTrace* trace) {
    if (trace) trace->ops.resize(seq.size());
    for (size_t i = 0; i < seq.size(); ++i) {
        const Op& op = seq[i];
        OpTrace* t = trace ? &trace->ops[i] : nullptr;
        if (t) {
            t->in_c = x.dim(0);
            t->in_h = x.dim(1);
            t->in_w = x.dim(2);
        }
        switch (op.kind) {
            case Op::Kind::Conv:
                x = op.conv.forward(x);
                break;
            case Op::Kind::Norm:
                x = op.norm.forward(x);
                break;
            case Op::Kind::Relu:
                x = relu(x);
                if (t) t->relu_out = x;
                break;
            case Op::Kind::Pool:
                x = op.pool.forward(x, t ? &t->pool_idx : nullptr);
                break;
        }
        if (t) {
            t->out_h = x.dim(1);
            t->out_w = x.dim(2);
        }
    }
    return x;
}

Tensor back_seq(const Seq& seq, Tensor g, const SeqTrace& trace) {
    for (size_t i = seq.size(); i-- > 0;) {
        const Op& op = seq[i];
        const OpTrace& t = trace.ops[i];
        switch (op.kind) {
            case Op::Kind::Conv:
                g = op.conv.backward_input(g, t.in_h, t.in_w);
                break;
            case Op::Kind::Norm:
                g = op.norm.backward_input(g);
                break;
            case Op::Kind::Relu:
                g = relu_backward(g, t.relu_out);
                break;
            case Op::Kind::Pool:
                g = op.pool.backward_input(g, t.pool_idx, t.in_c, t.in_h, t.in_w);
                break;
        }
    }
    return g;
}

void apply_ablation(Tensor& post, const AblationSpec& spec) {
    int h = post.dim(1), w = post.dim(2);
    for (const auto& [ch, mean] : spec.channel_means) {
        if (ch < 0 || ch >= post.dim(0))
            throw std::invalid_argument("ablation channel " + std::to_string(ch) +
                                        " out of range for map " + post.shape_str());
        float* p = post.plane(ch);
        std::fill(p, p + static_cast<int64_t>(h) * w, mean);
    }
}

int center_h(const Tensor& map) { return map.dim(1) / 2; }
int center_w(const Tensor& map) { return map.dim(2) / 2; }

struct GeoState {
    int rf = 1;
    int jump = 1;
    void apply(int kernel, int stride) {
        rf += (kernel - 1) * jump;
        jump *= stride;
    }
    void apply_seq(const Seq& seq) {
        for (const Op& op : seq) {
            if (op.kind == Op::Kind::Conv) apply(op.conv.kernel, op.conv.stride);
            if (op.kind == Op::Kind::Pool) apply(op.pool.kernel, op.pool.stride);
        }
    }
};

}  // namespace

BlockAddress BlockAddress::parse(const std::string& s) {
    auto dot = s.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= s.size())
        throw std::invalid_argument("invalid block address '" + s + "', expected stage.block");
    BlockAddress addr;
    try {
        size_t used = 0;
        addr.stage = std::stoi(s.substr(0, dot), &used);
        if (used != dot) throw std::invalid_argument("");
        std::string rest = s.substr(dot + 1);
        addr.block = std::stoi(rest, &used);
        if (used != rest.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid block address '" + s + "', expected stage.block");
    }
    if (addr.stage < 1 || addr.block < 0)
        throw std::invalid_argument("invalid block address '" + s + "'");
    return addr;
}

const char* tap_name(TapKind t) {
    switch (t) {
        case TapKind::In: return "in";
        case TapKind::Pre: return "pre";
        case TapKind::Post: return "post";
    }
    return "?";
}

TapKind tap_from_string(const std::string& s) {
    if (s == "in" || s == "In") return TapKind::In;
    if (s == "pre" || s == "Pre") return TapKind::Pre;
    if (s == "post" || s == "Post") return TapKind::Post;
    throw std::invalid_argument("unknown tap '" + s + "' (expected in|pre|post)");
}

void NetModel::validate() const {
    size_t total_blocks = 0;
    for (const auto& stage : stages) total_blocks += stage.size();
    if (total_blocks == 0)
        throw std::invalid_argument(
            "model '" + weights_id +
            "' has no residual blocks; In/Pre/Post taps are undefined without residual summation");
    for (size_t s = 0; s < stages.size(); ++s)
        for (size_t b = 0; b < stages[s].size(); ++b) {
            const ResBlock& blk = stages[s][b];
            std::string name = std::to_string(s + 1) + "." + std::to_string(b);
            if (blk.main.empty() || blk.main.back().kind != Op::Kind::Norm)
                throw std::invalid_argument("block " + name +
                                            ": main path must end with batch normalization");
            if (blk.out_channels <= 0)
                throw std::invalid_argument("block " + name + ": undefined channel count");
        }
}

AblationSpec AblationSpec::make(BlockAddress addr, std::vector<std::pair<int, float>> means) {
    std::sort(means.begin(), means.end());
    for (size_t i = 1; i < means.size(); ++i)
        if (means[i].first == means[i - 1].first)
            throw std::invalid_argument("ablation spec lists channel " +
                                        std::to_string(means[i].first) + " twice");
    return AblationSpec{addr, std::move(means)};
}

Network::Network(std::shared_ptr<const NetModel> model) : model_(std::move(model)) {
    model_->validate();
}

Network network_from_model(NetModel model) {
    return Network(std::make_shared<const NetModel>(std::move(model)));
}

std::vector<BlockAddress> Network::blocks() const {
    std::vector<BlockAddress> out;
    for (size_t s = 0; s < model_->stages.size(); ++s)
        for (size_t b = 0; b < model_->stages[s].size(); ++b)
            out.push_back({static_cast<int>(s + 1), static_cast<int>(b)});
    return out;
}

bool Network::has_block(BlockAddress addr) const {
    return addr.stage >= 1 && addr.stage <= static_cast<int>(model_->stages.size()) &&
           addr.block >= 0 &&
           addr.block < static_cast<int>(model_->stages[static_cast<size_t>(addr.stage - 1)].size());
}

void Network::require_block(BlockAddress addr) const {
    if (!has_block(addr))
        throw std::invalid_argument("block " + addr.str() + " does not exist in '" +
                                    model_->weights_id + "'");
}

const ResBlock& Network::block_at(BlockAddress addr) const {
    require_block(addr);
    return model_->stages[static_cast<size_t>(addr.stage - 1)][static_cast<size_t>(addr.block)];
}

int Network::channel_count(BlockAddress addr) const { return block_at(addr).out_channels; }

Tensor Network::normalize_input(const Tensor& rgb01) const {
    if (model_->input_channels != 3 || rgb01.dim(0) != 3) {
        if (rgb01.dim(0) != model_->input_channels)
            throw std::invalid_argument("normalize_input: channel mismatch");
    }
    Tensor out = rgb01;
    for (int c = 0; c < out.dim(0); ++c) {
        float m = model_->norm_mean[static_cast<size_t>(c % 3)];
        float inv = 1.0f / model_->norm_std[static_cast<size_t>(c % 3)];
        float* p = out.plane(c);
        for (int64_t i = 0, n = static_cast<int64_t>(out.dim(1)) * out.dim(2); i < n; ++i)
            p[i] = (p[i] - m) * inv;
    }
    return out;
}

// Shared eval-mode walk. Observers copy tensors without touching the compute
// path; ablation overwrites Post channels of one block before it feeds
// downstream. Returns early once `stop_at` (if any) has been captured.
namespace {

struct EvalCtl {
    const AblationSpec* ablation = nullptr;
    const std::vector<std::pair<BlockAddress, TapKind>>* sites = nullptr;
    std::vector<Tensor>* observed = nullptr;
    std::optional<std::pair<BlockAddress, TapKind>> stop_at;
    Tensor stopped;
    bool done = false;

    void offer(BlockAddress addr, TapKind tap, const Tensor& t) {
        if (sites)
            for (size_t i = 0; i < sites->size(); ++i)
                if ((*sites)[i].first == addr && (*sites)[i].second == tap)
                    (*observed)[i] = t;
        if (stop_at && stop_at->first == addr && stop_at->second == tap) {
            stopped = t;
            done = true;
        }
    }
};

}  // namespace

static Tensor eval_walk(const NetModel& m, const Tensor& input, EvalCtl& ctl) {
    Tensor x = run_seq(m.stem, input, nullptr);
    for (size_t s = 0; s < m.stages.size() && !ctl.done; ++s) {
        for (size_t b = 0; b < m.stages[s].size() && !ctl.done; ++b) {
            const ResBlock& blk = m.stages[s][b];
            BlockAddress addr{static_cast<int>(s + 1), static_cast<int>(b)};
            Tensor identity = blk.shortcut.empty() ? x : run_seq(blk.shortcut, x, nullptr);
            ctl.offer(addr, TapKind::In, identity);
            if (ctl.done) break;
            Tensor pre = run_seq(blk.main, std::move(x), nullptr);
            ctl.offer(addr, TapKind::Pre, pre);
            if (ctl.done) break;
            add_inplace(pre, identity);
            Tensor post = relu(pre);
            if (ctl.ablation && ctl.ablation->addr == addr && !ctl.ablation->empty())
                apply_ablation(post, *ctl.ablation);
            ctl.offer(addr, TapKind::Post, post);
            x = std::move(post);
        }
    }
    return x;
}

std::vector<float> Network::logits(const Tensor& input, const AblationSpec* ablation) const {
    if (ablation) require_block(ablation->addr);
    EvalCtl ctl;
    ctl.ablation = ablation;
    Tensor x = eval_walk(*model_, input, ctl);
    const HeadSpec& head = model_->head;
    if (head.pool == HeadSpec::Pool::None || !head.has_fc)
        throw std::runtime_error("model '" + model_->weights_id + "' has no classification head");
    std::vector<float> pooled(static_cast<size_t>(x.dim(0)));
    if (head.pool == HeadSpec::Pool::Avg) {
        int64_t n = static_cast<int64_t>(x.dim(1)) * x.dim(2);
        for (int c = 0; c < x.dim(0); ++c) {
            const float* p = x.plane(c);
            double acc = 0.0;
            for (int64_t i = 0; i < n; ++i) acc += p[i];
            pooled[static_cast<size_t>(c)] = static_cast<float>(acc / static_cast<double>(n));
        }
    } else {
        for (int c = 0; c < x.dim(0); ++c)
            pooled[static_cast<size_t>(c)] = x.at(c, center_h(x), center_w(x));
    }
    return head.fc.forward(pooled);
}

Tensor Network::tap_map(const Tensor& input, BlockAddress addr, TapKind tap,
                        const AblationSpec* ablation) const {
    require_block(addr);
    if (ablation) require_block(ablation->addr);
    EvalCtl ctl;
    ctl.ablation = ablation;
    ctl.stop_at = std::make_pair(addr, tap);
    eval_walk(*model_, input, ctl);
    if (!ctl.done) throw std::logic_error("tap " + addr.str() + "/" + tap_name(tap) + " not reached");
    return std::move(ctl.stopped);
}

float Network::tap_center(const Tensor& input, BlockAddress addr, TapKind tap, int channel) const {
    Tensor map = tap_map(input, addr, tap);
    if (channel < 0 || channel >= map.dim(0))
        throw std::invalid_argument("channel " + std::to_string(channel) + " out of range for " +
                                    addr.str());
    return map.at(channel, center_h(map), center_w(map));
}

std::vector<Tensor> Network::observe(const Tensor& input,
                                     const std::vector<std::pair<BlockAddress, TapKind>>& sites,
                                     const AblationSpec* ablation,
                                     std::vector<float>* logits_out) const {
    for (const auto& [addr, tap] : sites) {
        require_block(addr);
        (void)tap;
    }
    std::vector<Tensor> observed(sites.size());
    EvalCtl ctl;
    ctl.ablation = ablation;
    ctl.sites = &sites;
    ctl.observed = &observed;
    Tensor x = eval_walk(*model_, input, ctl);
    if (logits_out) {
        if (model_->head.pool == HeadSpec::Pool::None || !model_->head.has_fc)
            throw std::runtime_error("model has no classification head");
        // Reuse the tail of logits() by recomputing the pooled head on x.
        std::vector<float> pooled(static_cast<size_t>(x.dim(0)));
        if (model_->head.pool == HeadSpec::Pool::Avg) {
            int64_t n = static_cast<int64_t>(x.dim(1)) * x.dim(2);
            for (int c = 0; c < x.dim(0); ++c) {
                const float* p = x.plane(c);
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) acc += p[i];
                pooled[static_cast<size_t>(c)] = static_cast<float>(acc / static_cast<double>(n));
            }
        } else {
            for (int c = 0; c < x.dim(0); ++c)
                pooled[static_cast<size_t>(c)] = x.at(c, center_h(x), center_w(x));
        }
        *logits_out = model_->head.fc.forward(pooled);
    }
    for (size_t i = 0; i < sites.size(); ++i)
        if (observed[i].empty())
            throw std::logic_error("site " + sites[i].first.str() + "/" +
                                   tap_name(sites[i].second) + " was not reached");
    return observed;
}

float Network::input_gradient(const Tensor& input, BlockAddress addr, TapKind tap, int channel,
                              bool whole_channel, Tensor* grad) const {
    require_block(addr);
    const NetModel& m = *model_;

    struct BlockTrace {
        SeqTrace shortcut, main;
        Tensor post_out;
        bool identity_plain = false;
    };

    // Forward with traces, truncated at the tap.
    SeqTrace stem_tr;
    Tensor x = run_seq(m.stem, input, &stem_tr);
    std::vector<BlockTrace> traces;
    Tensor target_map;
    bool reached = false;
    for (size_t s = 0; s < m.stages.size() && !reached; ++s) {
        for (size_t b = 0; b < m.stages[s].size() && !reached; ++b) {
            const ResBlock& blk = m.stages[s][b];
            BlockAddress cur{static_cast<int>(s + 1), static_cast<int>(b)};
            bool is_target = cur == addr;
            BlockTrace bt;
            bt.identity_plain = blk.shortcut.empty();
            if (is_target && tap == TapKind::In) {
                target_map = bt.identity_plain ? x : run_seq(blk.shortcut, x, &bt.shortcut);
                traces.push_back(std::move(bt));
                reached = true;
                break;
            }
            if (is_target && tap == TapKind::Pre) {
                target_map = run_seq(blk.main, x, &bt.main);
                traces.push_back(std::move(bt));
                reached = true;
                break;
            }
            Tensor identity = bt.identity_plain ? x : run_seq(blk.shortcut, x, &bt.shortcut);
            Tensor pre = run_seq(blk.main, std::move(x), &bt.main);
            add_inplace(pre, identity);
            Tensor post = relu(pre);
            bt.post_out = post;
            if (is_target) {
                target_map = post;
                traces.push_back(std::move(bt));
                reached = true;
                break;
            }
            x = std::move(post);
            traces.push_back(std::move(bt));
        }
    }
    if (!reached) throw std::logic_error("input_gradient: tap not reached");
    if (channel < 0 || channel >= target_map.dim(0))
        throw std::invalid_argument("channel " + std::to_string(channel) + " out of range for " +
                                    addr.str());

    int th = target_map.dim(1), tw = target_map.dim(2);
    float value;
    Tensor g_tap({target_map.dim(0), th, tw});
    if (whole_channel) {
        const float* p = target_map.plane(channel);
        double acc = 0.0;
        for (int64_t i = 0, n = static_cast<int64_t>(th) * tw; i < n; ++i) acc += p[i];
        value = static_cast<float>(acc / (static_cast<double>(th) * tw));
        float w = 1.0f / (static_cast<float>(th) * static_cast<float>(tw));
        float* gp = g_tap.plane(channel);
        for (int64_t i = 0, n = static_cast<int64_t>(th) * tw; i < n; ++i) gp[i] = w;
    } else {
        value = target_map.at(channel, th / 2, tw / 2);
        g_tap.at(channel, th / 2, tw / 2) = 1.0f;
    }
    if (!grad) return value;

    // Backward through the target block from the tap.
    auto back_block_from = [&](const ResBlock& blk, const BlockTrace& bt, TapKind from,
                               Tensor g) -> Tensor {
        Tensor g_id, g_pre;
        if (from == TapKind::In) {
            g_id = std::move(g);
        } else if (from == TapKind::Pre) {
            g_pre = std::move(g);
        } else {
            Tensor g_sum = relu_backward(g, bt.post_out);
            g_id = g_sum;
            g_pre = std::move(g_sum);
        }
        Tensor gx;
        if (!g_id.empty()) gx = bt.identity_plain ? g_id : back_seq(blk.shortcut, g_id, bt.shortcut);
        if (!g_pre.empty()) {
            Tensor gm = back_seq(blk.main, std::move(g_pre), bt.main);
            if (gx.empty())
                gx = std::move(gm);
            else
                add_inplace(gx, gm);
        }
        return gx;
    };

    size_t last = traces.size() - 1;
    const ResBlock& target_blk = block_at(addr);
    Tensor g_x = back_block_from(target_blk, traces[last], tap, std::move(g_tap));

    // Full backward through the blocks before the target, newest first.
    size_t idx = last;
    for (size_t s = static_cast<size_t>(addr.stage - 1) + 1; s-- > 0;) {
        size_t b_end = (static_cast<int>(s) == addr.stage - 1)
                           ? static_cast<size_t>(addr.block)
                           : m.stages[s].size();
        for (size_t b = b_end; b-- > 0;) {
            --idx;
            const ResBlock& blk = m.stages[s][b];
            g_x = back_block_from(blk, traces[idx], TapKind::Post, std::move(g_x));
        }
    }
    *grad = back_seq(m.stem, std::move(g_x), stem_tr);
    return value;
}

Network::RfInfo Network::receptive_field(BlockAddress addr, TapKind tap) const {
    require_block(addr);
    const NetModel& m = *model_;
    GeoState geo;
    geo.apply_seq(m.stem);
    for (int s = 1; s <= addr.stage; ++s) {
        int b_end = (s == addr.stage) ? addr.block
                                      : static_cast<int>(m.stages[static_cast<size_t>(s - 1)].size());
        for (int b = 0; b < b_end; ++b) {
            const ResBlock& blk = m.stages[static_cast<size_t>(s - 1)][static_cast<size_t>(b)];
            GeoState pre = geo;
            pre.apply_seq(blk.main);
            GeoState id = geo;
            id.apply_seq(blk.shortcut);
            geo.rf = std::max(id.rf, pre.rf);
            geo.jump = pre.jump;
        }
    }
    const ResBlock& blk = block_at(addr);
    GeoState id = geo;
    id.apply_seq(blk.shortcut);
    GeoState pre = geo;
    pre.apply_seq(blk.main);
    switch (tap) {
        case TapKind::In: return {id.rf, id.jump};
        case TapKind::Pre: return {pre.rf, pre.jump};
        case TapKind::Post: return {std::max(id.rf, pre.rf), pre.jump};
    }
    return {geo.rf, geo.jump};
}

}  // namespace resstream

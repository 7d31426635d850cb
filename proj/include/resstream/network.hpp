#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "resstream/layers.hpp"
#include "resstream/tensor.hpp"

namespace resstream {

/// Residual block address in "stage.block" form, e.g. "2.1" is the second
/// block of stage 2. Stages are 1-based, blocks 0-based.
struct BlockAddress {
    int stage = 0;
    int block = 0;

    std::string str() const { return std::to_string(stage) + "." + std::to_string(block); }
    static BlockAddress parse(const std::string& s);
    bool operator==(const BlockAddress& o) const { return stage == o.stage && block == o.block; }
    bool operator<(const BlockAddress& o) const {
        return stage != o.stage ? stage < o.stage : block < o.block;
    }
};

/// The three observable sites of a residual block:
///   In   — the tensor summed into the block output (previous block output,
///          or the downsample path output when the block has one),
///   Pre  — the block's final batch normalization output,
///   Post — ReLU(In + Pre).
enum class TapKind { In, Pre, Post };

const char* tap_name(TapKind t);
TapKind tap_from_string(const std::string& s);

struct Op {
    enum class Kind { Conv, Norm, Relu, Pool };
    Kind kind = Kind::Relu;
    Conv2d conv;
    BatchNorm norm;
    MaxPool pool;

    static Op make_conv(Conv2d c) { return Op{Kind::Conv, std::move(c), {}, {}}; }
    static Op make_norm(BatchNorm n) { return Op{Kind::Norm, {}, std::move(n), {}}; }
    static Op make_relu() { return Op{Kind::Relu, {}, {}, {}}; }
    static Op make_pool(MaxPool p) { return Op{Kind::Pool, {}, {}, p}; }
};

using Seq = std::vector<Op>;

struct ResBlock {
    Seq main;      // must end with a Norm op; its output is the Pre tap
    Seq shortcut;  // empty means identity; otherwise the downsample path
    int out_channels = 0;
};

struct HeadSpec {
    enum class Pool { Avg, Center, None };
    Pool pool = Pool::Avg;
    bool has_fc = false;
    Linear fc;
};

struct NetModel {
    std::string weights_id;
    int input_resolution = 224;
    int input_channels = 3;
    std::array<float, 3> norm_mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> norm_std{0.229f, 0.224f, 0.225f};
    Seq stem;
    std::vector<std::vector<ResBlock>> stages;
    HeadSpec head;

    /// Checks the residual contract; throws std::invalid_argument on violation
    /// (e.g. an architecture without residual summation).
    void validate() const;
};

/// Channels of one block overwritten with constant per-channel values at the
/// Post tap during forward passes.
struct AblationSpec {
    BlockAddress addr;
    std::vector<std::pair<int, float>> channel_means;  // sorted by channel

    bool empty() const { return channel_means.empty(); }
    static AblationSpec make(BlockAddress addr, std::vector<std::pair<int, float>> means);
};

/// Shared-weights handle over a NetModel. All forward/backward entry points
/// are const and keep their state on the stack, so handles are cheap to copy
/// and safe to use from parallel jobs.
class Network {
public:
    Network() = default;
    explicit Network(std::shared_ptr<const NetModel> model);

    const NetModel& model() const { return *model_; }
    const std::string& weights_id() const { return model_->weights_id; }
    int input_resolution() const { return model_->input_resolution; }

    std::vector<BlockAddress> blocks() const;
    bool has_block(BlockAddress addr) const;
    /// Channel count of the block's taps (In/Pre/Post all agree).
    int channel_count(BlockAddress addr) const;

    Tensor normalize_input(const Tensor& rgb01) const;

    /// Full forward to class logits. Throws if the model has no head.
    std::vector<float> logits(const Tensor& input, const AblationSpec* ablation = nullptr) const;

    /// Truncated forward returning the activation map at one tap.
    Tensor tap_map(const Tensor& input, BlockAddress addr, TapKind tap,
                   const AblationSpec* ablation = nullptr) const;

    /// Center-neuron activation at a tap: position (floor(h/2), floor(w/2)).
    float tap_center(const Tensor& input, BlockAddress addr, TapKind tap, int channel) const;

    /// Reads several taps in one forward pass; optionally also the logits.
    /// Observation does not perturb the computation.
    std::vector<Tensor> observe(const Tensor& input,
                                const std::vector<std::pair<BlockAddress, TapKind>>& sites,
                                const AblationSpec* ablation = nullptr,
                                std::vector<float>* logits_out = nullptr) const;

    /// Gradient of a scalar tap objective with respect to the network input.
    /// Objective is the center-neuron activation of `channel`, or the spatial
    /// mean of the channel map when `whole_channel` is set. Returns the
    /// objective value; writes the gradient into `grad` when non-null.
    float input_gradient(const Tensor& input, BlockAddress addr, TapKind tap, int channel,
                         bool whole_channel, Tensor* grad) const;

    struct RfInfo {
        int rf = 1;    // theoretical receptive field side, input pixels
        int jump = 1;  // cumulative stride at the tap
    };
    RfInfo receptive_field(BlockAddress addr, TapKind tap) const;

private:
    void require_block(BlockAddress addr) const;
    const ResBlock& block_at(BlockAddress addr) const;

    std::shared_ptr<const NetModel> model_;
};

Network network_from_model(NetModel model);

}  // namespace resstream

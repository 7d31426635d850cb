#pragma once

#include <array>
#include <optional>
#include <string>

#include "resstream/network.hpp"
#include "resstream/tensor.hpp"

namespace resstream {

enum class FZMode { CenterNeuron, WholeChannel };

const char* fz_mode_name(FZMode m);

struct FZObjective {
    BlockAddress addr;
    TapKind tap = TapKind::Post;
    int channel = 0;
    FZMode mode = FZMode::CenterNeuron;
};

enum class FZParam { SpectralDecorrelated, RawPixel };

struct FZConfig {
    int steps = 512;
    float step_size = 0.05f;
    /// -1 selects the per-block jitter schedule; >= 0 forces a value.
    int jitter_primary = -1;
    int pad_pixels = 16;
    FZParam parameterization = FZParam::SpectralDecorrelated;
    uint64_t seed = 0;

    static int jitter_secondary_of(int primary) { return primary / 2; }
    void validate() const;
};

struct FeatureVisual {
    Tensor image;  // {3,H,W} rgb in [0,1], model input space
    FZObjective objective;
    float achieved_activation = 0.0f;
    bool degenerate = false;  // zero gradient for every step
    std::string config_fingerprint;
};

/// Jitter magnitude for the optimization transforms per block and tap:
/// 0 for every tap of blocks 1.1 and 2.0, 4 for 2.1 Pre and every tap of
/// block 3.0, and the default 16 elsewhere.
int jitter_for_block(BlockAddress addr, TapKind tap);

/// Effective primary jitter for an objective under a config (schedule or
/// explicit override).
int effective_jitter(const FZObjective& obj, const FZConfig& cfg);

/// Hash over everything that determines the optimization result: weights id,
/// objective, steps, rates, jitter, parameterization, seed, transform tables.
std::string fz_fingerprint(const Network& net, const FZObjective& obj, const FZConfig& cfg);

/// Regularized gradient ascent on a spectrally parameterized, color
/// decorrelated image (optionally raw pixels). Deterministic given the seed.
/// Throws on non-finite loss; flags the visual degenerate when no step
/// produced a gradient.
FeatureVisual optimize_fz(const Network& net, const FZObjective& obj, const FZConfig& cfg);

/// Center-neuron FZs for the In, Pre and Post taps of one channel, each
/// optimized with its tap-appropriate jitter. A failure at any tap fails the
/// triple. When `store_dir` is set, existing artifacts with matching
/// fingerprints are reused and new ones persisted.
std::array<FeatureVisual, 3> fz_triple(const Network& net, BlockAddress addr, int channel,
                                       const FZConfig& cfg, const std::string& store_dir = "");

/// Artifact layout: <dir>/<stage.block>_<tap>_c<channel>_<mode>_s<seed>_<fp8>
/// with .raw (exact float image), .png (preview) and .json (metadata).
std::string fz_artifact_base(const FZObjective& obj, uint64_t seed,
                             const std::string& fingerprint);
void save_feature_visual(const FeatureVisual& fz, uint64_t seed, const std::string& dir);
std::optional<FeatureVisual> load_feature_visual(const FZObjective& obj, uint64_t seed,
                                                 const std::string& fingerprint,
                                                 const std::string& dir, int resolution);

/// Ensures a persisted FZ exists and returns it (optimizing on a miss).
FeatureVisual obtain_fz(const Network& net, const FZObjective& obj, const FZConfig& cfg,
                        const std::string& store_dir);

}  // namespace resstream

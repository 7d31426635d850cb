#pragma once

#include <string>
#include <vector>

#include "resstream/featviz.hpp"
#include "resstream/network.hpp"

namespace resstream {

/// The scale transform S(X): center-crop a 224x224 image to 112 pixels and
/// resize back to 224 with bilinear interpolation.
Tensor scale_up(const Tensor& img224);

struct CriteriaBounds {
    double ratio_low = 2.0 / 3.0;
    double ratio_high = 1.5;
};

/// Per-channel measurements for the two scale-invariance conditions:
///   condition 1: ReLU(Pre_c(X_in)) < Pre_c(S(X_in))      (strict)
///   condition 2: 2/3 < Post_c(X_in) / Post_c(X_pre) < 3/2 (strict)
/// where X_in / X_pre are the channel's center-neuron FZs for the In and Pre
/// taps. A zero denominator in condition 2 is flagged degenerate and fails.
struct CriteriaVerdict {
    BlockAddress addr;
    int channel = 0;
    double pre_in_raw = 0.0;   // Pre_c(X_in) before rectification
    double eq1_lhs = 0.0;      // ReLU(pre_in_raw)
    double eq1_rhs = 0.0;      // Pre_c(S(X_in)), raw
    double post_in = 0.0;      // Post_c(X_in)
    double post_pre = 0.0;     // Post_c(X_pre)
    double eq2_ratio = 0.0;    // post_in / post_pre (NaN when degenerate)
    bool passes_eq1 = false;
    bool passes_eq2 = false;
    bool passes = false;
    bool degenerate = false;
    std::string error;         // non-empty when FZ generation failed
    std::string fz_in_fp, fz_pre_fp, fz_post_fp;
};

/// Pure arithmetic of the two conditions, factored out so boundary cases are
/// directly testable.
CriteriaVerdict judge_criteria(BlockAddress addr, int channel, double pre_in_raw,
                               double pre_scaled_in, double post_in, double post_pre,
                               const CriteriaBounds& bounds = {});

/// Four clean forward passes (no optimization-time transforms) on the
/// finalized FZs: Pre on X_in, Pre on S(X_in), Post on X_in, Post on X_pre.
CriteriaVerdict evaluate_criteria(const Network& net, BlockAddress addr, int channel,
                                  const FeatureVisual& fz_in, const FeatureVisual& fz_pre,
                                  const CriteriaBounds& bounds = {});

/// Screens every channel of the given blocks: generates the In/Pre FZ pair
/// per channel (tap-appropriate jitter) and evaluates the criteria. Per-
/// channel FZ failures are recorded as non-passing verdicts with an error
/// flag, never dropped. Parallel across channels.
std::vector<CriteriaVerdict> screen_blocks(const Network& net,
                                           const std::vector<BlockAddress>& blocks,
                                           const FZConfig& cfg,
                                           const CriteriaBounds& bounds = {}, int workers = 0,
                                           const std::string& fz_store_dir = "");

void write_verdicts_csv(const std::string& path, const std::vector<CriteriaVerdict>& verdicts);
std::vector<CriteriaVerdict> read_verdicts_csv(const std::string& path);

std::vector<int> passing_channels(const std::vector<CriteriaVerdict>& verdicts,
                                  BlockAddress addr);

}  // namespace resstream

#pragma once

#include <nlohmann/json.hpp>

#include "resstream/network.hpp"
#include "resstream/registry.hpp"

namespace resstream::toynets {

/// Zero-mean radial blob template (k x k), positive lobe normalized to sum 1.
/// `gain` rescales the whole template.
std::vector<float> blob_template(int k, double sigma, double gain = 1.0);

/// Zero-mean vertical grating (cosine along x, Hann window along y), positive
/// lobe normalized to sum 1. When `embed_k` > k the template is centered in a
/// larger zero canvas.
std::vector<float> grating_template(int k, double period, int embed_k = 0, double gain = 1.0);

/// One residual block with a planted scale-equivariant channel pair:
///   channel 0: In detects a small blob, Pre detects the 2x blob
///              (criteria-passing by construction),
///   channel 1: In and Pre both detect the same fine vertical grating
///              (no scale progression, fails the first criterion).
/// Input is 3x224x224 with identity normalization; 56x56 maps.
nlohmann::json planted_scale_pair_spec();

/// Two-class network whose decision depends solely on channel 0's Post
/// center value: In channel 0 reads center brightness, the main path is
/// dead, the head compares the center readout against `threshold`.
/// Channel count is 2 (channel 1 is planted dead).
nlohmann::json center_classifier_spec(double threshold = 0.5);

/// Classifier with redundant per-color center detectors used by the random
/// control screening tests: channel 0 reads the red center, channel 1 the
/// green center, channel 2 is dead. The head sums channels 0 and 1.
nlohmann::json two_signal_classifier_spec(double threshold = 1.0);

/// Post channel 0 is constant 2.0 and channel 1 constant 0 for any input.
nlohmann::json constant_post_spec();

/// Block whose channel 0 detects the identical blob at both In and Pre
/// (same pattern, same scale); used by the matched-filter oracle.
nlohmann::json shared_pattern_spec();

/// Stem (7x7 stride-2 conv + max pool) plus two stride-1 residual blocks with
/// strictly positive weights, geometrically identical to the reference
/// network's stage 1. With positive weights every ReLU passes gradient, so
/// gradient footprints probe the true receptive field.
nlohmann::json positive_stage1_spec(uint64_t seed = 1);

inline Network build(const nlohmann::json& spec) {
    return network_from_model(synthetic_from_json(spec));
}

}  // namespace resstream::toynets

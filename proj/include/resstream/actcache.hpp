#pragma once

#include <optional>
#include <string>
#include <vector>

#include "resstream/dataset.hpp"
#include "resstream/network.hpp"

namespace resstream {

/// Center-neuron activations for every (image, channel) of one tap.
/// Row order matches DatasetSlice iteration order. The cache key covers
/// everything that determines the values; any mismatch invalidates.
struct ActivationCache {
    std::string weights_id;
    BlockAddress addr;
    TapKind tap = TapKind::Post;
    std::string preprocessing;  // descriptor string
    std::string transform;      // "none" or "evalscale:<p>"
    uint64_t dataset_fingerprint = 0;
    int images = 0;
    int channels = 0;
    std::vector<float> values;  // images x channels, row-major

    float at(int image, int channel) const {
        return values[static_cast<size_t>(image) * channels + channel];
    }
    std::vector<double> channel_means() const;
    uint64_t key_hash() const;
};

std::string transform_descriptor(int scale_percentage);

/// One forward pass per image (parallel across images), reading the center
/// neuron of every channel at the tap. Aborts on non-finite activations.
ActivationCache sweep_center_activations(const Network& net, const DatasetSlice& slice,
                                         BlockAddress addr, TapKind tap, int scale_percentage = 0,
                                         int workers = 0);

/// Persists as <cache_root>/<keyhash>.bin plus a human-readable .meta
/// sidecar (shape, key fields, checksum). Writes are atomic (rename).
void save_cache(const ActivationCache& cache, const std::string& cache_root);

/// Returns the cache only if every key field and the checksum validate.
std::optional<ActivationCache> load_cache(const std::string& cache_root,
                                          const std::string& weights_id, BlockAddress addr,
                                          TapKind tap, const std::string& preprocessing,
                                          const std::string& transform,
                                          uint64_t dataset_fingerprint);

/// Indices of the k highest-activating images for one channel, descending by
/// activation, ties broken by ascending dataset index.
std::vector<int> top_k_activating_images(const ActivationCache& cache, int channel, int k);

}  // namespace resstream

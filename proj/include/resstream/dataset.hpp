#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resstream/network.hpp"
#include "resstream/tensor.hpp"

namespace resstream {

/// Deterministic, class-stratified view over a class-per-directory image
/// tree (root/<class_name>/<image files>). Labels are assigned by sorted
/// class-directory order; iteration is class-major, filename-ascending.
struct DatasetSlice {
    std::string root;
    std::vector<std::string> class_names;  // sorted
    std::vector<std::string> paths;        // deterministic order
    std::vector<int> labels;               // parallel to paths
    double subset_fraction = 1.0;
    uint64_t split_seed = 0;

    size_t size() const { return paths.size(); }
    int class_count() const { return static_cast<int>(class_names.size()); }
    /// Stable content identity: hashes the selected relative paths and labels.
    uint64_t fingerprint() const;
};

/// Scans `root` and takes a per-class subset of approximately
/// fraction * class size (within one image of the exact value).
/// The same (root contents, fraction, seed) always selects the same files.
DatasetSlice load_dataset(const std::string& root, double subset_fraction, uint64_t split_seed = 0);

/// Canonical evaluation input: resize shorter side to 256 (antialiased
/// bilinear), center-crop 224, normalize with the model's constants.
/// `scale_percentage` > 0 swaps the crop for the evaluation scale transform.
Tensor eval_input(const NetModel& model, const Tensor& rgb01, int scale_percentage = 0);

/// Human-readable descriptor of the preprocessing pipeline, recorded in
/// cache keys so any change invalidates cached activations.
std::string preprocessing_descriptor(const NetModel& model);

}  // namespace resstream

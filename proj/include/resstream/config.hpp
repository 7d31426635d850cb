#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resstream/ablate.hpp"
#include "resstream/featviz.hpp"
#include "resstream/scalecrit.hpp"

namespace resstream {

/// One structured config governs every pipeline stage. The effective config
/// (file values plus CLI overrides) is hashed and the hash stamps every
/// artifact it produces.
struct PipelineConfig {
    std::string weights_id = "resnet18-imagenet-v1";
    std::string weights_root = "weights";
    std::string dataset_root;
    std::string output_root = "out";
    std::string cache_root;  // defaults to <output_root>/cache; env override
    double subset_fraction = 0.1;
    uint64_t split_seed = 7;
    std::vector<std::string> blocks{"1.1", "2.0", "2.1", "3.1"};
    FZConfig fz;
    CriteriaBounds criteria;
    std::vector<int> percentages{10, 20, 30, 40, 50};
    int trials = 10;
    int screen_budget = 200;
    uint64_t experiment_seed = 0;
    std::map<std::string, double> relaxation;  // per block address string
    int workers = 0;

    static PipelineConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    /// Hash of the canonical serialized form.
    std::string hash() const;
    /// Paper defaults when not configured: 0 for 2.1, 0.01 for 3.1, 0 otherwise.
    double relaxation_for(BlockAddress addr) const;
    /// cache_root, falling back to <output_root>/cache; the RESSTREAM_CACHE_ROOT
    /// environment variable overrides both.
    std::string effective_cache_root() const;
};

PipelineConfig load_config(const std::string& path);

}  // namespace resstream

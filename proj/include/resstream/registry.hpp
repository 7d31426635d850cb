#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "resstream/network.hpp"

namespace resstream {

/// Resolves a weights_id to a ready network handle (eval mode, frozen
/// statistics). Supported ids:
///   - "resnet18-*"        → torchvision-layout ResNet18 loaded from
///                           <weights_root>/<id>.safetensors
///   - "resnet18-random"   → ResNet18 architecture with seeded random weights
///     (also "resnet18-random-<seed>"); no checkpoint file needed
///   - "synthetic:<path>"  → synthetic residual network from a JSON spec file
///   - any other id        → <weights_root>/<id>.json synthetic spec
Network load_network(const std::string& weights_id, const std::string& weights_root = "");

/// ResNet18 (torchvision layout) from a state-dict-style tensor map.
NetModel resnet18_from_state(const std::map<std::string, Tensor>& state, std::string weights_id);

/// Same architecture with random but well-conditioned weights; deterministic
/// given the seed. Useful for architecture-level tests without a checkpoint.
NetModel resnet18_random(uint64_t seed, std::string weights_id = "resnet18-random");

/// The state dict behind resnet18_random, in torchvision tensor naming.
std::map<std::string, Tensor> resnet18_random_state(uint64_t seed);

/// Builds a synthetic residual network from its JSON spec. See
/// docs in README for the schema; every synthetic network satisfies the same
/// In/Pre/Post tap contract as the reference architecture.
NetModel synthetic_from_json(const nlohmann::json& spec, const std::string& name_hint = "");
NetModel synthetic_from_file(const std::string& path);

}  // namespace resstream

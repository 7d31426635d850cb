#pragma once

#include <map>
#include <string>

#include "resstream/tensor.hpp"

namespace resstream {

/// Minimal safetensors support: float32 tensors only, which is all the
/// checkpoint registry needs. The format is an 8-byte little-endian header
/// length, a JSON header mapping tensor names to dtype/shape/offsets, then
/// the raw payload.
std::map<std::string, Tensor> load_safetensors(const std::string& path);

void save_safetensors(const std::string& path, const std::map<std::string, Tensor>& tensors,
                      const std::map<std::string, std::string>& metadata = {});

}  // namespace resstream

#include "resstream/safetensors.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace resstream {

using nlohmann::json;

std::map<std::string, Tensor> load_safetensors(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open safetensors file: " + path);
    uint64_t header_len = 0;
    f.read(reinterpret_cast<char*>(&header_len), 8);
    if (!f || header_len == 0 || header_len > (1ULL << 31))
        throw std::runtime_error("corrupt safetensors header in " + path);
    std::string header(header_len, '\0');
    f.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!f) throw std::runtime_error("truncated safetensors header in " + path);
    json j = json::parse(header, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw std::runtime_error("invalid safetensors JSON header in " + path);

    std::string payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::map<std::string, Tensor> out;
    for (auto& [name, entry] : j.items()) {
        if (name == "__metadata__") continue;
        std::string dtype = entry.at("dtype").get<std::string>();
        if (dtype != "F32")
            throw std::runtime_error("tensor '" + name + "' in " + path + " has dtype " + dtype +
                                     "; only F32 checkpoints are supported");
        std::vector<int> shape;
        for (auto& d : entry.at("shape")) shape.push_back(d.get<int>());
        auto offs = entry.at("data_offsets");
        uint64_t begin = offs.at(0).get<uint64_t>(), end = offs.at(1).get<uint64_t>();
        if (end < begin || end > payload.size())
            throw std::runtime_error("tensor '" + name + "' offsets out of range in " + path);
        Tensor t(shape);
        if (static_cast<uint64_t>(t.numel()) * 4 != end - begin)
            throw std::runtime_error("tensor '" + name + "' size mismatch in " + path);
        std::memcpy(t.data(), payload.data() + begin, end - begin);
        out.emplace(name, std::move(t));
    }
    return out;
}

void save_safetensors(const std::string& path, const std::map<std::string, Tensor>& tensors,
                      const std::map<std::string, std::string>& metadata) {
    json header = json::object();
    if (!metadata.empty()) {
        json m = json::object();
        for (const auto& [k, v] : metadata) m[k] = v;
        header["__metadata__"] = m;
    }
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        json entry;
        entry["dtype"] = "F32";
        entry["shape"] = t.shape();
        uint64_t bytes = static_cast<uint64_t>(t.numel()) * 4;
        entry["data_offsets"] = {offset, offset + bytes};
        header[name] = entry;
        offset += bytes;
    }
    std::string hs = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    uint64_t header_len = hs.size();
    f.write(reinterpret_cast<const char*>(&header_len), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : tensors)
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * 4));
    if (!f) throw std::runtime_error("short write: " + path);
}

}  // namespace resstream

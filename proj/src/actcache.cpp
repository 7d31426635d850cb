#include "resstream/actcache.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "resstream/image_ops.hpp"
#include "resstream/util.hpp"

namespace resstream {

namespace fs = std::filesystem;

std::string transform_descriptor(int scale_percentage) {
    return scale_percentage == 0 ? "none" : "evalscale:" + std::to_string(scale_percentage);
}

std::vector<double> ActivationCache::channel_means() const {
    std::vector<double> means(static_cast<size_t>(channels), 0.0);
    for (int i = 0; i < images; ++i)
        for (int c = 0; c < channels; ++c) means[static_cast<size_t>(c)] += at(i, c);
    for (auto& m : means) m /= std::max(1, images);
    return means;
}

uint64_t ActivationCache::key_hash() const {
    uint64_t h = fnv1a64(std::string("actcache-v1"));
    h = fnv1a64(weights_id, h);
    h = fnv1a64(addr.str(), h);
    h = fnv1a64(std::string(tap_name(tap)), h);
    h = fnv1a64(preprocessing, h);
    h = fnv1a64(transform, h);
    h = fnv1a64(&dataset_fingerprint, sizeof(dataset_fingerprint), h);
    return h;
}

ActivationCache sweep_center_activations(const Network& net, const DatasetSlice& slice,
                                         BlockAddress addr, TapKind tap, int scale_percentage,
                                         int workers) {
    if (slice.size() == 0) throw std::invalid_argument("sweep: empty dataset slice");
    ActivationCache cache;
    cache.weights_id = net.weights_id();
    cache.addr = addr;
    cache.tap = tap;
    cache.preprocessing = preprocessing_descriptor(net.model());
    cache.transform = transform_descriptor(scale_percentage);
    cache.dataset_fingerprint = slice.fingerprint();
    cache.images = static_cast<int>(slice.size());
    cache.channels = net.channel_count(addr);
    cache.values.assign(static_cast<size_t>(cache.images) * cache.channels, 0.0f);

    parallel_for(static_cast<int64_t>(slice.size()), workers, [&](int64_t i) {
        Tensor img = load_image_rgb01(slice.paths[static_cast<size_t>(i)]);
        Tensor input = eval_input(net.model(), img, scale_percentage);
        Tensor map = net.tap_map(input, addr, tap);
        int cy = map.dim(1) / 2, cx = map.dim(2) / 2;
        float* row = cache.values.data() + static_cast<size_t>(i) * cache.channels;
        for (int c = 0; c < cache.channels; ++c) {
            float v = map.at(c, cy, cx);
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite activation at " + addr.str() + "/" +
                                         tap_name(tap) + " channel " + std::to_string(c) +
                                         " image " + slice.paths[static_cast<size_t>(i)]);
            row[c] = v;
        }
    });
    return cache;
}

namespace {

std::string meta_path(const std::string& cache_root, uint64_t key) {
    return (fs::path(cache_root) / (hex64(key) + ".meta")).string();
}
std::string bin_path(const std::string& cache_root, uint64_t key) {
    return (fs::path(cache_root) / (hex64(key) + ".bin")).string();
}

}  // namespace

void save_cache(const ActivationCache& cache, const std::string& cache_root) {
    fs::create_directories(cache_root);
    uint64_t key = cache.key_hash();
    uint64_t checksum = fnv1a64(cache.values.data(), cache.values.size() * sizeof(float));

    std::string tmp_bin = bin_path(cache_root, key) + ".tmp";
    {
        std::ofstream f(tmp_bin, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write cache: " + tmp_bin);
        f.write(reinterpret_cast<const char*>(cache.values.data()),
                static_cast<std::streamsize>(cache.values.size() * sizeof(float)));
        if (!f) throw std::runtime_error("short cache write: " + tmp_bin);
    }
    std::string tmp_meta = meta_path(cache_root, key) + ".tmp";
    {
        std::ofstream f(tmp_meta);
        f << "resstream-activation-cache v1\n";
        f << "weights_id: " << cache.weights_id << "\n";
        f << "addr: " << cache.addr.str() << "\n";
        f << "tap: " << tap_name(cache.tap) << "\n";
        f << "preprocessing: " << cache.preprocessing << "\n";
        f << "transform: " << cache.transform << "\n";
        f << "dataset_fingerprint: " << hex64(cache.dataset_fingerprint) << "\n";
        f << "images: " << cache.images << "\n";
        f << "channels: " << cache.channels << "\n";
        f << "checksum: " << hex64(checksum) << "\n";
        if (!f) throw std::runtime_error("cannot write cache meta: " + tmp_meta);
    }
    fs::rename(tmp_bin, bin_path(cache_root, key));
    fs::rename(tmp_meta, meta_path(cache_root, key));
}

std::optional<ActivationCache> load_cache(const std::string& cache_root,
                                          const std::string& weights_id, BlockAddress addr,
                                          TapKind tap, const std::string& preprocessing,
                                          const std::string& transform,
                                          uint64_t dataset_fingerprint) {
    ActivationCache cache;
    cache.weights_id = weights_id;
    cache.addr = addr;
    cache.tap = tap;
    cache.preprocessing = preprocessing;
    cache.transform = transform;
    cache.dataset_fingerprint = dataset_fingerprint;
    uint64_t key = cache.key_hash();

    std::ifstream meta(meta_path(cache_root, key));
    if (!meta) return std::nullopt;
    std::map<std::string, std::string> fields;
    std::string line;
    std::getline(meta, line);
    if (line != "resstream-activation-cache v1") return std::nullopt;
    while (std::getline(meta, line)) {
        auto colon = line.find(": ");
        if (colon == std::string::npos) continue;
        fields[line.substr(0, colon)] = line.substr(colon + 2);
    }
    // The key hash covers the key fields, but verify explicitly so a hash
    // collision can never serve wrong data.
    if (fields["weights_id"] != weights_id || fields["addr"] != addr.str() ||
        fields["tap"] != tap_name(tap) || fields["preprocessing"] != preprocessing ||
        fields["transform"] != transform ||
        fields["dataset_fingerprint"] != hex64(dataset_fingerprint))
        return std::nullopt;

    try {
        cache.images = std::stoi(fields.at("images"));
        cache.channels = std::stoi(fields.at("channels"));
    } catch (const std::exception&) {
        return std::nullopt;
    }
    std::ifstream bin(bin_path(cache_root, key), std::ios::binary);
    if (!bin) return std::nullopt;
    cache.values.resize(static_cast<size_t>(cache.images) * cache.channels);
    bin.read(reinterpret_cast<char*>(cache.values.data()),
             static_cast<std::streamsize>(cache.values.size() * sizeof(float)));
    if (bin.gcount() != static_cast<std::streamsize>(cache.values.size() * sizeof(float)))
        return std::nullopt;
    uint64_t checksum = fnv1a64(cache.values.data(), cache.values.size() * sizeof(float));
    if (fields["checksum"] != hex64(checksum)) return std::nullopt;
    return cache;
}

std::vector<int> top_k_activating_images(const ActivationCache& cache, int channel, int k) {
    if (channel < 0 || channel >= cache.channels)
        throw std::invalid_argument("top_k: channel " + std::to_string(channel) + " out of range");
    if (k < 0 || k > cache.images)
        throw std::invalid_argument("top_k: k=" + std::to_string(k) + " exceeds image count " +
                                    std::to_string(cache.images));
    std::vector<int> idx(static_cast<size_t>(cache.images));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        float va = cache.at(a, channel), vb = cache.at(b, channel);
        if (va != vb) return va > vb;
        return a < b;
    });
    idx.resize(static_cast<size_t>(k));
    return idx;
}

}  // namespace resstream

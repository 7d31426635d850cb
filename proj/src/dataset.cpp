#include "resstream/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "resstream/ablate.hpp"
#include "resstream/image_ops.hpp"
#include "resstream/util.hpp"

namespace resstream {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp" || ext == ".ppm";
}

}  // namespace

uint64_t DatasetSlice::fingerprint() const {
    uint64_t h = fnv1a64(std::string("dataset-v1"));
    for (size_t i = 0; i < paths.size(); ++i) {
        fs::path rel = fs::path(paths[i]).lexically_relative(root);
        h = fnv1a64(rel.string(), h);
        h = fnv1a64(&labels[i], sizeof(int), h);
    }
    return h;
}

DatasetSlice load_dataset(const std::string& root, double subset_fraction, uint64_t split_seed) {
    if (!(subset_fraction > 0.0 && subset_fraction <= 1.0))
        throw std::invalid_argument("subset_fraction must be in (0, 1]");
    if (!fs::is_directory(root))
        throw std::runtime_error("dataset root is not a directory: " + root);

    std::vector<std::string> classes;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) classes.push_back(e.path().filename().string());
    std::sort(classes.begin(), classes.end());
    if (classes.empty())
        throw std::runtime_error("dataset root has no class directories: " + root);

    DatasetSlice slice;
    slice.root = root;
    slice.class_names = classes;
    slice.subset_fraction = subset_fraction;
    slice.split_seed = split_seed;

    for (size_t ci = 0; ci < classes.size(); ++ci) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(root) / classes[ci]))
            if (e.is_regular_file() && is_image_file(e.path()))
                files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw std::runtime_error("class directory has no images: " + classes[ci]);

        size_t take = files.size();
        if (subset_fraction < 1.0) {
            take = static_cast<size_t>(
                std::llround(subset_fraction * static_cast<double>(files.size())));
            take = std::min(take, files.size());
        }
        std::vector<size_t> order(files.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        if (take < files.size()) {
            auto rng = make_rng(mix_seed(split_seed, fnv1a64(classes[ci])));
            std::shuffle(order.begin(), order.end(), rng);
            order.resize(take);
            std::sort(order.begin(), order.end());
        }
        for (size_t idx : order) {
            slice.paths.push_back(files[idx]);
            slice.labels.push_back(static_cast<int>(ci));
        }
    }
    return slice;
}

Tensor eval_input(const NetModel& model, const Tensor& rgb01, int scale_percentage) {
    Tensor t = resize_short_side(rgb01, 256, /*antialias=*/true);
    t = apply_eval_scale(t, scale_percentage);
    return normalize_chw(t, model.norm_mean, model.norm_std);
}

std::string preprocessing_descriptor(const NetModel& model) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "short256aa-crop224-norm(%.4g,%.4g,%.4g|%.4g,%.4g,%.4g)",
                  model.norm_mean[0], model.norm_mean[1], model.norm_mean[2], model.norm_std[0],
                  model.norm_std[1], model.norm_std[2]);
    return buf;
}

}  // namespace resstream

#include "resstream/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "resstream/util.hpp"

namespace resstream {

using nlohmann::json;

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    c.weights_id = j.value("weights_id", c.weights_id);
    c.weights_root = j.value("weights_root", c.weights_root);
    c.dataset_root = j.value("dataset_root", c.dataset_root);
    c.output_root = j.value("output_root", c.output_root);
    c.cache_root = j.value("cache_root", c.cache_root);
    c.subset_fraction = j.value("subset_fraction", c.subset_fraction);
    c.split_seed = j.value("split_seed", c.split_seed);
    if (j.contains("blocks")) c.blocks = j.at("blocks").get<std::vector<std::string>>();
    if (j.contains("fz")) {
        const json& f = j.at("fz");
        c.fz.steps = f.value("steps", c.fz.steps);
        c.fz.step_size = f.value("step_size", c.fz.step_size);
        c.fz.jitter_primary = f.value("jitter_primary", c.fz.jitter_primary);
        c.fz.pad_pixels = f.value("pad", c.fz.pad_pixels);
        c.fz.seed = f.value("seed", c.fz.seed);
        std::string p = f.value("parameterization", "spectral");
        if (p == "spectral")
            c.fz.parameterization = FZParam::SpectralDecorrelated;
        else if (p == "pixel")
            c.fz.parameterization = FZParam::RawPixel;
        else
            throw std::invalid_argument("config: unknown fz.parameterization '" + p + "'");
    }
    if (j.contains("criteria")) {
        c.criteria.ratio_low = j.at("criteria").value("ratio_low", c.criteria.ratio_low);
        c.criteria.ratio_high = j.at("criteria").value("ratio_high", c.criteria.ratio_high);
    }
    if (j.contains("ablate")) {
        const json& a = j.at("ablate");
        if (a.contains("percentages")) c.percentages = a.at("percentages").get<std::vector<int>>();
        c.trials = a.value("trials", c.trials);
        c.screen_budget = a.value("screen_budget", c.screen_budget);
        c.experiment_seed = a.value("seed", c.experiment_seed);
        if (a.contains("relaxation"))
            for (const auto& [k, v] : a.at("relaxation").items())
                c.relaxation[k] = v.get<double>();
    }
    c.workers = j.value("workers", c.workers);
    for (const auto& b : c.blocks) BlockAddress::parse(b);  // validate early
    return c;
}

json PipelineConfig::to_json() const {
    json j;
    j["weights_id"] = weights_id;
    j["weights_root"] = weights_root;
    j["dataset_root"] = dataset_root;
    j["output_root"] = output_root;
    j["cache_root"] = cache_root;
    j["subset_fraction"] = subset_fraction;
    j["split_seed"] = split_seed;
    j["blocks"] = blocks;
    j["fz"] = {{"steps", fz.steps},
               {"step_size", fz.step_size},
               {"jitter_primary", fz.jitter_primary},
               {"pad", fz.pad_pixels},
               {"seed", fz.seed},
               {"parameterization",
                fz.parameterization == FZParam::SpectralDecorrelated ? "spectral" : "pixel"}};
    j["criteria"] = {{"ratio_low", criteria.ratio_low}, {"ratio_high", criteria.ratio_high}};
    json rel = json::object();
    for (const auto& [k, v] : relaxation) rel[k] = v;
    j["ablate"] = {{"percentages", percentages},
                   {"trials", trials},
                   {"screen_budget", screen_budget},
                   {"seed", experiment_seed},
                   {"relaxation", rel}};
    j["workers"] = workers;
    return j;
}

std::string PipelineConfig::hash() const {
    // workers only affects scheduling, never results; keep it out of the hash.
    json j = to_json();
    j.erase("workers");
    return hex32(fnv1a64(j.dump()));
}

double PipelineConfig::relaxation_for(BlockAddress addr) const {
    auto it = relaxation.find(addr.str());
    if (it != relaxation.end()) return it->second;
    if (addr.stage == 3 && addr.block == 1) return 0.01;
    return 0.0;
}

std::string PipelineConfig::effective_cache_root() const {
    if (const char* env = std::getenv("RESSTREAM_CACHE_ROOT"); env && *env) return env;
    if (!cache_root.empty()) return cache_root;
    return (std::filesystem::path(output_root) / "cache").string();
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("config is not valid JSON: " + path);
    return PipelineConfig::from_json(j);
}

}  // namespace resstream

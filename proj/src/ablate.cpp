#include "resstream/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "resstream/image_ops.hpp"
#include "resstream/logging.hpp"
#include "resstream/util.hpp"

namespace resstream {

using nlohmann::json;

int eval_scale_crop_size(int percentage) {
    if (percentage < 0 || percentage >= 100)
        throw std::invalid_argument("scale percentage must be in [0, 100), got " +
                                    std::to_string(percentage));
    return 256 - (256 * percentage) / 100;
}

Tensor apply_eval_scale(const Tensor& short256, int percentage) {
    if (percentage == 0) return center_crop(short256, 224);
    int crop = eval_scale_crop_size(percentage);
    return resize_bilinear(center_crop(short256, crop), 224, 224);
}

AblationSpec make_ablation_spec(BlockAddress addr, const std::vector<int>& channels,
                                const ActivationCache& post_cache) {
    if (!(post_cache.addr == addr) || post_cache.tap != TapKind::Post)
        throw std::invalid_argument("ablation spec needs a Post-tap cache for block " +
                                    addr.str());
    std::vector<double> means = post_cache.channel_means();
    std::vector<std::pair<int, float>> selected;
    for (int c : channels) {
        if (c < 0 || c >= post_cache.channels)
            throw std::invalid_argument("ablation channel " + std::to_string(c) +
                                        " has no mean in the cache");
        selected.emplace_back(c, static_cast<float>(means[static_cast<size_t>(c)]));
    }
    return AblationSpec::make(addr, std::move(selected));
}

double evaluate_accuracy(const Network& net, const DatasetSlice& slice, int percentage,
                         const AblationSpec* ablation, int workers) {
    if (slice.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty slice");
    std::vector<uint8_t> correct(slice.size(), 0);
    parallel_for(static_cast<int64_t>(slice.size()), workers, [&](int64_t i) {
        Tensor img = load_image_rgb01(slice.paths[static_cast<size_t>(i)]);
        Tensor input = eval_input(net.model(), img, percentage);
        std::vector<float> logits = net.logits(input, ablation);
        int best = 0;
        for (size_t k = 1; k < logits.size(); ++k) {
            if (!std::isfinite(logits[k]))
                throw std::runtime_error("non-finite logit for " +
                                         slice.paths[static_cast<size_t>(i)]);
            if (logits[k] > logits[static_cast<size_t>(best)]) best = static_cast<int>(k);
        }
        if (!std::isfinite(logits[0]))
            throw std::runtime_error("non-finite logit for " + slice.paths[static_cast<size_t>(i)]);
        correct[static_cast<size_t>(i)] = best == slice.labels[static_cast<size_t>(i)] ? 1 : 0;
    });
    int64_t hits = 0;
    for (uint8_t c : correct) hits += c;
    return static_cast<double>(hits) / static_cast<double>(slice.size());
}

double eq3_ratio(double scale_acc, const std::vector<double>& rand_accs) {
    if (rand_accs.empty()) throw std::invalid_argument("eq3_ratio: no trials");
    double acc = 0.0;
    for (double r : rand_accs) {
        if (r == 0.0) throw std::domain_error("eq3_ratio: zero random-ablation accuracy");
        acc += scale_acc / r;
    }
    return acc / static_cast<double>(rand_accs.size());
}

namespace {

double sample_stderr(const std::vector<double>& xs) {
    size_t n = xs.size();
    if (n < 2) return 0.0;
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

}  // namespace

std::vector<ControlSet> screen_random_controls(const Network& net, const DatasetSlice& slice,
                                               BlockAddress addr,
                                               const std::vector<int>& passing_set,
                                               const ActivationCache& post_cache,
                                               double scale_set_noscale_acc, double relaxation,
                                               int n_sets, int budget_per_set, uint64_t seed,
                                               int workers) {
    size_t k = passing_set.size();
    std::set<int> passing(passing_set.begin(), passing_set.end());
    std::vector<int> pool;
    for (int c = 0; c < net.channel_count(addr); ++c)
        if (!passing.count(c)) pool.push_back(c);
    if (pool.size() < k)
        throw std::runtime_error("control pool of block " + addr.str() + " has " +
                                 std::to_string(pool.size()) + " non-passing channels, need " +
                                 std::to_string(k));

    double threshold = scale_set_noscale_acc + relaxation;
    std::vector<ControlSet> out;
    for (int trial = 0; trial < n_sets; ++trial) {
        auto rng = make_rng(mix_seed(seed, 0x636f6e74726f6cULL + static_cast<uint64_t>(trial)));
        ControlSet cs;
        bool found = false;
        for (int attempt = 1; attempt <= budget_per_set; ++attempt) {
            std::vector<int> candidate = pool;
            std::shuffle(candidate.begin(), candidate.end(), rng);
            candidate.resize(k);
            std::sort(candidate.begin(), candidate.end());
            AblationSpec spec = make_ablation_spec(addr, candidate, post_cache);
            double acc = evaluate_accuracy(net, slice, 0, &spec, workers);
            if (k == 0 || acc <= threshold) {
                cs.channels = std::move(candidate);
                cs.noscale_acc = acc;
                cs.attempts = attempt;
                found = true;
                break;
            }
        }
        if (!found)
            throw std::runtime_error(
                "control screening for block " + addr.str() + " trial " + std::to_string(trial) +
                " exhausted its budget: no size-" + std::to_string(k) +
                " set reached accuracy <= " + fmt_double(threshold) + " in " +
                std::to_string(budget_per_set) + " attempts");
        log_info("control_set", {{"block", addr.str()},
                                 {"trial", std::to_string(trial)},
                                 {"attempts", std::to_string(cs.attempts)},
                                 {"noscale_acc", fmt_double(cs.noscale_acc)}});
        out.push_back(std::move(cs));
    }
    return out;
}

AblationReport run_ablation_experiment(const Network& net, const DatasetSlice& slice,
                                       BlockAddress addr, const std::vector<int>& passing_set,
                                       const ActivationCache& post_cache,
                                       const ExperimentConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("experiment needs trials >= 1");
    if (passing_set.empty())
        throw std::invalid_argument("experiment for block " + addr.str() +
                                    " has an empty passing set");

    AblationReport rep;
    rep.addr = addr;
    rep.weights_id = net.weights_id();
    rep.experiment_seed = cfg.seed;
    rep.trials = cfg.trials;
    rep.relaxation = cfg.relaxation;
    rep.passing_channels = passing_set;
    rep.percentages = cfg.percentages;

    AblationSpec scale_spec = make_ablation_spec(addr, passing_set, post_cache);
    rep.channel_means = scale_spec.channel_means;

    rep.scale_ablate_acc[0] = evaluate_accuracy(net, slice, 0, &scale_spec, cfg.workers);
    for (int p : cfg.percentages)
        rep.scale_ablate_acc[p] = evaluate_accuracy(net, slice, p, &scale_spec, cfg.workers);
    log_info("scale_set_accuracy", {{"block", addr.str()},
                                    {"noscale", fmt_double(rep.scale_ablate_acc[0])}});

    rep.control_sets = screen_random_controls(net, slice, addr, passing_set, post_cache,
                                              rep.scale_ablate_acc[0], cfg.relaxation, cfg.trials,
                                              cfg.screen_budget, cfg.seed, cfg.workers);

    for (int t = 0; t < cfg.trials; ++t) {
        AblationSpec spec = make_ablation_spec(addr, rep.control_sets[static_cast<size_t>(t)].channels,
                                               post_cache);
        std::map<int, double> accs;
        accs[0] = rep.control_sets[static_cast<size_t>(t)].noscale_acc;
        for (int p : cfg.percentages) {
            double a = evaluate_accuracy(net, slice, p, &spec, cfg.workers);
            if (!std::isfinite(a)) throw std::runtime_error("non-finite accuracy");
            accs[p] = a;
        }
        rep.rand_ablate_accs.push_back(std::move(accs));
    }

    auto aggregate = [&](int p, double& ratio, double& se) {
        std::vector<double> rand_accs, per_trial;
        for (int t = 0; t < cfg.trials; ++t)
            rand_accs.push_back(rep.rand_ablate_accs[static_cast<size_t>(t)].at(p));
        ratio = eq3_ratio(rep.scale_ablate_acc.at(p), rand_accs);
        for (double r : rand_accs) per_trial.push_back(rep.scale_ablate_acc.at(p) / r);
        se = sample_stderr(per_trial);
    };
    for (int p : cfg.percentages) aggregate(p, rep.ratios[p], rep.ratio_stderr[p]);
    aggregate(0, rep.no_scale_ratio, rep.no_scale_ratio_stderr);
    return rep;
}

// ---- persistence -------------------------------------------------------------

namespace {

json accs_to_json(const std::map<int, double>& m) {
    json j = json::object();
    for (const auto& [p, a] : m) j[std::to_string(p)] = a;
    return j;
}

std::map<int, double> accs_from_json(const json& j) {
    std::map<int, double> m;
    for (const auto& [k, v] : j.items()) m[std::stoi(k)] = v.get<double>();
    return m;
}

}  // namespace

void save_ablation_report(const AblationReport& rep, const std::string& json_path) {
    json j;
    j["format"] = "resstream-ablation-report-v1";
    j["addr"] = rep.addr.str();
    j["weights_id"] = rep.weights_id;
    j["experiment_seed"] = rep.experiment_seed;
    j["trials"] = rep.trials;
    j["relaxation"] = rep.relaxation;
    j["passing_channels"] = rep.passing_channels;
    json means = json::object();
    for (const auto& [c, m] : rep.channel_means) means[std::to_string(c)] = m;
    j["channel_means"] = means;
    j["percentages"] = rep.percentages;
    j["scale_ablate_acc"] = accs_to_json(rep.scale_ablate_acc);
    json controls = json::array();
    for (size_t t = 0; t < rep.control_sets.size(); ++t) {
        json c;
        c["trial"] = t;
        c["channels"] = rep.control_sets[t].channels;
        c["noscale_acc"] = rep.control_sets[t].noscale_acc;
        c["attempts"] = rep.control_sets[t].attempts;
        c["accs"] = accs_to_json(rep.rand_ablate_accs[t]);
        controls.push_back(c);
    }
    j["random_trials"] = controls;
    j["ratios"] = accs_to_json(rep.ratios);
    j["ratio_stderr"] = accs_to_json(rep.ratio_stderr);
    j["no_scale_ratio"] = rep.no_scale_ratio;
    j["no_scale_ratio_stderr"] = rep.no_scale_ratio_stderr;

    std::filesystem::create_directories(std::filesystem::path(json_path).parent_path());
    std::ofstream f(json_path);
    f << j.dump(2) << "\n";
    if (!f) throw std::runtime_error("cannot write report: " + json_path);
}

AblationReport load_ablation_report(const std::string& json_path) {
    std::ifstream f(json_path);
    if (!f) throw std::runtime_error("cannot open report: " + json_path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "resstream-ablation-report-v1")
        throw std::runtime_error("not an ablation report: " + json_path);
    AblationReport rep;
    rep.addr = BlockAddress::parse(j.at("addr").get<std::string>());
    rep.weights_id = j.value("weights_id", "");
    rep.experiment_seed = j.value("experiment_seed", 0ULL);
    rep.trials = j.at("trials").get<int>();
    rep.relaxation = j.value("relaxation", 0.0);
    rep.passing_channels = j.at("passing_channels").get<std::vector<int>>();
    for (const auto& [k, v] : j.at("channel_means").items())
        rep.channel_means.emplace_back(std::stoi(k), v.get<float>());
    std::sort(rep.channel_means.begin(), rep.channel_means.end());
    rep.percentages = j.at("percentages").get<std::vector<int>>();
    rep.scale_ablate_acc = accs_from_json(j.at("scale_ablate_acc"));
    for (const auto& c : j.at("random_trials")) {
        ControlSet cs;
        cs.channels = c.at("channels").get<std::vector<int>>();
        cs.noscale_acc = c.at("noscale_acc").get<double>();
        cs.attempts = c.value("attempts", 0);
        rep.control_sets.push_back(std::move(cs));
        rep.rand_ablate_accs.push_back(accs_from_json(c.at("accs")));
    }
    rep.ratios = accs_from_json(j.at("ratios"));
    rep.ratio_stderr = accs_from_json(j.at("ratio_stderr"));
    rep.no_scale_ratio = j.at("no_scale_ratio").get<double>();
    rep.no_scale_ratio_stderr = j.value("no_scale_ratio_stderr", 0.0);
    return rep;
}

void export_ablation_csv(const AblationReport& rep, const std::string& csv_path) {
    std::filesystem::create_directories(std::filesystem::path(csv_path).parent_path());
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot write csv: " + csv_path);
    f << "trial,percentage,scale_ablate_acc,rand_ablate_acc,ratio\n";
    std::vector<int> ps;
    ps.push_back(0);
    for (int p : rep.percentages) ps.push_back(p);
    for (size_t t = 0; t < rep.rand_ablate_accs.size(); ++t)
        for (int p : ps) {
            double sa = rep.scale_ablate_acc.at(p);
            double ra = rep.rand_ablate_accs[t].at(p);
            f << t << ',' << p << ',' << fmt_double(sa) << ',' << fmt_double(ra) << ','
              << fmt_double(sa / ra) << '\n';
        }
    if (!f) throw std::runtime_error("short write: " + csv_path);
}

}  // namespace resstream

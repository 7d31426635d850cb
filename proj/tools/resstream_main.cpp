// resstream — scale-invariance analysis pipeline for residual conv nets.
//
// Subcommands wire the library end to end: visualize (feature
// visualizations for one channel), screen (criteria over whole blocks),
// ablate (mean-ablation causal test), report (figure rendering), selftest
// (synthetic-oracle suite). One JSON config governs all stages; its hash
// stamps every artifact. Exit codes: 0 success, 1 runtime failure, 2 usage
// error, 3 partial completion.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "resstream/image_ops.hpp"

#include "resstream/config.hpp"
#include "resstream/logging.hpp"
#include "resstream/registry.hpp"
#include "resstream/report.hpp"
#include "resstream/toynets.hpp"
#include "resstream/util.hpp"

namespace fs = std::filesystem;
using namespace resstream;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Paths {
    fs::path out;
    std::string cfg_hash;

    fs::path fz_dir(const std::string& weights_id) const { return out / "fz" / weights_id; }
    fs::path verdicts(const std::string& block) const {
        return out / "verdicts" / ("verdicts_" + block + "_" + cfg_hash + ".csv");
    }
    fs::path summary() const { return out / "verdicts" / ("summary_" + cfg_hash + ".txt"); }
    fs::path report_json(const std::string& block) const {
        return out / "reports" / ("ablation_" + block + "_" + cfg_hash + ".json");
    }
    fs::path report_csv(const std::string& block) const {
        return out / "reports" / ("ablation_" + block + "_" + cfg_hash + ".csv");
    }
    fs::path grid_png(const std::string& block, int channel) const {
        return out / "figures" /
               ("grid_" + block + "_c" + std::to_string(channel) + "_" + cfg_hash + ".png");
    }
    fs::path ratio_png(const std::string& block) const {
        return out / "figures" / ("ratio_" + block + "_" + cfg_hash + ".png");
    }
    fs::path ratio_csv(const std::string& block) const {
        return out / "figures" / ("ratio_" + block + "_" + cfg_hash + ".csv");
    }
};

Paths make_paths(const PipelineConfig& cfg) { return Paths{fs::path(cfg.output_root), cfg.hash()}; }

PipelineConfig require_config(const std::string& path) {
    if (path.empty()) throw UsageError("missing --config");
    try {
        return load_config(path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

BlockAddress parse_block_arg(const std::string& s) {
    try {
        return BlockAddress::parse(s);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

ActivationCache post_cache_for(const Network& net, const DatasetSlice& slice, BlockAddress addr,
                               TapKind tap, const PipelineConfig& cfg) {
    std::string cache_root = cfg.effective_cache_root();
    auto hit = load_cache(cache_root, net.weights_id(), addr, tap,
                          preprocessing_descriptor(net.model()), transform_descriptor(0),
                          slice.fingerprint());
    if (hit) {
        log_info("cache_hit", {{"block", addr.str()}, {"tap", tap_name(tap)}});
        return *hit;
    }
    log_info("cache_sweep", {{"block", addr.str()},
                             {"tap", tap_name(tap)},
                             {"images", std::to_string(slice.size())}});
    ActivationCache cache = sweep_center_activations(net, slice, addr, tap, 0, cfg.workers);
    save_cache(cache, cache_root);
    return cache;
}

// ---- subcommands -------------------------------------------------------------

int cmd_visualize(const PipelineConfig& cfg, const std::string& block_str, int channel) {
    BlockAddress addr = parse_block_arg(block_str);
    Network net = load_network(cfg.weights_id, cfg.weights_root);
    if (!net.has_block(addr)) throw UsageError("block " + block_str + " does not exist");
    if (channel < 0 || channel >= net.channel_count(addr))
        throw UsageError("channel " + std::to_string(channel) + " out of range for block " +
                         block_str);
    Paths paths = make_paths(cfg);
    std::string store = paths.fz_dir(net.weights_id()).string();
    const TapKind taps[3] = {TapKind::In, TapKind::Pre, TapKind::Post};
    const FZMode modes[2] = {FZMode::CenterNeuron, FZMode::WholeChannel};
    for (TapKind tap : taps)
        for (FZMode mode : modes) {
            FZObjective obj{addr, tap, channel, mode};
            FeatureVisual fz = obtain_fz(net, obj, cfg.fz, store);
            log_info("fz_done", {{"block", addr.str()},
                                 {"tap", tap_name(tap)},
                                 {"channel", std::to_string(channel)},
                                 {"mode", fz_mode_name(mode)},
                                 {"achieved", fmt_float(fz.achieved_activation)},
                                 {"fingerprint", fz.config_fingerprint}});
        }
    return 0;
}

int cmd_screen(const PipelineConfig& cfg) {
    if (cfg.blocks.empty()) throw UsageError("config lists no blocks to screen");
    Network net = load_network(cfg.weights_id, cfg.weights_root);
    Paths paths = make_paths(cfg);
    std::string store = paths.fz_dir(net.weights_id()).string();

    std::ofstream summary;
    fs::create_directories(paths.summary().parent_path());
    summary.open(paths.summary());
    for (const std::string& block_str : cfg.blocks) {
        BlockAddress addr = parse_block_arg(block_str);
        std::vector<CriteriaVerdict> verdicts;
        fs::path table = paths.verdicts(block_str);
        if (fs::exists(table)) {
            verdicts = read_verdicts_csv(table.string());
            log_info("screen_resume", {{"block", block_str}, {"table", table.string()}});
        } else {
            verdicts = screen_blocks(net, {addr}, cfg.fz, cfg.criteria, cfg.workers, store);
            write_verdicts_csv(table.string(), verdicts);
        }
        int passers = static_cast<int>(passing_channels(verdicts, addr).size());
        int channels = net.channel_count(addr);
        char line[160];
        std::snprintf(line, sizeof(line), "block %s: %d of %d channels pass (~%.1f%%)",
                      block_str.c_str(), passers, channels, 100.0 * passers / channels);
        summary << line << "\n";
        log_info("screen_block_done", {{"block", block_str},
                                       {"passers", std::to_string(passers)},
                                       {"channels", std::to_string(channels)}});
    }
    return 0;
}

int cmd_ablate(const PipelineConfig& cfg, const std::string& block_str) {
    BlockAddress addr = parse_block_arg(block_str);
    Paths paths = make_paths(cfg);
    fs::path table = paths.verdicts(block_str);
    if (!fs::exists(table))
        throw std::runtime_error("no verdict table " + table.string() +
                                 "; run `resstream screen` first");
    std::vector<CriteriaVerdict> verdicts = read_verdicts_csv(table.string());
    std::vector<int> passers = passing_channels(verdicts, addr);
    if (passers.empty())
        throw std::runtime_error("block " + block_str +
                                 " has no criteria-passing channels; nothing to ablate");

    if (fs::exists(paths.report_json(block_str))) {
        log_info("ablate_resume", {{"block", block_str},
                                   {"report", paths.report_json(block_str).string()}});
        return 0;
    }
    if (cfg.dataset_root.empty()) throw UsageError("config has no dataset_root");

    Network net = load_network(cfg.weights_id, cfg.weights_root);
    DatasetSlice slice = load_dataset(cfg.dataset_root, cfg.subset_fraction, cfg.split_seed);
    ActivationCache cache = post_cache_for(net, slice, addr, TapKind::Post, cfg);

    ExperimentConfig ecfg;
    ecfg.percentages = cfg.percentages;
    ecfg.trials = cfg.trials;
    ecfg.relaxation = cfg.relaxation_for(addr);
    ecfg.screen_budget = cfg.screen_budget;
    ecfg.seed = cfg.experiment_seed;
    ecfg.workers = cfg.workers;

    AblationReport report = run_ablation_experiment(net, slice, addr, passers, cache, ecfg);
    save_ablation_report(report, paths.report_json(block_str).string());
    export_ablation_csv(report, paths.report_csv(block_str).string());
    log_info("ablate_done", {{"block", block_str},
                             {"no_scale_ratio", fmt_double(report.no_scale_ratio)}});
    return 0;
}

int cmd_report(const PipelineConfig& cfg) {
    Paths paths = make_paths(cfg);
    int rendered = 0;
    std::vector<std::string> missing;

    Network net;
    DatasetSlice slice;
    bool net_loaded = false, slice_loaded = false;
    auto ensure_net = [&]() -> Network& {
        if (!net_loaded) {
            net = load_network(cfg.weights_id, cfg.weights_root);
            net_loaded = true;
        }
        return net;
    };
    auto ensure_slice = [&]() -> DatasetSlice& {
        if (!slice_loaded) {
            if (cfg.dataset_root.empty()) throw std::runtime_error("config has no dataset_root");
            slice = load_dataset(cfg.dataset_root, cfg.subset_fraction, cfg.split_seed);
            slice_loaded = true;
        }
        return slice;
    };

    for (const std::string& block_str : cfg.blocks) {
        BlockAddress addr = parse_block_arg(block_str);

        if (fs::exists(paths.report_json(block_str))) {
            AblationReport rep = load_ablation_report(paths.report_json(block_str).string());
            render_ratio_plot(plot_spec_from_report(rep), paths.ratio_png(block_str).string(),
                              paths.ratio_csv(block_str).string());
            ++rendered;
        } else {
            missing.push_back("ablation report for block " + block_str + " (" +
                              paths.report_json(block_str).string() + ")");
        }

        fs::path table = paths.verdicts(block_str);
        if (!fs::exists(table)) {
            missing.push_back("verdict table for block " + block_str + " (" + table.string() +
                              ")");
            continue;
        }
        std::vector<int> passers = passing_channels(read_verdicts_csv(table.string()), addr);
        if (passers.empty()) continue;

        Network& n = ensure_net();
        DatasetSlice& s = ensure_slice();
        std::string store = paths.fz_dir(n.weights_id()).string();
        const TapKind taps[3] = {TapKind::In, TapKind::Pre, TapKind::Post};
        std::array<ActivationCache, 3> caches;
        for (int t = 0; t < 3; ++t) caches[static_cast<size_t>(t)] =
            post_cache_for(n, s, addr, taps[t], cfg);

        for (int ch : passers) {
            ChannelGridInputs grid;
            grid.addr = addr;
            grid.channel = ch;
            for (int t = 0; t < 3; ++t) {
                GridCellSet& cells = grid.per_tap[static_cast<size_t>(t)];
                for (FZMode mode : {FZMode::CenterNeuron, FZMode::WholeChannel}) {
                    FZObjective obj{addr, taps[t], ch, mode};
                    try {
                        FeatureVisual fz = obtain_fz(n, obj, cfg.fz, store);
                        (mode == FZMode::CenterNeuron ? cells.center_fz : cells.whole_fz) =
                            fz.image;
                    } catch (const std::exception& e) {
                        log_warn("grid_fz_failed", {{"block", block_str},
                                                    {"channel", std::to_string(ch)},
                                                    {"tap", tap_name(taps[t])},
                                                    {"error", e.what()}});
                    }
                }
                for (int idx : top_k_activating_images(caches[static_cast<size_t>(t)], ch, 9)) {
                    Tensor img = load_image_rgb01(s.paths[static_cast<size_t>(idx)]);
                    cells.top9.push_back(
                        center_crop(resize_short_side(img, 256, true), 224));
                }
            }
            auto warnings = render_channel_grid(grid, paths.grid_png(block_str, ch).string());
            for (const auto& w : warnings) {
                log_warn("grid_warning", {{"detail", w}});
                missing.push_back(w);
            }
            ++rendered;
        }
    }

    if (rendered == 0) {
        std::string what = "report: nothing to render; missing inputs:";
        for (const auto& m : missing) what += "\n  - " + m;
        throw std::runtime_error(what);
    }
    if (!missing.empty()) {
        for (const auto& m : missing) log_warn("report_missing", {{"detail", m}});
        return 3;
    }
    return 0;
}

int cmd_selftest(bool quick) {
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
        if (!ok) ++failures;
    };

    // Scale transform basics.
    {
        Tensor gray = Tensor::full({3, 224, 224}, 0.5f);
        Tensor up = scale_up(gray);
        float err = 0;
        for (int64_t i = 0; i < up.numel(); ++i)
            err = std::max(err, std::abs(up.data()[i] - 0.5f));
        check("scale transform preserves constants", err < 1e-6f);
        check("10% eval crop is 231 px", eval_scale_crop_size(10) == 231);
        check("50% eval crop is 128 px", eval_scale_crop_size(50) == 128);
    }

    // Residual identity on a random synthetic net.
    {
        Network net = toynets::build(toynets::planted_scale_pair_spec());
        auto rng = make_rng(17);
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        Tensor img({3, 224, 224});
        for (auto& v : img.vec()) v = u(rng);
        Tensor x = net.normalize_input(img);
        auto maps = net.observe(
            x, {{{1, 0}, TapKind::In}, {{1, 0}, TapKind::Pre}, {{1, 0}, TapKind::Post}});
        float err = 0;
        for (int64_t i = 0; i < maps[2].numel(); ++i) {
            float expect = std::max(0.0f, maps[0].data()[i] + maps[1].data()[i]);
            err = std::max(err, std::abs(maps[2].data()[i] - expect));
        }
        check("Post = ReLU(In + Pre)", err <= 1e-5f);
    }

    // Planted screening finds exactly the planted channel.
    {
        Network net = toynets::build(toynets::planted_scale_pair_spec());
        FZConfig fz;
        fz.steps = quick ? 96 : 256;
        fz.jitter_primary = 0;
        fz.seed = 3;
        auto verdicts = screen_blocks(net, {{1, 0}}, fz, {}, 0, "");
        auto passers = passing_channels(verdicts, {1, 0});
        check("planted channel screening", passers == std::vector<int>{0});
    }

    // Ratio aggregation arithmetic.
    {
        bool ok = std::abs(eq3_ratio(0.5, {0.5, 0.25}) - 1.5) < 1e-12 &&
                  std::abs(eq3_ratio(0.5, {0.5}) - 1.0) < 1e-12;
        check("ratio aggregation", ok);
    }

    std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scale-invariance analysis for residual convolutional networks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string block_str;
    int channel = -1;
    int workers_override = -1;
    bool quick = false;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "pipeline config (JSON)");
        sub->add_option("--workers", workers_override, "worker override");
    };

    CLI::App* viz = app.add_subcommand("visualize", "feature visualizations for one channel");
    add_config(viz);
    viz->add_option("--block", block_str, "block address, e.g. 2.1")->required();
    viz->add_option("--channel", channel, "channel index")->required();

    CLI::App* screen = app.add_subcommand("screen", "screen configured blocks for invariance");
    add_config(screen);

    CLI::App* ablate = app.add_subcommand("ablate", "mean-ablation causal test for one block");
    add_config(ablate);
    ablate->add_option("--block", block_str, "block address, e.g. 2.1")->required();

    CLI::App* report = app.add_subcommand("report", "render grids and ratio plots");
    add_config(report);

    CLI::App* selftest = app.add_subcommand("selftest", "run the synthetic-oracle suite");
    selftest->add_flag("--quick", quick, "reduced optimization steps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (selftest->parsed()) return cmd_selftest(quick);
        PipelineConfig cfg = require_config(config_path);
        if (workers_override >= 0) cfg.workers = workers_override;
        log_info("config", {{"hash", cfg.hash()}, {"weights_id", cfg.weights_id}});
        if (viz->parsed()) return cmd_visualize(cfg, block_str, channel);
        if (screen->parsed()) return cmd_screen(cfg);
        if (ablate->parsed()) return cmd_ablate(cfg, block_str);
        if (report->parsed()) return cmd_report(cfg);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

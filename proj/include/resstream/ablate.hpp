#pragma once

#include <map>
#include <string>
#include <vector>

#include "resstream/actcache.hpp"
#include "resstream/dataset.hpp"
#include "resstream/network.hpp"

namespace resstream {

/// Evaluation-time scale transform crop size: 256 - floor(256 * p / 100).
/// Precondition: 0 <= percentage < 100.
int eval_scale_crop_size(int percentage);

/// Applies the evaluation scale transform to a short-side-256 image:
/// center-crop to eval_scale_crop_size(p), then bilinear resize to 224.
/// Percentage 0 is the canonical untransformed pipeline (center-crop 224,
/// no resize).
Tensor apply_eval_scale(const Tensor& short256, int percentage);

/// Builds the ablation spec from a Post-tap activation cache computed on the
/// untransformed pipeline: each channel's overwrite value is its center-
/// neuron mean over the evaluation set.
AblationSpec make_ablation_spec(BlockAddress addr, const std::vector<int>& channels,
                                const ActivationCache& post_cache);

/// Top-1 accuracy over the slice with the scale transform applied to every
/// image. Aborts on non-finite logits.
double evaluate_accuracy(const Network& net, const DatasetSlice& slice, int percentage,
                         const AblationSpec* ablation = nullptr, int workers = 0);

/// Ratio aggregation across trials: mean_i(scale_acc / rand_accs[i]).
double eq3_ratio(double scale_acc, const std::vector<double>& rand_accs);

struct ControlSet {
    std::vector<int> channels;
    double noscale_acc = 0.0;
    int attempts = 0;
};

/// Draws `n_sets` random size-k sets from the block's non-passing channels
/// whose no-scale ablated accuracy is at most `scale_set_noscale_acc +
/// relaxation`. Each set is screened independently with a bounded attempt
/// budget; exhaustion is an error that reports the attempts made.
std::vector<ControlSet> screen_random_controls(const Network& net, const DatasetSlice& slice,
                                               BlockAddress addr,
                                               const std::vector<int>& passing_set,
                                               const ActivationCache& post_cache,
                                               double scale_set_noscale_acc, double relaxation,
                                               int n_sets, int budget_per_set, uint64_t seed,
                                               int workers = 0);

struct ExperimentConfig {
    std::vector<int> percentages{10, 20, 30, 40, 50};
    int trials = 10;
    double relaxation = 0.0;
    int screen_budget = 200;
    uint64_t seed = 0;
    int workers = 0;
};

struct AblationReport {
    BlockAddress addr;
    std::string weights_id;
    uint64_t experiment_seed = 0;
    int trials = 0;
    double relaxation = 0.0;
    std::vector<int> passing_channels;
    std::vector<std::pair<int, float>> channel_means;
    std::vector<int> percentages;
    std::map<int, double> scale_ablate_acc;            // percentage (0 included) -> accuracy
    std::vector<ControlSet> control_sets;              // one per trial
    std::vector<std::map<int, double>> rand_ablate_accs;  // per trial: percentage -> accuracy
    std::map<int, double> ratios;                      // percentage -> mean ratio
    std::map<int, double> ratio_stderr;                // standard error across trials
    double no_scale_ratio = 0.0;
    double no_scale_ratio_stderr = 0.0;
};

/// The full causal test for one block: channel means, scale-set accuracies
/// across the percentage sweep, per-trial control screening and accuracies,
/// and ratio aggregation. All randomness flows from cfg.seed.
AblationReport run_ablation_experiment(const Network& net, const DatasetSlice& slice,
                                       BlockAddress addr, const std::vector<int>& passing_set,
                                       const ActivationCache& post_cache,
                                       const ExperimentConfig& cfg);

void save_ablation_report(const AblationReport& report, const std::string& json_path);
AblationReport load_ablation_report(const std::string& json_path);
/// One row per trial x percentage, plus the no-scale rows.
void export_ablation_csv(const AblationReport& report, const std::string& csv_path);

}  // namespace resstream

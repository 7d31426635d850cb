#include "resstream/scalecrit.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "resstream/image_ops.hpp"
#include "resstream/logging.hpp"
#include "resstream/util.hpp"

namespace resstream {

Tensor scale_up(const Tensor& img224) {
    if (img224.ndim() != 3 || img224.dim(1) != 224 || img224.dim(2) != 224)
        throw std::invalid_argument("scale_up: expected a 224x224 image, got " +
                                    img224.shape_str());
    return resize_bilinear(center_crop(img224, 112), 224, 224);
}

CriteriaVerdict judge_criteria(BlockAddress addr, int channel, double pre_in_raw,
                               double pre_scaled_in, double post_in, double post_pre,
                               const CriteriaBounds& bounds) {
    CriteriaVerdict v;
    v.addr = addr;
    v.channel = channel;
    v.pre_in_raw = pre_in_raw;
    v.eq1_lhs = std::max(0.0, pre_in_raw);
    v.eq1_rhs = pre_scaled_in;
    v.post_in = post_in;
    v.post_pre = post_pre;
    v.passes_eq1 = v.eq1_lhs < v.eq1_rhs;
    if (post_pre == 0.0) {
        // A zero Post response to the channel's own Pre FZ contradicts
        // invariance; the ratio is undefined and the channel fails.
        v.degenerate = true;
        v.eq2_ratio = std::numeric_limits<double>::quiet_NaN();
        v.passes_eq2 = false;
    } else {
        v.eq2_ratio = post_in / post_pre;
        v.passes_eq2 = bounds.ratio_low < v.eq2_ratio && v.eq2_ratio < bounds.ratio_high;
    }
    v.passes = v.passes_eq1 && v.passes_eq2;
    return v;
}

CriteriaVerdict evaluate_criteria(const Network& net, BlockAddress addr, int channel,
                                  const FeatureVisual& fz_in, const FeatureVisual& fz_pre,
                                  const CriteriaBounds& bounds) {
    if (!(fz_in.objective.addr == addr) || fz_in.objective.tap != TapKind::In ||
        fz_in.objective.channel != channel || fz_in.objective.mode != FZMode::CenterNeuron)
        throw std::invalid_argument("evaluate_criteria: fz_in does not match (addr, channel)");
    if (!(fz_pre.objective.addr == addr) || fz_pre.objective.tap != TapKind::Pre ||
        fz_pre.objective.channel != channel || fz_pre.objective.mode != FZMode::CenterNeuron)
        throw std::invalid_argument("evaluate_criteria: fz_pre does not match (addr, channel)");

    double pre_on_in =
        net.tap_center(net.normalize_input(fz_in.image), addr, TapKind::Pre, channel);
    double pre_on_scaled =
        net.tap_center(net.normalize_input(scale_up(fz_in.image)), addr, TapKind::Pre, channel);
    double post_on_in =
        net.tap_center(net.normalize_input(fz_in.image), addr, TapKind::Post, channel);
    double post_on_pre =
        net.tap_center(net.normalize_input(fz_pre.image), addr, TapKind::Post, channel);

    CriteriaVerdict v =
        judge_criteria(addr, channel, pre_on_in, pre_on_scaled, post_on_in, post_on_pre, bounds);
    v.fz_in_fp = fz_in.config_fingerprint;
    v.fz_pre_fp = fz_pre.config_fingerprint;
    return v;
}

std::vector<CriteriaVerdict> screen_blocks(const Network& net,
                                           const std::vector<BlockAddress>& blocks,
                                           const FZConfig& cfg, const CriteriaBounds& bounds,
                                           int workers, const std::string& fz_store_dir) {
    if (blocks.empty()) throw std::invalid_argument("screen_blocks: empty block list");
    struct Job {
        BlockAddress addr;
        int channel;
    };
    std::vector<Job> jobs;
    for (BlockAddress addr : blocks) {
        int channels = net.channel_count(addr);  // validates the address
        for (int c = 0; c < channels; ++c) jobs.push_back({addr, c});
    }
    std::vector<CriteriaVerdict> verdicts(jobs.size());
    parallel_for(static_cast<int64_t>(jobs.size()), workers, [&](int64_t i) {
        const Job& job = jobs[static_cast<size_t>(i)];
        try {
            FZObjective in_obj{job.addr, TapKind::In, job.channel, FZMode::CenterNeuron};
            FZObjective pre_obj{job.addr, TapKind::Pre, job.channel, FZMode::CenterNeuron};
            FeatureVisual fz_in = obtain_fz(net, in_obj, cfg, fz_store_dir);
            FeatureVisual fz_pre = obtain_fz(net, pre_obj, cfg, fz_store_dir);
            verdicts[static_cast<size_t>(i)] =
                evaluate_criteria(net, job.addr, job.channel, fz_in, fz_pre, bounds);
        } catch (const std::exception& e) {
            CriteriaVerdict v;
            v.addr = job.addr;
            v.channel = job.channel;
            v.error = e.what();
            verdicts[static_cast<size_t>(i)] = v;
            log_warn("screen_channel_failed", {{"block", job.addr.str()},
                                               {"channel", std::to_string(job.channel)},
                                               {"error", e.what()}});
        }
    });
    return verdicts;
}

namespace {

std::string csv_escape(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c == ',' || c == '\n') c = ';';
    return out;
}

}  // namespace

void write_verdicts_csv(const std::string& path, const std::vector<CriteriaVerdict>& verdicts) {
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write verdict table: " + path);
    f << "stage,block,channel,pre_in_raw,eq1_lhs,eq1_rhs,post_in,post_pre,eq2_ratio,"
         "passes_eq1,passes_eq2,passes,degenerate,error,fz_in_fp,fz_pre_fp,fz_post_fp\n";
    for (const auto& v : verdicts) {
        f << v.addr.stage << ',' << v.addr.block << ',' << v.channel << ','
          << fmt_double(v.pre_in_raw) << ',' << fmt_double(v.eq1_lhs) << ','
          << fmt_double(v.eq1_rhs) << ',' << fmt_double(v.post_in) << ','
          << fmt_double(v.post_pre) << ',' << fmt_double(v.eq2_ratio) << ','
          << (v.passes_eq1 ? 1 : 0) << ',' << (v.passes_eq2 ? 1 : 0) << ','
          << (v.passes ? 1 : 0) << ',' << (v.degenerate ? 1 : 0) << ','
          << csv_escape(v.error) << ',' << v.fz_in_fp << ',' << v.fz_pre_fp << ','
          << v.fz_post_fp << '\n';
    }
    if (!f) throw std::runtime_error("short write: " + path);
}

std::vector<CriteriaVerdict> read_verdicts_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open verdict table: " + path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("stage,block,channel,", 0) != 0)
        throw std::runtime_error("not a verdict table: " + path);
    std::vector<CriteriaVerdict> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 17) cells.emplace_back();
        CriteriaVerdict v;
        v.addr.stage = std::stoi(cells[0]);
        v.addr.block = std::stoi(cells[1]);
        v.channel = std::stoi(cells[2]);
        v.pre_in_raw = std::stod(cells[3]);
        v.eq1_lhs = std::stod(cells[4]);
        v.eq1_rhs = std::stod(cells[5]);
        v.post_in = std::stod(cells[6]);
        v.post_pre = std::stod(cells[7]);
        v.eq2_ratio = std::stod(cells[8]);
        v.passes_eq1 = cells[9] == "1";
        v.passes_eq2 = cells[10] == "1";
        v.passes = cells[11] == "1";
        v.degenerate = cells[12] == "1";
        v.error = cells[13];
        v.fz_in_fp = cells[14];
        v.fz_pre_fp = cells[15];
        v.fz_post_fp = cells[16];
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<int> passing_channels(const std::vector<CriteriaVerdict>& verdicts,
                                  BlockAddress addr) {
    std::vector<int> out;
    for (const auto& v : verdicts)
        if (v.addr == addr && v.passes) out.push_back(v.channel);
    return out;
}

}  // namespace resstream

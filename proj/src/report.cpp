#include "resstream/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "resstream/image_ops.hpp"
#include "resstream/util.hpp"

namespace resstream {

namespace {

cv::Mat to_bgr(const Tensor& rgb01) {
    int h = rgb01.dim(1), w = rgb01.dim(2);
    cv::Mat img(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            auto q = [&](int c) {
                float v = std::clamp(rgb01.at(c, y, x), 0.0f, 1.0f);
                return static_cast<unsigned char>(std::lround(v * 255.0f));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    return img;
}

void blit(cv::Mat& canvas, const cv::Mat& cell, int x, int y) {
    cell.copyTo(canvas(cv::Rect(x, y, cell.cols, cell.rows)));
}

cv::Mat placeholder_cell() {
    cv::Mat cell(kGridCell, kGridCell, CV_8UC3, cv::Scalar(128, 128, 128));
    cv::line(cell, {12, 12}, {kGridCell - 12, kGridCell - 12}, cv::Scalar(0, 0, 200), 3);
    cv::line(cell, {kGridCell - 12, 12}, {12, kGridCell - 12}, cv::Scalar(0, 0, 200), 3);
    return cell;
}

cv::Mat fz_cell(const Tensor& img) {
    cv::Mat m = to_bgr(img);
    if (m.rows != kGridCell || m.cols != kGridCell) {
        Tensor r = resize_bilinear_antialias(img, kGridCell, kGridCell);
        m = to_bgr(r);
    }
    return m;
}

cv::Mat mosaic_cell(const std::vector<Tensor>& images) {
    cv::Mat cell(kGridCell, kGridCell, CV_8UC3, cv::Scalar(255, 255, 255));
    for (int i = 0; i < 9; ++i) {
        Tensor thumb = resize_bilinear_antialias(images[static_cast<size_t>(i)], kMosaicTile,
                                                 kMosaicTile);
        int r = i / 3, c = i % 3;
        blit(cell, to_bgr(thumb), c * (kMosaicTile + kMosaicGap), r * (kMosaicTile + kMosaicGap));
    }
    return cell;
}

void write_png(const cv::Mat& canvas, const std::string& path) {
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    if (!cv::imwrite(path, canvas)) throw std::runtime_error("failed to write " + path);
}

}  // namespace

std::vector<std::string> render_channel_grid(const ChannelGridInputs& grid,
                                             const std::string& png_path) {
    std::vector<std::string> warnings;
    int side = grid_canvas_side();
    cv::Mat canvas(side, side, CV_8UC3, cv::Scalar(255, 255, 255));
    const char* taps[3] = {"in", "pre", "post"};
    for (int col = 0; col < 3; ++col) {
        const GridCellSet& cells = grid.per_tap[static_cast<size_t>(col)];
        auto place = [&](int row, const std::optional<Tensor>& img, const char* what) {
            auto [x, y] = grid_cell_origin(row, col);
            if (img) {
                blit(canvas, fz_cell(*img), x, y);
            } else {
                blit(canvas, placeholder_cell(), x, y);
                warnings.push_back("missing " + std::string(what) + " FZ for " +
                                   grid.addr.str() + " channel " + std::to_string(grid.channel) +
                                   " tap " + taps[col]);
            }
        };
        place(0, cells.center_fz, "center-neuron");
        place(1, cells.whole_fz, "whole-channel");
        auto [x, y] = grid_cell_origin(2, col);
        if (cells.top9.empty()) {
            blit(canvas, placeholder_cell(), x, y);
            warnings.push_back("missing top-9 images for " + grid.addr.str() + " channel " +
                               std::to_string(grid.channel) + " tap " + taps[col]);
        } else if (cells.top9.size() != 9) {
            throw std::invalid_argument("top-9 mosaic for " + grid.addr.str() + " tap " +
                                        taps[col] + " has " + std::to_string(cells.top9.size()) +
                                        " images; refusing to truncate");
        } else {
            blit(canvas, mosaic_cell(cells.top9), x, y);
        }
    }
    write_png(canvas, png_path);
    return warnings;
}

RatioPlotSpec plot_spec_from_report(const AblationReport& rep) {
    RatioPlotSpec spec;
    spec.addr = rep.addr;
    spec.no_scale_ratio = rep.no_scale_ratio;
    for (int p : rep.percentages) {
        spec.percentages.push_back(p);
        spec.ratios.push_back(rep.ratios.at(p));
        spec.stderrs.push_back(rep.ratio_stderr.at(p));
        std::vector<double> per_trial;
        for (const auto& accs : rep.rand_ablate_accs)
            per_trial.push_back(rep.scale_ablate_acc.at(p) / accs.at(p));
        spec.per_trial_ratios.push_back(std::move(per_trial));
    }
    return spec;
}

void render_ratio_plot(const RatioPlotSpec& spec, const std::string& png_path,
                       const std::string& csv_path) {
    if (spec.percentages.empty() || spec.percentages.size() != spec.ratios.size() ||
        spec.ratios.size() != spec.stderrs.size())
        throw std::invalid_argument("ratio plot: inconsistent or empty series");

    const int W = 900, H = 600, L = 90, R = 40, T = 50, B = 80;
    cv::Mat canvas(H, W, CV_8UC3, cv::Scalar(255, 255, 255));

    double ymin = spec.no_scale_ratio, ymax = spec.no_scale_ratio;
    for (size_t i = 0; i < spec.ratios.size(); ++i) {
        ymin = std::min(ymin, spec.ratios[i] - spec.stderrs[i]);
        ymax = std::max(ymax, spec.ratios[i] + spec.stderrs[i]);
    }
    for (const auto& trial : spec.per_trial_ratios)
        for (double r : trial) {
            ymin = std::min(ymin, r);
            ymax = std::max(ymax, r);
        }
    double pad = std::max(1e-4, (ymax - ymin) * 0.12);
    ymin -= pad;
    ymax += pad;

    int pmin = *std::min_element(spec.percentages.begin(), spec.percentages.end());
    int pmax = *std::max_element(spec.percentages.begin(), spec.percentages.end());
    double xspan = std::max(1, pmax - pmin);
    auto xpix = [&](double p) {
        return L + static_cast<int>(std::lround((p - pmin) / xspan * (W - L - R)));
    };
    auto ypix = [&](double v) {
        return T + static_cast<int>(std::lround((ymax - v) / (ymax - ymin) * (H - T - B)));
    };

    const cv::Scalar axis(60, 60, 60), blue(200, 120, 0), black(0, 0, 0), gray(180, 180, 180);
    cv::rectangle(canvas, {L, T}, {W - R, H - B}, axis, 1);

    // y ticks: 5 evenly spaced values
    for (int i = 0; i <= 4; ++i) {
        double v = ymin + (ymax - ymin) * i / 4.0;
        int y = ypix(v);
        cv::line(canvas, {L - 5, y}, {L, y}, axis, 1);
        char label[32];
        std::snprintf(label, sizeof(label), "%.4f", v);
        cv::putText(canvas, label, {8, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.42, black, 1,
                    cv::LINE_8);
    }
    for (size_t i = 0; i < spec.percentages.size(); ++i) {
        int x = xpix(spec.percentages[i]);
        cv::line(canvas, {x, H - B}, {x, H - B + 5}, axis, 1);
        std::string label = std::to_string(spec.percentages[i]) + "%";
        cv::putText(canvas, label, {x - 14, H - B + 24}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1,
                    cv::LINE_8);
    }
    cv::putText(canvas, "scale transform percentage", {W / 2 - 120, H - 28},
                cv::FONT_HERSHEY_SIMPLEX, 0.5, black, 1, cv::LINE_8);
    cv::putText(canvas, "block " + spec.addr.str() + " accuracy ratio (scale / random ablation)",
                {L, 28}, cv::FONT_HERSHEY_SIMPLEX, 0.55, black, 1, cv::LINE_8);

    // no-scale reference line (dashed)
    {
        int y = ypix(spec.no_scale_ratio);
        for (int x = L; x < W - R; x += 14)
            cv::line(canvas, {x, y}, {std::min(x + 7, W - R), y}, blue, 2);
        cv::putText(canvas, "no-scale ratio", {W - R - 130, y - 8}, cv::FONT_HERSHEY_SIMPLEX,
                    0.45, blue, 1, cv::LINE_8);
    }

    // per-trial scatter behind the means
    for (size_t i = 0; i < spec.per_trial_ratios.size(); ++i) {
        int x = xpix(spec.percentages[i]);
        for (double r : spec.per_trial_ratios[i])
            cv::circle(canvas, {x + 6, ypix(r)}, 2, gray, cv::FILLED);
    }

    for (size_t i = 0; i < spec.percentages.size(); ++i) {
        int x = xpix(spec.percentages[i]);
        int y = ypix(spec.ratios[i]);
        int yl = ypix(spec.ratios[i] - spec.stderrs[i]);
        int yh = ypix(spec.ratios[i] + spec.stderrs[i]);
        cv::line(canvas, {x, yl}, {x, yh}, black, 2);
        cv::line(canvas, {x - 5, yl}, {x + 5, yl}, black, 2);
        cv::line(canvas, {x - 5, yh}, {x + 5, yh}, black, 2);
        cv::circle(canvas, {x, y}, 5, black, cv::FILLED);
        if (i + 1 < spec.percentages.size())
            cv::line(canvas, {x, y},
                     {xpix(spec.percentages[i + 1]), ypix(spec.ratios[i + 1])}, black, 1);
    }

    write_png(canvas, png_path);

    std::filesystem::create_directories(std::filesystem::path(csv_path).parent_path());
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot write " + csv_path);
    f << "percentage,mean_ratio,stderr\n";
    f << "0," << fmt_double(spec.no_scale_ratio) << ",0\n";
    for (size_t i = 0; i < spec.percentages.size(); ++i)
        f << spec.percentages[i] << ',' << fmt_double(spec.ratios[i]) << ','
          << fmt_double(spec.stderrs[i]) << '\n';
    if (!f) throw std::runtime_error("short write: " + csv_path);
}

}  // namespace resstream

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "resstream/ablate.hpp"
#include "resstream/network.hpp"
#include "resstream/tensor.hpp"

namespace resstream {

// Grid geometry, fixed so rendered layouts are verifiable.
inline constexpr int kGridCell = 224;
inline constexpr int kGridGap = 4;
inline constexpr int kMosaicTile = 74;
inline constexpr int kMosaicGap = 1;  // 3*74 + 2*1 == 224

/// Top-left pixel of a grid cell; rows and columns are 0-based.
inline std::pair<int, int> grid_cell_origin(int row, int col) {
    return {col * (kGridCell + kGridGap), row * (kGridCell + kGridGap)};
}
inline int grid_canvas_side() { return 3 * kGridCell + 2 * kGridGap; }

/// Cells for one tap column: the center-neuron FZ, the whole-channel FZ and
/// the top-9 natural images (references resolved to [0,1] RGB tensors).
struct GridCellSet {
    std::optional<Tensor> center_fz;
    std::optional<Tensor> whole_fz;
    std::vector<Tensor> top9;  // exactly 9 when present
};

/// Column order is In, Pre, Post left to right; row order is center-neuron
/// FZ, whole-channel FZ, top-9 mosaic.
struct ChannelGridInputs {
    BlockAddress addr;
    int channel = 0;
    std::array<GridCellSet, 3> per_tap;  // indexed by In, Pre, Post
};

/// Renders the 3x3 grid as a lossless PNG. Missing FZ cells render as an
/// explicit placeholder and produce a warning record; a top-9 list that is
/// present but not exactly 9 images is an error (mosaics are never silently
/// truncated).
std::vector<std::string> render_channel_grid(const ChannelGridInputs& grid,
                                             const std::string& png_path);

struct RatioPlotSpec {
    BlockAddress addr;
    std::vector<int> percentages;
    std::vector<double> ratios;
    std::vector<double> stderrs;
    double no_scale_ratio = 0.0;
    std::vector<std::vector<double>> per_trial_ratios;  // optional scatter layer
};

RatioPlotSpec plot_spec_from_report(const AblationReport& report);

/// Draws the ratio-vs-scale plot (points, standard-error bars, horizontal
/// no-scale reference line, optional per-trial scatter) and exports the
/// plotted numbers as CSV. Every value comes from the persisted report.
void render_ratio_plot(const RatioPlotSpec& spec, const std::string& png_path,
                       const std::string& csv_path);

}  // namespace resstream

#include <doctest.h>

#include <fstream>

#include "resstream/report.hpp"
#include "testutil.hpp"

using namespace resstream;

TEST_SUITE_BEGIN("report");

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

ChannelGridInputs solid_grid() {
    ChannelGridInputs grid;
    grid.addr = {2, 1};
    grid.channel = 15;
    float shades[3] = {0.2f, 0.5f, 0.8f};
    for (int t = 0; t < 3; ++t) {
        auto& cells = grid.per_tap[static_cast<size_t>(t)];
        cells.center_fz = Tensor::full({3, 224, 224}, shades[t]);
        cells.whole_fz = Tensor::full({3, 224, 224}, 1.0f - shades[t]);
        for (int i = 0; i < 9; ++i)
            cells.top9.push_back(Tensor::full({3, 224, 224}, 0.1f * (i + 1)));
    }
    return grid;
}

}  // namespace

TEST_CASE("grid layout places cells at the documented geometry") {
    testutil::TempDir tmp("grid");
    std::string path = (tmp.path / "grid.png").string();
    auto warnings = render_channel_grid(solid_grid(), path);
    CHECK(warnings.empty());

    Tensor canvas = load_image_rgb01(path);
    REQUIRE(canvas.dim(1) == grid_canvas_side());
    REQUIRE(canvas.dim(2) == grid_canvas_side());
    float shades[3] = {0.2f, 0.5f, 0.8f};
    for (int col = 0; col < 3; ++col) {
        auto [x0, y0] = grid_cell_origin(0, col);
        CHECK(canvas.at(0, y0 + 112, x0 + 112) ==
              doctest::Approx(shades[col]).epsilon(0.01));
        auto [x1, y1] = grid_cell_origin(1, col);
        CHECK(canvas.at(0, y1 + 112, x1 + 112) ==
              doctest::Approx(1.0f - shades[col]).epsilon(0.01));
    }
    // gap pixels stay white
    CHECK(canvas.at(0, kGridCell + 1, 10) == doctest::Approx(1.0f).epsilon(0.01));

    // mosaic tiles land on the tile lattice: tile (1,1) of the top-9 cell
    auto [mx, my] = grid_cell_origin(2, 0);
    int tx = mx + (kMosaicTile + kMosaicGap) + kMosaicTile / 2;
    int ty = my + (kMosaicTile + kMosaicGap) + kMosaicTile / 2;
    CHECK(canvas.at(0, ty, tx) == doctest::Approx(0.5f).epsilon(0.02));  // image index 4
}

TEST_CASE("missing cells render placeholders with warning records") {
    testutil::TempDir tmp("gridmiss");
    ChannelGridInputs grid = solid_grid();
    grid.per_tap[1].center_fz.reset();
    grid.per_tap[2].top9.clear();
    auto warnings = render_channel_grid(grid, (tmp.path / "g.png").string());
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].find("center-neuron") != std::string::npos);
    CHECK(warnings[1].find("top-9") != std::string::npos);
}

TEST_CASE("short mosaics are an error, never truncated") {
    testutil::TempDir tmp("gridshort");
    ChannelGridInputs grid = solid_grid();
    grid.per_tap[0].top9.resize(5);
    CHECK_THROWS_WITH_AS(render_channel_grid(grid, (tmp.path / "g.png").string()),
                         doctest::Contains("refusing to truncate"), std::invalid_argument);
}

TEST_CASE("re-rendering is byte identical") {
    testutil::TempDir tmp("gridbytes");
    std::string a = (tmp.path / "a.png").string();
    std::string b = (tmp.path / "b.png").string();
    render_channel_grid(solid_grid(), a);
    render_channel_grid(solid_grid(), b);
    CHECK(slurp(a) == slurp(b));

    RatioPlotSpec spec;
    spec.addr = {2, 1};
    spec.percentages = {10, 20, 30, 40, 50};
    spec.ratios = {0.99, 0.985, 0.98, 0.983, 0.978};
    spec.stderrs = {0.002, 0.001, 0.002, 0.001, 0.003};
    spec.no_scale_ratio = 0.995;
    std::string pa = (tmp.path / "pa.png").string();
    std::string pb = (tmp.path / "pb.png").string();
    render_ratio_plot(spec, pa, (tmp.path / "pa.csv").string());
    render_ratio_plot(spec, pb, (tmp.path / "pb.csv").string());
    CHECK(slurp(pa) == slurp(pb));
}

TEST_CASE("plot export reproduces the report numbers exactly") {
    AblationReport rep;
    rep.addr = {3, 1};
    rep.percentages = {10, 20};
    rep.trials = 2;
    rep.scale_ablate_acc = {{0, 0.5}, {10, 0.48}, {20, 0.46}};
    rep.rand_ablate_accs = {{{0, 0.52}, {10, 0.5}, {20, 0.5}},
                            {{0, 0.51}, {10, 0.49}, {20, 0.47}}};
    for (int p : rep.percentages) {
        std::vector<double> r;
        for (auto& accs : rep.rand_ablate_accs) r.push_back(accs.at(p));
        rep.ratios[p] = eq3_ratio(rep.scale_ablate_acc.at(p), r);
        rep.ratio_stderr[p] = 0.001;
    }
    rep.no_scale_ratio =
        eq3_ratio(rep.scale_ablate_acc.at(0), {rep.rand_ablate_accs[0].at(0),
                                               rep.rand_ablate_accs[1].at(0)});
    RatioPlotSpec spec = plot_spec_from_report(rep);
    CHECK(spec.ratios[0] == rep.ratios.at(10));
    CHECK(spec.per_trial_ratios[0][1] == rep.scale_ablate_acc.at(10) /
                                             rep.rand_ablate_accs[1].at(10));

    testutil::TempDir tmp("plotcsv");
    std::string csv = (tmp.path / "r.csv").string();
    render_ratio_plot(spec, (tmp.path / "r.png").string(), csv);

    std::ifstream f(csv);
    std::string line;
    std::getline(f, line);
    CHECK(line == "percentage,mean_ratio,stderr");
    std::getline(f, line);  // no-scale row
    CHECK(line.rfind("0,", 0) == 0);
    CHECK(line.find(fmt_double(rep.no_scale_ratio)) != std::string::npos);
    std::getline(f, line);
    CHECK(line.find(fmt_double(rep.ratios.at(10))) != std::string::npos);
}

TEST_CASE("flat ratios sit on the reference line") {
    // All ratios equal to the no-scale ratio: the rendered mean markers must
    // be centered on the reference line's row.
    RatioPlotSpec spec;
    spec.addr = {2, 1};
    spec.percentages = {10, 30, 50};
    spec.ratios = {0.98, 0.98, 0.98};
    spec.stderrs = {0.0, 0.0, 0.0};
    spec.no_scale_ratio = 0.98;
    testutil::TempDir tmp("flat");
    std::string png = (tmp.path / "f.png").string();
    render_ratio_plot(spec, png, (tmp.path / "f.csv").string());
    Tensor canvas = load_image_rgb01(png);

    // find the dashed reference line row (a long run of blue pixels) and
    // check the black mean markers sit within a few pixels of it; search the
    // plot interior only so axis text stays out of the counts
    int line_row = -1, marker_row = -1;
    for (int y = 55; y < 519; ++y) {
        int blue = 0, black = 0;
        for (int x = 95; x < 855; ++x) {
            float r = canvas.at(0, y, x), g = canvas.at(1, y, x), b = canvas.at(2, y, x);
            if (b > 0.6f && r < 0.2f && g > 0.3f && g < 0.7f) ++blue;
            if (r < 0.1f && g < 0.1f && b < 0.1f) ++black;
        }
        if (blue > 100 && line_row < 0) line_row = y;
        if (black > 8 && marker_row < 0) marker_row = y;
    }
    REQUIRE(line_row >= 0);
    REQUIRE(marker_row >= 0);
    CHECK(std::abs(line_row - marker_row) <= 6);
}

TEST_SUITE_END();

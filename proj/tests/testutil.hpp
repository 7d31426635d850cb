#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "resstream/image_ops.hpp"
#include "resstream/tensor.hpp"
#include "resstream/util.hpp"

namespace testutil {

namespace fs = std::filesystem;
using resstream::Tensor;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        auto rng = std::random_device{};
        path = fs::temp_directory_path() /
               ("resstream_" + tag + "_" + std::to_string(rng()) + std::to_string(rng()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

inline Tensor random_image(int h, int w, uint64_t seed) {
    Tensor t({3, h, w});
    auto rng = resstream::make_rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : t.vec()) v = u(rng);
    return t;
}

// ---- independent reference interpolator (double precision) -------------------

/// Plain bilinear with half-pixel centers, written directly from the sampling
/// definition; the oracle for the production resampler.
inline std::vector<double> ref_resize_bilinear(const std::vector<double>& src, int in_h, int in_w,
                                               int out_h, int out_w) {
    std::vector<double> out(static_cast<size_t>(out_h) * out_w);
    double sy = static_cast<double>(in_h) / out_h;
    double sx = static_cast<double>(in_w) / out_w;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            double fy = (y + 0.5) * sy - 0.5;
            double fx = (x + 0.5) * sx - 0.5;
            int y0 = static_cast<int>(std::floor(fy));
            int x0 = static_cast<int>(std::floor(fx));
            double ay = fy - y0, ax = fx - x0;
            auto at = [&](int yy, int xx) {
                yy = std::clamp(yy, 0, in_h - 1);
                xx = std::clamp(xx, 0, in_w - 1);
                return src[static_cast<size_t>(yy) * in_w + xx];
            };
            out[static_cast<size_t>(y) * out_w + x] =
                (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
        }
    return out;
}

/// Reference crop + bilinear pipeline over a CHW float tensor.
inline Tensor ref_crop_resize(const Tensor& img, int crop, int out_size) {
    int h = img.dim(1), w = img.dim(2);
    int y0 = (h - crop) / 2, x0 = (w - crop) / 2;
    Tensor out({img.dim(0), out_size, out_size});
    for (int c = 0; c < img.dim(0); ++c) {
        std::vector<double> plane(static_cast<size_t>(crop) * crop);
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x)
                plane[static_cast<size_t>(y) * crop + x] = img.at(c, y0 + y, x0 + x);
        std::vector<double> resized =
            crop == out_size ? plane : ref_resize_bilinear(plane, crop, crop, out_size, out_size);
        for (int y = 0; y < out_size; ++y)
            for (int x = 0; x < out_size; ++x)
                out.at(c, y, x) = static_cast<float>(resized[static_cast<size_t>(y) * out_size + x]);
    }
    return out;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
    float m = 0.0f;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

// ---- synthetic datasets --------------------------------------------------------

/// Center-disk image: background 0.5 everywhere, a disk of the given RGB
/// values at the center. Written as PNG.
inline void write_disk_image(const fs::path& path, int size, double r, double g, double b,
                             int radius) {
    Tensor img = Tensor::full({3, size, size}, 0.5f);
    double c = (size - 1) / 2.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if ((x - c) * (x - c) + (y - c) * (y - c) <= static_cast<double>(radius) * radius) {
                img.at(0, y, x) = static_cast<float>(r);
                img.at(1, y, x) = static_cast<float>(g);
                img.at(2, y, x) = static_cast<float>(b);
            }
    resstream::save_image_png(img, path.string());
}

/// Two classes decided by center brightness: class0 bright (24 images),
/// class1 dark (16 images). Base rate of class0 is exactly 0.6.
inline void make_brightness_dataset(const fs::path& root, int n_class0 = 24, int n_class1 = 16) {
    fs::create_directories(root / "class0");
    fs::create_directories(root / "class1");
    for (int i = 0; i < n_class0; ++i)
        write_disk_image(root / "class0" / ("img" + std::to_string(100 + i) + ".png"), 300, 0.9,
                         0.9, 0.9, 80);
    for (int i = 0; i < n_class1; ++i)
        write_disk_image(root / "class1" / ("img" + std::to_string(100 + i) + ".png"), 300, 0.1,
                         0.1, 0.1, 80);
}

/// Two classes, two signal carriers: subpopulation A (16 images) encodes the
/// class in the red center channel, subpopulation B (24 images) in green.
/// Used with the two-signal classifier toy.
inline void make_two_signal_dataset(const fs::path& root) {
    fs::create_directories(root / "class0");
    fs::create_directories(root / "class1");
    int id = 100;
    auto emit = [&](int cls, double red, double green) {
        fs::path dir = root / ("class" + std::to_string(cls));
        write_disk_image(dir / ("img" + std::to_string(id++) + ".png"), 300, red, green, 0.5, 80);
    };
    for (int i = 0; i < 8; ++i) emit(0, 0.62, 0.5);   // A, class0
    for (int i = 0; i < 8; ++i) emit(1, 0.38, 0.5);   // A, class1
    for (int i = 0; i < 12; ++i) emit(0, 0.5, 0.62);  // B, class0
    for (int i = 0; i < 12; ++i) emit(1, 0.5, 0.38);  // B, class1
}

}  // namespace testutil

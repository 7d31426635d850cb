#include "resstream/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <opencv2/imgcodecs.hpp>

namespace resstream {

namespace {

void check_chw(const Tensor& t, const char* who) {
    if (t.ndim() != 3) throw std::invalid_argument(std::string(who) + ": expected CHW tensor");
}

struct AxisWeights {
    // For each output index: first source index and a run of weights.
    std::vector<int> start;
    std::vector<int> count;
    std::vector<float> weights;  // concatenated runs
    std::vector<int> offset;     // per-output offset into weights
};

AxisWeights plain_axis(int in, int out) {
    AxisWeights a;
    a.start.resize(out);
    a.count.resize(out);
    a.offset.resize(out);
    double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        double fl = std::floor(src);
        int i0 = static_cast<int>(fl);
        float frac = static_cast<float>(src - fl);
        int lo = std::clamp(i0, 0, in - 1);
        int hi = std::clamp(i0 + 1, 0, in - 1);
        a.offset[i] = static_cast<int>(a.weights.size());
        a.start[i] = lo;
        if (lo == hi) {
            a.count[i] = 1;
            a.weights.push_back(1.0f);
        } else {
            a.count[i] = 2;
            a.weights.push_back(1.0f - frac);
            a.weights.push_back(frac);
        }
    }
    return a;
}

AxisWeights antialias_axis(int in, int out) {
    AxisWeights a;
    a.start.resize(out);
    a.count.resize(out);
    a.offset.resize(out);
    double scale = static_cast<double>(in) / out;
    double filterscale = std::max(scale, 1.0);
    double support = 1.0 * filterscale;
    for (int i = 0; i < out; ++i) {
        double center = (i + 0.5) * scale;
        int xmin = std::max(0, static_cast<int>(center - support + 0.5));
        int xmax = std::min(in, static_cast<int>(center + support + 0.5));
        a.offset[i] = static_cast<int>(a.weights.size());
        a.start[i] = xmin;
        double total = 0.0;
        std::vector<double> w(static_cast<size_t>(xmax - xmin));
        for (int j = xmin; j < xmax; ++j) {
            double x = (j + 0.5 - center) / filterscale;
            double t = std::max(0.0, 1.0 - std::abs(x));
            w[static_cast<size_t>(j - xmin)] = t;
            total += t;
        }
        if (total <= 0.0) {  // degenerate window, fall back to nearest
            a.start[i] = std::clamp(static_cast<int>(center), 0, in - 1);
            a.count[i] = 1;
            a.weights.push_back(1.0f);
            continue;
        }
        a.count[i] = xmax - xmin;
        for (double v : w) a.weights.push_back(static_cast<float>(v / total));
    }
    return a;
}

Tensor resample(const Tensor& chw, int out_h, int out_w, bool antialias) {
    check_chw(chw, "resize");
    int c = chw.dim(0), in_h = chw.dim(1), in_w = chw.dim(2);
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize: non-positive output size");
    AxisWeights wx = antialias ? antialias_axis(in_w, out_w) : plain_axis(in_w, out_w);
    AxisWeights wy = antialias ? antialias_axis(in_h, out_h) : plain_axis(in_h, out_h);

    // Horizontal pass, then vertical.
    Tensor mid({c, in_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        const float* src = chw.plane(ch);
        float* dst = mid.plane(ch);
        for (int y = 0; y < in_h; ++y) {
            const float* row = src + static_cast<int64_t>(y) * in_w;
            float* orow = dst + static_cast<int64_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x) {
                const float* w = wx.weights.data() + wx.offset[x];
                const float* s = row + wx.start[x];
                float acc = 0.0f;
                for (int k = 0; k < wx.count[x]; ++k) acc += w[k] * s[k];
                orow[x] = acc;
            }
        }
    }
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        const float* src = mid.plane(ch);
        float* dst = out.plane(ch);
        for (int y = 0; y < out_h; ++y) {
            const float* w = wy.weights.data() + wy.offset[y];
            float* orow = dst + static_cast<int64_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x) {
                float acc = 0.0f;
                for (int k = 0; k < wy.count[y]; ++k)
                    acc += w[k] * src[static_cast<int64_t>(wy.start[y] + k) * out_w + x];
                orow[x] = acc;
            }
        }
    }
    return out;
}

}  // namespace

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w) {
    return resample(chw, out_h, out_w, false);
}

Tensor resize_bilinear_antialias(const Tensor& chw, int out_h, int out_w) {
    return resample(chw, out_h, out_w, true);
}

Tensor resize_short_side(const Tensor& chw, int target, bool antialias) {
    check_chw(chw, "resize_short_side");
    int h = chw.dim(1), w = chw.dim(2);
    if (h <= 0 || w <= 0) throw std::invalid_argument("resize_short_side: empty image");
    int oh, ow;
    if (h <= w) {
        oh = target;
        ow = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) * target / h)));
    } else {
        ow = target;
        oh = std::max(1, static_cast<int>(std::lround(static_cast<double>(h) * target / w)));
    }
    if (oh == h && ow == w) return chw;
    return resample(chw, oh, ow, antialias);
}

Tensor center_crop(const Tensor& chw, int size) {
    check_chw(chw, "center_crop");
    int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    if (size > h || size > w)
        throw std::invalid_argument("center_crop: crop " + std::to_string(size) +
                                    " exceeds image " + chw.shape_str());
    int y0 = (h - size) / 2, x0 = (w - size) / 2;
    Tensor out({c, size, size});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < size; ++y) {
            const float* src = chw.plane(ch) + static_cast<int64_t>(y0 + y) * w + x0;
            std::copy(src, src + size, out.plane(ch) + static_cast<int64_t>(y) * size);
        }
    return out;
}

Tensor normalize_chw(const Tensor& rgb01, const std::array<float, 3>& mean,
                     const std::array<float, 3>& std) {
    check_chw(rgb01, "normalize");
    if (rgb01.dim(0) != 3) throw std::invalid_argument("normalize: expected 3 channels");
    Tensor out = rgb01;
    for (int c = 0; c < 3; ++c) {
        float m = mean[static_cast<size_t>(c)];
        float inv = 1.0f / std[static_cast<size_t>(c)];
        float* p = out.plane(c);
        for (int64_t i = 0, n = static_cast<int64_t>(out.dim(1)) * out.dim(2); i < n; ++i)
            p[i] = (p[i] - m) * inv;
    }
    return out;
}

Tensor load_image_rgb01(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw std::runtime_error("failed to read image: " + path);
    Tensor out({3, img.rows, img.cols});
    for (int y = 0; y < img.rows; ++y) {
        const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.cols; ++x) {
            // OpenCV loads BGR.
            out.at(0, y, x) = row[x][2] / 255.0f;
            out.at(1, y, x) = row[x][1] / 255.0f;
            out.at(2, y, x) = row[x][0] / 255.0f;
        }
    }
    return out;
}

void save_image_png(const Tensor& rgb01, const std::string& path) {
    check_chw(rgb01, "save_image_png");
    if (rgb01.dim(0) != 3) throw std::invalid_argument("save_image_png: expected 3 channels");
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
    if (!cv::imwrite(path, img)) throw std::runtime_error("failed to write image: " + path);
}

void save_tensor_raw(const Tensor& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("failed to open for write: " + path);
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) throw std::runtime_error("short write: " + path);
}

Tensor load_tensor_raw(const std::string& path, std::vector<int> shape) {
    Tensor t(std::move(shape));
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("failed to open: " + path);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(float)))
        throw std::runtime_error("short read: " + path);
    return t;
}

}  // namespace resstream

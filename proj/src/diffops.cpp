#include "resstream/diffops.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace resstream {

namespace {

std::mutex g_fftw_mu;

struct PlanPair {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

PlanPair get_plans(int h, int w) {
    static std::map<std::pair<int, int>, PlanPair> cache;
    std::lock_guard<std::mutex> lk(g_fftw_mu);
    auto it = cache.find({h, w});
    if (it != cache.end()) return it->second;
    std::vector<std::complex<double>> a(static_cast<size_t>(h) * w), b(a.size());
    PlanPair p;
    p.fwd = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(a.data()),
                             reinterpret_cast<fftw_complex*>(b.data()), FFTW_FORWARD,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.bwd = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(a.data()),
                             reinterpret_cast<fftw_complex*>(b.data()), FFTW_BACKWARD,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p.fwd || !p.bwd) throw std::runtime_error("fftw plan creation failed");
    cache[{h, w}] = p;
    return p;
}

}  // namespace

Tensor pad_constant(const Tensor& x, int pad, float value) {
    if (pad <= 0) return x;
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out = Tensor::full({c, h + 2 * pad, w + 2 * pad}, value);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            std::memcpy(out.plane(ci) + static_cast<int64_t>(y + pad) * (w + 2 * pad) + pad,
                        x.plane(ci) + static_cast<int64_t>(y) * w, sizeof(float) * w);
    return out;
}

Tensor pad_constant_adjoint(const Tensor& g, int pad, int in_h, int in_w) {
    if (pad <= 0) return g;
    int c = g.dim(0), gw = g.dim(2);
    Tensor out({c, in_h, in_w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < in_h; ++y)
            std::memcpy(out.plane(ci) + static_cast<int64_t>(y) * in_w,
                        g.plane(ci) + static_cast<int64_t>(y + pad) * gw + pad,
                        sizeof(float) * in_w);
    return out;
}

Tensor roll2d(const Tensor& x, int dy, int dx) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    dy = ((dy % h) + h) % h;
    dx = ((dx % w) + w) % w;
    if (dy == 0 && dx == 0) return x;
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y) {
            int sy = (y - dy + h) % h;
            const float* src = x.plane(ci) + static_cast<int64_t>(sy) * w;
            float* dst = out.plane(ci) + static_cast<int64_t>(y) * w;
            std::memcpy(dst + dx, src, sizeof(float) * static_cast<size_t>(w - dx));
            std::memcpy(dst, src + (w - dx), sizeof(float) * static_cast<size_t>(dx));
        }
    return out;
}

Tensor resize_align_corners(const Tensor& x, int oh, int ow) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (oh == h && ow == w) return x;
    Tensor out({c, oh, ow});
    double ry = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
    double rx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
    for (int ci = 0; ci < c; ++ci) {
        const float* src = x.plane(ci);
        float* dst = out.plane(ci);
        for (int y = 0; y < oh; ++y) {
            double sy = y * ry;
            int y0 = static_cast<int>(sy);
            int y1 = std::min(y0 + 1, h - 1);
            float fy = static_cast<float>(sy - y0);
            for (int xo = 0; xo < ow; ++xo) {
                double sx = xo * rx;
                int x0 = static_cast<int>(sx);
                int x1 = std::min(x0 + 1, w - 1);
                float fx = static_cast<float>(sx - x0);
                float v00 = src[static_cast<int64_t>(y0) * w + x0];
                float v01 = src[static_cast<int64_t>(y0) * w + x1];
                float v10 = src[static_cast<int64_t>(y1) * w + x0];
                float v11 = src[static_cast<int64_t>(y1) * w + x1];
                dst[static_cast<int64_t>(y) * ow + xo] =
                    (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    }
    return out;
}

Tensor resize_align_corners_adjoint(const Tensor& g, int in_h, int in_w) {
    int c = g.dim(0), oh = g.dim(1), ow = g.dim(2);
    if (oh == in_h && ow == in_w) return g;
    Tensor out({c, in_h, in_w});
    double ry = oh > 1 ? static_cast<double>(in_h - 1) / (oh - 1) : 0.0;
    double rx = ow > 1 ? static_cast<double>(in_w - 1) / (ow - 1) : 0.0;
    for (int ci = 0; ci < c; ++ci) {
        const float* src = g.plane(ci);
        float* dst = out.plane(ci);
        for (int y = 0; y < oh; ++y) {
            double sy = y * ry;
            int y0 = static_cast<int>(sy);
            int y1 = std::min(y0 + 1, in_h - 1);
            float fy = static_cast<float>(sy - y0);
            for (int xo = 0; xo < ow; ++xo) {
                double sx = xo * rx;
                int x0 = static_cast<int>(sx);
                int x1 = std::min(x0 + 1, in_w - 1);
                float fx = static_cast<float>(sx - x0);
                float gv = src[static_cast<int64_t>(y) * ow + xo];
                dst[static_cast<int64_t>(y0) * in_w + x0] += (1 - fy) * (1 - fx) * gv;
                dst[static_cast<int64_t>(y0) * in_w + x1] += (1 - fy) * fx * gv;
                dst[static_cast<int64_t>(y1) * in_w + x0] += fy * (1 - fx) * gv;
                dst[static_cast<int64_t>(y1) * in_w + x1] += fy * fx * gv;
            }
        }
    }
    return out;
}

Tensor embed_center(const Tensor& x, int oh, int ow) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (oh == h && ow == w) return x;
    Tensor out({c, oh, ow});
    int oy = (oh - h) / 2, ox = (ow - w) / 2;
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            std::memcpy(out.plane(ci) + static_cast<int64_t>(y + oy) * ow + ox,
                        x.plane(ci) + static_cast<int64_t>(y) * w, sizeof(float) * w);
    return out;
}

Tensor extract_center(const Tensor& g, int in_h, int in_w) {
    int c = g.dim(0), gh = g.dim(1), gw = g.dim(2);
    if (gh == in_h && gw == in_w) return g;
    Tensor out({c, in_h, in_w});
    int oy = (gh - in_h) / 2, ox = (gw - in_w) / 2;
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < in_h; ++y)
            std::memcpy(out.plane(ci) + static_cast<int64_t>(y) * in_w,
                        g.plane(ci) + static_cast<int64_t>(y + oy) * gw + ox,
                        sizeof(float) * in_w);
    return out;
}

Tensor rotate_bilinear(const Tensor& x, double deg) {
    if (deg == 0.0) return x;
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    double a = deg * M_PI / 180.0;
    double ca = std::cos(a), sa = std::sin(a);
    double yc = (h - 1) / 2.0, xc = (w - 1) / 2.0;
    Tensor out({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
            double dx = xo - xc, dy = y - yc;
            double sx = ca * dx + sa * dy + xc;
            double sy = -sa * dx + ca * dy + yc;
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            float fx = static_cast<float>(sx - x0);
            float fy = static_cast<float>(sy - y0);
            for (int ci = 0; ci < c; ++ci) {
                const float* src = x.plane(ci);
                auto tap = [&](int yy, int xx) -> float {
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0f;
                    return src[static_cast<int64_t>(yy) * w + xx];
                };
                out.plane(ci)[static_cast<int64_t>(y) * w + xo] =
                    (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                    fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
            }
        }
    return out;
}

Tensor rotate_bilinear_adjoint(const Tensor& g, double deg) {
    if (deg == 0.0) return g;
    int c = g.dim(0), h = g.dim(1), w = g.dim(2);
    double a = deg * M_PI / 180.0;
    double ca = std::cos(a), sa = std::sin(a);
    double yc = (h - 1) / 2.0, xc = (w - 1) / 2.0;
    Tensor out({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int xo = 0; xo < w; ++xo) {
            double dx = xo - xc, dy = y - yc;
            double sx = ca * dx + sa * dy + xc;
            double sy = -sa * dx + ca * dy + yc;
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            float fx = static_cast<float>(sx - x0);
            float fy = static_cast<float>(sy - y0);
            for (int ci = 0; ci < c; ++ci) {
                float gv = g.plane(ci)[static_cast<int64_t>(y) * w + xo];
                float* dst = out.plane(ci);
                auto put = [&](int yy, int xx, float wgt) {
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
                    dst[static_cast<int64_t>(yy) * w + xx] += wgt * gv;
                };
                put(y0, x0, (1 - fy) * (1 - fx));
                put(y0, x0 + 1, (1 - fy) * fx);
                put(y0 + 1, x0, fy * (1 - fx));
                put(y0 + 1, x0 + 1, fy * fx);
            }
        }
    return out;
}

std::vector<float> packed_irfft2(const std::vector<float>& packed, int h, int w) {
    int wh = w / 2 + 1;
    if (packed.size() != static_cast<size_t>(h) * wh * 2)
        throw std::invalid_argument("packed_irfft2: size mismatch");
    PlanPair plans = get_plans(h, w);
    std::vector<std::complex<double>> full(static_cast<size_t>(h) * w), out(full.size());
    for (int ky = 0; ky < h; ++ky)
        for (int kx = 0; kx < wh; ++kx) {
            size_t o = (static_cast<size_t>(ky) * wh + kx) * 2;
            full[static_cast<size_t>(ky) * w + kx] = {packed[o], packed[o + 1]};
        }
    for (int kx = wh; kx < w; ++kx)
        for (int ky = 0; ky < h; ++ky)
            full[static_cast<size_t>(ky) * w + kx] =
                std::conj(full[static_cast<size_t>((h - ky) % h) * w + (w - kx)]);
    fftw_execute_dft(plans.bwd, reinterpret_cast<fftw_complex*>(full.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    double inv_norm = 1.0 / std::sqrt(static_cast<double>(h) * w);
    std::vector<float> img(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < img.size(); ++i)
        img[i] = static_cast<float>(out[i].real() * inv_norm);
    return img;
}

std::vector<float> packed_irfft2_adjoint(const std::vector<float>& image, int h, int w) {
    int wh = w / 2 + 1;
    if (image.size() != static_cast<size_t>(h) * w)
        throw std::invalid_argument("packed_irfft2_adjoint: size mismatch");
    PlanPair plans = get_plans(h, w);
    std::vector<std::complex<double>> in(image.size()), out(image.size());
    for (size_t i = 0; i < image.size(); ++i) in[i] = {static_cast<double>(image[i]), 0.0};
    fftw_execute_dft(plans.fwd, reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    double inv_norm = 1.0 / std::sqrt(static_cast<double>(h) * w);
    std::vector<float> packed(static_cast<size_t>(h) * wh * 2);
    for (int ky = 0; ky < h; ++ky)
        for (int kx = 0; kx < wh; ++kx) {
            bool self_conjugate = kx == 0 || (w % 2 == 0 && kx == w / 2);
            double dup = self_conjugate ? 1.0 : 2.0;
            const auto& g = out[static_cast<size_t>(ky) * w + kx];
            size_t o = (static_cast<size_t>(ky) * wh + kx) * 2;
            packed[o] = static_cast<float>(g.real() * dup * inv_norm);
            packed[o + 1] = static_cast<float>(g.imag() * dup * inv_norm);
        }
    return packed;
}

}  // namespace resstream

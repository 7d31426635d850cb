#include "resstream/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace resstream {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

// cols: (in_ch*k*k) x (oh*ow), row-major.
void im2col(const Tensor& x, int kernel, int stride, int pad, int oh, int ow,
            std::vector<float>& cols) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    cols.assign(static_cast<size_t>(c) * kernel * kernel * oh * ow, 0.0f);
    int64_t span = static_cast<int64_t>(oh) * ow;
    for (int ci = 0; ci < c; ++ci) {
        const float* src = x.plane(ci);
        for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
                float* dst =
                    cols.data() + ((static_cast<int64_t>(ci) * kernel + ky) * kernel + kx) * span;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const float* srow = src + static_cast<int64_t>(iy) * w;
                    float* drow = dst + static_cast<int64_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) drow[ox] = srow[ix];
                    }
                }
            }
    }
}

void col2im_add(const std::vector<float>& cols, int kernel, int stride, int pad, int oh, int ow,
                Tensor& gx) {
    int c = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
    int64_t span = static_cast<int64_t>(oh) * ow;
    for (int ci = 0; ci < c; ++ci) {
        float* dst = gx.plane(ci);
        for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
                const float* src =
                    cols.data() + ((static_cast<int64_t>(ci) * kernel + ky) * kernel + kx) * span;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    float* drow = dst + static_cast<int64_t>(iy) * w;
                    const float* srow = src + static_cast<int64_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) drow[ix] += srow[ox];
                    }
                }
            }
    }
}

}  // namespace

void Conv2d::validate() const {
    if (weight.ndim() != 4 || weight.dim(0) != out_ch || weight.dim(1) != in_ch ||
        weight.dim(2) != kernel || weight.dim(3) != kernel)
        throw std::invalid_argument("Conv2d: weight shape " + weight.shape_str() +
                                    " inconsistent with layer dims");
    if (!bias.empty() && static_cast<int>(bias.size()) != out_ch)
        throw std::invalid_argument("Conv2d: bias size mismatch");
    if (stride < 1 || kernel < 1 || pad < 0) throw std::invalid_argument("Conv2d: bad geometry");
}

Tensor Conv2d::forward(const Tensor& x) const {
    if (x.ndim() != 3 || x.dim(0) != in_ch)
        throw std::invalid_argument("Conv2d: input " + x.shape_str() + " expected channels " +
                                    std::to_string(in_ch));
    int oh = out_size(x.dim(1)), ow = out_size(x.dim(2));
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("Conv2d: input too small for kernel");
    thread_local std::vector<float> cols;
    im2col(x, kernel, stride, pad, oh, ow, cols);
    Tensor out({out_ch, oh, ow});
    MapConst w(weight.data(), out_ch, static_cast<Eigen::Index>(in_ch) * kernel * kernel);
    MapConst c(cols.data(), static_cast<Eigen::Index>(in_ch) * kernel * kernel,
               static_cast<Eigen::Index>(oh) * ow);
    MapMat y(out.data(), out_ch, static_cast<Eigen::Index>(oh) * ow);
    y.noalias() = w * c;
    if (!bias.empty())
        for (int co = 0; co < out_ch; ++co) {
            float b = bias[static_cast<size_t>(co)];
            float* p = out.plane(co);
            for (int64_t i = 0, n = static_cast<int64_t>(oh) * ow; i < n; ++i) p[i] += b;
        }
    return out;
}

Tensor Conv2d::backward_input(const Tensor& grad_out, int in_h, int in_w) const {
    int oh = grad_out.dim(1), ow = grad_out.dim(2);
    MapConst w(weight.data(), out_ch, static_cast<Eigen::Index>(in_ch) * kernel * kernel);
    MapConst g(grad_out.data(), out_ch, static_cast<Eigen::Index>(oh) * ow);
    thread_local std::vector<float> cols;
    cols.assign(static_cast<size_t>(in_ch) * kernel * kernel * oh * ow, 0.0f);
    MapMat c(cols.data(), static_cast<Eigen::Index>(in_ch) * kernel * kernel,
             static_cast<Eigen::Index>(oh) * ow);
    c.noalias() = w.transpose() * g;
    Tensor gx({in_ch, in_h, in_w});
    col2im_add(cols, kernel, stride, pad, oh, ow, gx);
    return gx;
}

BatchNorm BatchNorm::from_moments(const std::vector<float>& gamma, const std::vector<float>& beta,
                                  const std::vector<float>& mean, const std::vector<float>& var,
                                  float eps) {
    size_t n = gamma.size();
    if (beta.size() != n || mean.size() != n || var.size() != n)
        throw std::invalid_argument("BatchNorm: moment vectors must have equal length");
    BatchNorm bn;
    bn.scale.resize(n);
    bn.shift.resize(n);
    for (size_t i = 0; i < n; ++i) {
        float s = gamma[i] / std::sqrt(var[i] + eps);
        bn.scale[i] = s;
        bn.shift[i] = beta[i] - mean[i] * s;
    }
    return bn;
}

BatchNorm BatchNorm::identity(int channels) {
    BatchNorm bn;
    bn.scale.assign(static_cast<size_t>(channels), 1.0f);
    bn.shift.assign(static_cast<size_t>(channels), 0.0f);
    return bn;
}

Tensor BatchNorm::forward(const Tensor& x) const {
    if (x.dim(0) != channels())
        throw std::invalid_argument("BatchNorm: channel mismatch, input " + x.shape_str());
    Tensor out = x;
    for (int c = 0; c < channels(); ++c) {
        float s = scale[static_cast<size_t>(c)], b = shift[static_cast<size_t>(c)];
        float* p = out.plane(c);
        for (int64_t i = 0, n = static_cast<int64_t>(x.dim(1)) * x.dim(2); i < n; ++i)
            p[i] = p[i] * s + b;
    }
    return out;
}

Tensor BatchNorm::backward_input(const Tensor& grad_out) const {
    Tensor g = grad_out;
    for (int c = 0; c < channels(); ++c) {
        float s = scale[static_cast<size_t>(c)];
        float* p = g.plane(c);
        for (int64_t i = 0, n = static_cast<int64_t>(g.dim(1)) * g.dim(2); i < n; ++i) p[i] *= s;
    }
    return g;
}

Tensor MaxPool::forward(const Tensor& x, std::vector<int32_t>* argmax) const {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int oh = out_size(h), ow = out_size(w);
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("MaxPool: input too small");
    Tensor out({c, oh, ow});
    if (argmax) argmax->assign(static_cast<size_t>(c) * oh * ow, -1);
    for (int ci = 0; ci < c; ++ci) {
        const float* src = x.plane(ci);
        float* dst = out.plane(ci);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                int32_t best_idx = -1;
                for (int ky = 0; ky < kernel; ++ky) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kernel; ++kx) {
                        int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        float v = src[static_cast<int64_t>(iy) * w + ix];
                        if (v > best) {
                            best = v;
                            best_idx = static_cast<int32_t>(iy * w + ix);
                        }
                    }
                }
                dst[static_cast<int64_t>(oy) * ow + ox] = best;
                if (argmax)
                    (*argmax)[(static_cast<int64_t>(ci) * oh + oy) * ow + ox] = best_idx;
            }
    }
    return out;
}

Tensor MaxPool::backward_input(const Tensor& grad_out, const std::vector<int32_t>& argmax,
                               int in_c, int in_h, int in_w) const {
    int oh = grad_out.dim(1), ow = grad_out.dim(2);
    Tensor gx({in_c, in_h, in_w});
    for (int ci = 0; ci < in_c; ++ci) {
        const float* g = grad_out.plane(ci);
        float* dst = gx.plane(ci);
        for (int64_t i = 0, n = static_cast<int64_t>(oh) * ow; i < n; ++i) {
            int32_t idx = argmax[static_cast<int64_t>(ci) * oh * ow + i];
            if (idx >= 0) dst[idx] += g[i];
        }
    }
    return gx;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (float& v : out.vec()) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_out) {
    Tensor g = grad_out;
    const float* o = forward_out.data();
    float* p = g.data();
    for (int64_t i = 0, n = g.numel(); i < n; ++i)
        if (o[i] <= 0.0f) p[i] = 0.0f;
    return g;
}

std::vector<float> Linear::forward(const std::vector<float>& x) const {
    if (static_cast<int>(x.size()) != in_features)
        throw std::invalid_argument("Linear: input size mismatch");
    std::vector<float> out(static_cast<size_t>(out_features), 0.0f);
    Eigen::Map<const RowMat> w(weight.data(), out_features, in_features);
    Eigen::Map<const Eigen::VectorXf> xv(x.data(), in_features);
    Eigen::Map<Eigen::VectorXf> yv(out.data(), out_features);
    yv.noalias() = w * xv;
    if (!bias.empty())
        for (int i = 0; i < out_features; ++i) out[static_cast<size_t>(i)] += bias[static_cast<size_t>(i)];
    return out;
}

}  // namespace resstream

#pragma once

#include <cstdint>
#include <vector>

#include "resstream/tensor.hpp"

namespace resstream {

/// 2D convolution over a single CHW image, square kernels, eval mode only.
/// Backward propagates gradients to the input (weights are frozen).
struct Conv2d {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    Tensor weight;            // {out_ch, in_ch, kernel, kernel}
    std::vector<float> bias;  // empty when absent

    int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
    void validate() const;

    Tensor forward(const Tensor& x) const;
    Tensor backward_input(const Tensor& grad_out, int in_h, int in_w) const;
};

/// Batch normalization folded to a per-channel affine (eval mode).
struct BatchNorm {
    std::vector<float> scale;  // gamma / sqrt(var + eps)
    std::vector<float> shift;  // beta - mean * scale

    static BatchNorm from_moments(const std::vector<float>& gamma,
                                  const std::vector<float>& beta,
                                  const std::vector<float>& mean,
                                  const std::vector<float>& var, float eps = 1e-5f);
    static BatchNorm identity(int channels);

    int channels() const { return static_cast<int>(scale.size()); }
    Tensor forward(const Tensor& x) const;
    Tensor backward_input(const Tensor& grad_out) const;
};

struct MaxPool {
    int kernel = 3;
    int stride = 2;
    int pad = 1;

    int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
    Tensor forward(const Tensor& x, std::vector<int32_t>* argmax) const;
    Tensor backward_input(const Tensor& grad_out, const std::vector<int32_t>& argmax, int in_c,
                          int in_h, int in_w) const;
};

Tensor relu(const Tensor& x);
/// grad masked by the forward output (out > 0).
Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_out);

struct Linear {
    int in_features = 0;
    int out_features = 0;
    Tensor weight;  // {out, in}
    std::vector<float> bias;

    std::vector<float> forward(const std::vector<float>& x) const;
};

}  // namespace resstream

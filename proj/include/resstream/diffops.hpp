#pragma once

#include <vector>

#include "resstream/tensor.hpp"

namespace resstream {

// Differentiable image operations used by the feature-visualization
// optimizer. Each forward map has its exact adjoint; gradients flow through
// adjoint(grad), so the pairs must satisfy <f(x), g> == <x, adjoint(g)>.

Tensor pad_constant(const Tensor& chw, int pad, float value);
Tensor pad_constant_adjoint(const Tensor& grad, int pad, int in_h, int in_w);

/// Cyclic shift by (dy, dx); the adjoint is the inverse shift.
Tensor roll2d(const Tensor& chw, int dy, int dx);

/// Bilinear resize with align_corners sampling.
Tensor resize_align_corners(const Tensor& chw, int out_h, int out_w);
Tensor resize_align_corners_adjoint(const Tensor& grad, int in_h, int in_w);

/// Centers a smaller image in a zero canvas / extracts the centered window.
Tensor embed_center(const Tensor& chw, int out_h, int out_w);
Tensor extract_center(const Tensor& grad, int in_h, int in_w);

/// Rotation about the image center, bilinear sampling, zero outside.
Tensor rotate_bilinear(const Tensor& chw, double degrees);
Tensor rotate_bilinear_adjoint(const Tensor& grad, double degrees);

/// Inverse FFT of a packed half spectrum (h x (w/2+1) complex values stored
/// as interleaved re/im), orthonormal scaling, treating every packed (re, im)
/// as an independent real parameter. Returns the real h x w image.
std::vector<float> packed_irfft2(const std::vector<float>& packed, int h, int w);
/// Exact adjoint of packed_irfft2.
std::vector<float> packed_irfft2_adjoint(const std::vector<float>& image, int h, int w);

}  // namespace resstream

#pragma once

#include <array>
#include <string>

#include "resstream/tensor.hpp"

namespace resstream {

/// Plain bilinear resample with half-pixel sample centers (no antialiasing).
/// This is the interpolation used by the scale transforms.
Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w);

/// Triangle-filtered bilinear resample whose filter support scales with the
/// downsampling ratio (PIL-style). Identical to resize_bilinear for upscaling.
/// Used by the canonical dataset preprocessing (resize shorter side to 256).
Tensor resize_bilinear_antialias(const Tensor& chw, int out_h, int out_w);

/// Resizes so the shorter side equals `target`, preserving aspect ratio.
Tensor resize_short_side(const Tensor& chw, int target, bool antialias);

/// Centered square crop. Throws if `size` exceeds either spatial dim.
Tensor center_crop(const Tensor& chw, int size);

/// (x - mean) / std per channel, out of place.
Tensor normalize_chw(const Tensor& rgb01, const std::array<float, 3>& mean,
                     const std::array<float, 3>& std);

/// Loads an image file as {3,h,w} float RGB in [0,1].
Tensor load_image_rgb01(const std::string& path);

/// Writes a {3,h,w} [0,1] tensor as an 8-bit PNG (values clamped).
void save_image_png(const Tensor& rgb01, const std::string& path);

/// Raw float32 CHW blob round-trip, used where 8-bit quantisation would
/// perturb downstream activation readouts.
void save_tensor_raw(const Tensor& t, const std::string& path);
Tensor load_tensor_raw(const std::string& path, std::vector<int> shape);

}  // namespace resstream

#pragma once

#include <torch/torch.h>

namespace wain {

// Image tensors throughout the library are NCHW; masks are N×1×H×W with
// 1 marking a missing pixel.

/// Bilinear resampling with half-pixel-centre alignment (sample i of the
/// output reads the input at (i + 0.5)·in/out − 0.5, clamped at the border).
/// This is the reference convention for every golden file in the project.
torch::Tensor resize_bilinear(const torch::Tensor& image, int64_t height, int64_t width);

/// Nearest-neighbour resampling; output pixel i reads input floor(i·in/out).
/// Preserves binarity, so it is the only resampler used on masks.
torch::Tensor resize_nearest(const torch::Tensor& image, int64_t height, int64_t width);

/// Throws std::invalid_argument unless `t` is a defined 4-D tensor.
void require_nchw(const torch::Tensor& t, const char* what);

}  // namespace wain

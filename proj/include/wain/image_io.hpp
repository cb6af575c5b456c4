#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace wain {

/// Decodes a PNG/JPEG into a 3×H×W float tensor in [0,1] (RGB order).
/// Throws std::runtime_error if the file cannot be decoded.
torch::Tensor read_image(const std::filesystem::path& path);

/// Encodes a C×H×W tensor (C = 1 or 3, values clamped to [0,1]) as 8-bit PNG.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Masks on disk are single-channel PNG, 255 = masked, 0 = known.
/// Returned as 1×H×W float with values in {0,1} (threshold at 128).
torch::Tensor read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const torch::Tensor& mask);

/// Quantises to the 8-bit grid a PNG round-trip would produce.
torch::Tensor quantize_u8(const torch::Tensor& image);

}  // namespace wain

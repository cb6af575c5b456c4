#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <torch/torch.h>

namespace wain {

/// One Haar analysis level. `high` has 3·C channels laid out as
/// [horizontal, vertical, diagonal] for source channel 0, then channel 1, ...
struct WaveletLevel {
    torch::Tensor low;
    torch::Tensor high;
};

/// Multi-level decomposition of a 2× bilinearly upsampled image.
/// levels[0] is level 1 (the finest, same spatial size as the model input).
struct WaveletPyramid {
    std::vector<WaveletLevel> levels;

    int level_count() const { return static_cast<int>(levels.size()); }
    /// 1-based access matching the level numbering used in the losses.
    const WaveletLevel& level(int l) const;
};

/// Average-normalised 2×2 Haar analysis. For each block [[p,q],[r,s]]:
///   low = (p+q+r+s)/4, horiz = (p+q−r−s)/4, vert = (p−q+r−s)/4, diag = (p−q−r+s)/4.
/// The low band stays in the input's value range, so it is itself a valid
/// half-resolution image. Differentiable.
WaveletLevel haar_forward(const torch::Tensor& image);

/// Exact inverse of haar_forward; output is twice the spatial size of `low`.
torch::Tensor haar_inverse(const torch::Tensor& low, const torch::Tensor& high);

struct PyramidOptions {
    int levels = 4;
    /// Recompute the level-1 detail from a down-then-up resized copy of the
    /// upsampled input, removing detail the model-resolution image cannot hold.
    bool filter_finest = false;
};

/// Upsamples `image` (N×C×h×w) to 2h×2w and applies haar_forward `levels`
/// times, feeding each low band forward. When `mask` is given the hole pixels
/// are zeroed first.
WaveletPyramid build_pyramid(const torch::Tensor& image,
                             const std::optional<torch::Tensor>& mask,
                             const PyramidOptions& options = {});

/// The 2h×2w image the pyramid is built from.
torch::Tensor pyramid_base(const torch::Tensor& image);

/// Writes L{level}_{low|h|v|d}.png for batch element 0, each band affinely
/// stretched to [0,255]. Directional bands are averaged over colour channels.
void dump_pyramid(const WaveletPyramid& pyramid, const std::filesystem::path& dir);

}  // namespace wain

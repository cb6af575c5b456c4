#pragma once

#include <vector>

#include <torch/torch.h>

#include "wain/haar_wavelet.hpp"
#include "wain/patch_attention.hpp"

namespace wain {

/// Masked-pyramid detail bands re-assembled with the shared relation R.
/// high_levels[l-1] corresponds to pyramid level l.
struct AggregatedPyramid {
    std::vector<torch::Tensor> high_levels;
    /// The relation tensor each level was aggregated with (shallow handles).
    std::vector<torch::Tensor> relation_sources;

    int level_count() const { return static_cast<int>(high_levels.size()); }
    const torch::Tensor& level(int l) const;
};

/// Reconstructed images of the IHT chain; images[l] is Ĩ^(l), l = 0..L−1.
struct IhtChain {
    std::vector<torch::Tensor> images;
};

/// Which pyramid levels feed the supervision losses (subset of 1..L).
struct WaveletScales {
    std::vector<int> levels{1, 2, 3, 4};

    bool contains(int level) const;
    static WaveletScales all(int level_count);
    /// Parses "1,2,3,4"; a trailing '-' on level 1 ("1-,2,3,4") marks
    /// finest-level filtering and sets *filter_finest when given.
    static WaveletScales parse(const std::string& text, bool* filter_finest = nullptr);
    std::string to_string(bool filter_finest = false) const;
};

/// Throws std::invalid_argument unless every level of `pyramid` tiles into the
/// rows×cols grid.
void check_wpa_compatible(const WaveletPyramid& pyramid, int64_t rows, int64_t cols);

/// Unfolds each level's detail bands on the relation grid, mixes every
/// position with the same R, and folds back. No trainable state.
AggregatedPyramid wpa_aggregate(const AttentionRelation& relation,
                                const WaveletPyramid& masked_pyramid);

/// Σ over selected levels of the balanced ℓ1 between clean and aggregated
/// detail bands, with the mask nearest-resized to each level.
torch::Tensor wavelet_loss(const AggregatedPyramid& aggregated, const WaveletPyramid& clean,
                           const torch::Tensor& mask, const WaveletScales& scales);

/// Ĩ^(l) = IHT(Î^(l+1), H'^(l+1)) for l ≥ 1 (teacher-forced low band) and
/// Ĩ^(0) = IHT(output, H'^(1)).
IhtChain iht_chain(const AggregatedPyramid& aggregated, const WaveletPyramid& clean,
                   const torch::Tensor& output);

/// Balanced ℓ1 of the IHT chain against the clean targets: level 0 against
/// `clean_base` (the 2h×2w upsampled clean image), level l ≥ 1 against the
/// clean low band of level l. Level l contributes when l+1 is in `scales`.
torch::Tensor iht_chain_loss(const AggregatedPyramid& aggregated, const WaveletPyramid& clean,
                             const torch::Tensor& clean_base, const torch::Tensor& output,
                             const torch::Tensor& mask, const WaveletScales& scales);

}  // namespace wain

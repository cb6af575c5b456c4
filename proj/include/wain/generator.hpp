#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "wain/axial_transformer.hpp"
#include "wain/haar_wavelet.hpp"
#include "wain/layers.hpp"
#include "wain/patch_attention.hpp"
#include "wain/wavelet_prior_attention.hpp"

namespace wain {

enum class AttentionKind { cosine, standard };

std::string to_string(AttentionKind kind);
AttentionKind parse_attention_kind(const std::string& text);

struct GeneratorConfig {
    int64_t image_size = 64;
    int64_t base_channels = 32;
    int dc_count = 4;
    int at_count = 4;
    int64_t at_heads = 4;
    int64_t ff_multiplier = 4;
    int pyramid_levels = 4;
    WaveletScales wpa_scales;
    bool filter_finest = false;
    /// Wavelet skip inputs plus wavelet/IHT supervision. Contextual feature
    /// aggregation runs either way.
    bool use_wpa = true;
    /// When false the AT blocks are replaced by dilated blocks.
    bool use_at = true;
    AttentionKind attention = AttentionKind::cosine;
    double temperature = kCosineTemperature;

    /// Throws std::invalid_argument on an inconsistent configuration.
    void validate() const;

    /// Relation grid side (image_size / 8); features enter at image_size / 4.
    int64_t grid() const { return image_size / 8; }
    int64_t feature_size() const { return image_size / 4; }
    int64_t middle_channels() const { return 4 * base_channels; }
    /// Dilated blocks before / after the AT stack.
    int leading_dilated_blocks() const;
    int trailing_dilated_blocks() const;
    int axial_blocks() const { return use_at ? at_count : 0; }

    /// Flat "gen.key=value" lines; parse() accepts the same text.
    std::string serialize() const;
    static GeneratorConfig parse(const std::string& text);
};

struct GeneratorOutput {
    torch::Tensor raw;         ///< decoder output in [0,1]
    torch::Tensor composited;  ///< raw inside the hole, input elsewhere
    AttentionRelation relation;
    PatchRoles roles;
    std::optional<WaveletPyramid> masked_pyramid;
    std::optional<AggregatedPyramid> aggregated;
};

/// Patch attention on middle features: parameter-free cosine relation, or a
/// learned-projection scaled dot product for the "standard" ablation.
class FeatureAttentionImpl : public torch::nn::Module {
public:
    FeatureAttentionImpl(AttentionKind kind, int64_t channels, double temperature);

    /// Returns aggregated features (only query patches replaced) and R.
    std::pair<torch::Tensor, AttentionRelation> forward(const torch::Tensor& features,
                                                        const PatchRoles& roles, int64_t grid);

    AttentionKind kind() const { return kind_; }

    torch::nn::Conv2d query{nullptr};
    torch::nn::Conv2d key{nullptr};
    torch::nn::Conv2d value{nullptr};

private:
    AttentionKind kind_;
    double temperature_;
};
TORCH_MODULE(FeatureAttention);

/// Encoder Φ (7×7 gated stem, two 4×4 stride-2 gated convs, wavelet skip
/// inputs) → DC/AT middle stack → patch attention (+ WPA aggregation) →
/// decoder Ψ (nearest ×2 + 3×3 gated conv, twice; 7×7 output conv) → composite.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(const GeneratorConfig& config);

    /// `image` N×3×h×w with holes zero-filled (they are zeroed again here),
    /// `mask` N×1×h×w with 1 = missing.
    GeneratorOutput forward(const torch::Tensor& image, const torch::Tensor& mask);

    const GeneratorConfig& config() const { return config_; }
    int64_t parameter_count() const;

    GatedConv2d stem{nullptr};
    GatedConv2d down1{nullptr};
    GatedConv2d down2{nullptr};
    torch::nn::Sequential leading{nullptr};
    AxialTransformer axial{nullptr};
    torch::nn::Sequential trailing{nullptr};
    FeatureAttention attention{nullptr};
    GatedConv2d up1{nullptr};
    GatedConv2d up2{nullptr};
    torch::nn::Conv2d to_rgb{nullptr};

private:
    GeneratorConfig config_;
};
TORCH_MODULE(Generator);

/// raw⊙M + input⊙(1−M).
torch::Tensor composite(const torch::Tensor& raw, const torch::Tensor& input,
                        const torch::Tensor& mask);

/// Row of R for the query patch reshaped to rows×cols (1×1×rows×cols, not
/// normalised; sums to 1).
torch::Tensor attention_row_map(const AttentionRelation& relation, int64_t batch_index,
                                int64_t query_row, int64_t query_col);

/// attention_row_map nearest-upsampled to height×width and divided by its
/// maximum, giving a 1×1×height×width map in [0,1].
torch::Tensor extract_attention_heatmap(const AttentionRelation& relation, int64_t batch_index,
                                        int64_t query_row, int64_t query_col, int64_t height,
                                        int64_t width);

}  // namespace wain

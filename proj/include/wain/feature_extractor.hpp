#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <torch/torch.h>

namespace wain {

/// Ordered multi-stage image features used by the perceptual, style and
/// Fréchet computations. Stage outputs never grow in resolution.
class FeatureExtractor {
public:
    enum class Provenance { pretrained, fixed_random };

    virtual ~FeatureExtractor() = default;

    /// Stage outputs for an N×3×H×W image batch, computed in the input's dtype.
    virtual std::vector<torch::Tensor> features(const torch::Tensor& image) const = 0;
    virtual Provenance provenance() const = 0;
    virtual int stage_count() const = 0;

    /// Global-average-pooled final stage, N×D; the embedding used for FID.
    torch::Tensor embed(const torch::Tensor& image) const;
};

/// Stack of 3×3 stride-2 convolutions with ReLU, weights drawn from a seeded
/// generator (He-normal) and never trained. Same seed ⇒ bit-identical weights.
class ConvPyramidExtractor final : public FeatureExtractor {
public:
    static constexpr int kDefaultStages = 5;

    explicit ConvPyramidExtractor(uint64_t seed = 1234, int stages = kDefaultStages,
                                  int64_t base_channels = 8);

    /// Loads externally trained stage weights (names "stage{k}.weight" /
    /// "stage{k}.bias") from a wain checkpoint; tagged as pretrained.
    static std::unique_ptr<ConvPyramidExtractor> load(const std::filesystem::path& path);

    std::vector<torch::Tensor> features(const torch::Tensor& image) const override;
    Provenance provenance() const override { return provenance_; }
    int stage_count() const override { return static_cast<int>(weights_.size()); }

    const std::vector<torch::Tensor>& weights() const { return weights_; }

private:
    struct Empty {};
    explicit ConvPyramidExtractor(Empty) {}

    std::vector<torch::Tensor> weights_;
    std::vector<torch::Tensor> biases_;
    Provenance provenance_ = Provenance::fixed_random;
};

}  // namespace wain

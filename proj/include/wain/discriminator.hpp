#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "wain/layers.hpp"

namespace wain {

struct DiscriminatorConfig {
    int64_t base_channels = 32;
    /// Number of 5×5 stride-2 spectrally normalised conv stages.
    int stages = 6;
};

/// SN-PatchGAN: channels d, 2d, 4d, 4d, 4d, then a 1-channel score stage, each
/// a 5×5 stride-2 pad-2 spectral conv; LeakyReLU(0.2) between stages, none
/// after the last. A 64×64 input gives a 1×1 score grid, 256×256 gives 4×4.
class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(const DiscriminatorConfig& config = {});

    /// N×3×h×w image → N×1×(h/2^stages)×(w/2^stages) raw scores.
    torch::Tensor forward(const torch::Tensor& image);

    const DiscriminatorConfig& config() const { return config_; }
    std::vector<SpectralConv2d> stages;

private:
    DiscriminatorConfig config_;
};
TORCH_MODULE(Discriminator);

}  // namespace wain

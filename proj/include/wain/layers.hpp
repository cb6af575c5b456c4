#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace wain {

struct SpectralConv2dOptions {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t kernel = 3;
    int64_t stride = 1;
    int64_t padding = 1;
    int64_t dilation = 1;
    /// Power-iteration steps taken per forward call in training mode.
    int power_iterations = 1;
};

/// Conv2d whose weight is divided by an estimate of its largest singular value
/// (taken over the out×(in·k·k) matrix). The singular vectors u, v are buffers
/// refined by power iteration on every training-mode forward; in eval mode
/// they are frozen, so the layer is a fixed function of its parameters.
class SpectralConv2dImpl : public torch::nn::Module {
public:
    explicit SpectralConv2dImpl(const SpectralConv2dOptions& options);

    torch::Tensor forward(const torch::Tensor& x);

    /// W/σ with σ = uᵀ W v from the current buffers; differentiable in W.
    torch::Tensor normalized_weight() const;
    /// Refines u and v in place without recording gradients.
    void power_iterate(int steps);

    torch::Tensor weight;
    torch::Tensor bias;
    torch::Tensor u;
    torch::Tensor v;

private:
    SpectralConv2dOptions options_;
};
TORCH_MODULE(SpectralConv2d);

/// Gated convolution block: a spectrally normalised conv emits 2k channels
/// split into value and gate halves; value ⊙ σ(gate) → InstanceNorm → ReLU.
/// Odd kernels keep the size at stride 1; even kernels halve it at stride 2.
class GatedConv2dImpl : public torch::nn::Module {
public:
    GatedConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel = 3,
                    int64_t stride = 1);

    torch::Tensor forward(const torch::Tensor& x);
    /// value ⊙ σ(gate), before normalisation.
    torch::Tensor gated_response(const torch::Tensor& x);

    SpectralConv2d conv{nullptr};
    torch::nn::InstanceNorm2d norm{nullptr};
};
TORCH_MODULE(GatedConv2d);

struct DilatedBlockOptions {
    int64_t channels = 64;
    int64_t dilation = 2;
    /// Disabling the norms leaves a purely local conv stack, used to probe the
    /// receptive field.
    bool instance_norm = true;
};

/// Residual block: Conv3×3(dilation 2) → IN → ReLU → Conv3×3 → IN, added to x.
class DilatedBlockImpl : public torch::nn::Module {
public:
    explicit DilatedBlockImpl(const DilatedBlockOptions& options);

    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr};
    torch::nn::Conv2d conv2{nullptr};
    torch::nn::InstanceNorm2d norm1{nullptr};
    torch::nn::InstanceNorm2d norm2{nullptr};

private:
    bool use_norm_;
};
TORCH_MODULE(DilatedBlock);

}  // namespace wain

#pragma once

#include <optional>
#include <string>

#include <torch/torch.h>

#include "wain/feature_extractor.hpp"

namespace wain {

/// ℓ1 split over the masked and known regions, each averaged over its own
/// element count, then summed; averaged over the batch. A region with no
/// pixels in a sample contributes 0 for that sample. `mask` is N×1×H×W and
/// broadcasts over channels.
torch::Tensor balanced_l1(const torch::Tensor& pred, const torch::Tensor& target,
                          const torch::Tensor& mask);

/// Σ_k balanced ℓ1 between stage-k features, mask nearest-resized per stage.
torch::Tensor perceptual_loss(const torch::Tensor& pred, const torch::Tensor& target,
                              const torch::Tensor& mask, const FeatureExtractor& extractor);

/// G(F) = FᵀF / (c·h·w) over spatial positions, per sample: N×c×c.
torch::Tensor gram_matrix(const torch::Tensor& features);

/// Σ_k mean |G(Φ_k(target)) − G(Φ_k(pred))| over full images.
torch::Tensor style_loss(const torch::Tensor& pred, const torch::Tensor& target,
                         const FeatureExtractor& extractor);

inline constexpr double kProbabilityClamp = 1e-7;

struct AdversarialLosses {
    torch::Tensor d_loss;
    torch::Tensor g_adv;
};

/// Vanilla GAN losses on raw discriminator scores. Probabilities are clamped
/// to [1e-7, 1−1e-7] before the logarithm.
AdversarialLosses adversarial_pair(const torch::Tensor& real_scores,
                                   const torch::Tensor& fake_scores);

/// Discriminator term only: −E[log σ(real)] − E[log(1−σ(fake))].
torch::Tensor discriminator_loss(const torch::Tensor& real_scores,
                                 const torch::Tensor& fake_scores);

/// Generator term only: −E[log σ(fake)].
torch::Tensor generator_adversarial_loss(const torch::Tensor& fake_scores);

struct LossWeights {
    double adv = 0.1;
    double per = 0.1;
    double sty = 250.0;
    double iht = 0.5;
};

/// Scalar loss values for one generator step. `wav`/`iht` are absent when the
/// wavelet supervision is disabled.
struct LossReport {
    double adv = 0.0;
    double l1 = 0.0;
    double per = 0.0;
    double sty = 0.0;
    std::optional<double> wav;
    std::optional<double> iht;
    double total = 0.0;
    double d_loss = 0.0;

    /// One line of space-separated key=value pairs, fixed key order.
    std::string to_line() const;
};

/// Unweighted generator loss terms as differentiable scalars.
struct LossParts {
    std::optional<torch::Tensor> adv;
    std::optional<torch::Tensor> l1;
    std::optional<torch::Tensor> per;
    std::optional<torch::Tensor> sty;
    std::optional<torch::Tensor> wav;
    std::optional<torch::Tensor> iht;
};

struct GeneratorLoss {
    torch::Tensor total;
    LossReport report;
};

/// λ_adv·adv + l1 + λ_per·per + λ_sty·sty + wav + λ_IHT·iht. Throws
/// std::invalid_argument if adv, l1, per or sty is missing; absent wav/iht
/// count as zero.
GeneratorLoss total_generator_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace wain

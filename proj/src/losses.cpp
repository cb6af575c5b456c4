#include "wain/losses.hpp"

#include <cstdio>
#include <stdexcept>

#include "wain/resize.hpp"

namespace wain {

namespace {

torch::Tensor region_mean(const torch::Tensor& diff, const torch::Tensor& weight,
                          int64_t channels) {
    const auto sum = (diff * weight).sum({1, 2, 3});
    const auto count = weight.sum({1, 2, 3}) * static_cast<double>(channels);
    return torch::where(count > 0, sum / count.clamp_min(1.0), torch::zeros_like(sum));
}

}  // namespace

torch::Tensor balanced_l1(const torch::Tensor& pred, const torch::Tensor& target,
                          const torch::Tensor& mask) {
    require_nchw(pred, "balanced_l1(pred)");
    require_nchw(target, "balanced_l1(target)");
    require_nchw(mask, "balanced_l1(mask)");
    if (pred.sizes() != target.sizes()) {
        throw std::invalid_argument("balanced_l1: prediction and target shapes differ");
    }
    if (mask.size(1) != 1 || mask.size(2) != pred.size(2) || mask.size(3) != pred.size(3) ||
        (mask.size(0) != pred.size(0) && mask.size(0) != 1)) {
        throw std::invalid_argument("balanced_l1: mask must be N×1×H×W matching the images");
    }
    const auto m = mask.to(pred.scalar_type());
    const auto diff = (pred - target).abs();
    const auto channels = pred.size(1);
    const auto masked = region_mean(diff, m.expand({pred.size(0), 1, pred.size(2), pred.size(3)}),
                                    channels);
    const auto known = region_mean(
        diff, (1.0 - m).expand({pred.size(0), 1, pred.size(2), pred.size(3)}), channels);
    return (masked + known).mean();
}

torch::Tensor perceptual_loss(const torch::Tensor& pred, const torch::Tensor& target,
                              const torch::Tensor& mask, const FeatureExtractor& extractor) {
    const auto fp = extractor.features(pred);
    const auto ft = extractor.features(target);
    torch::Tensor total = torch::zeros({}, pred.options());
    for (size_t k = 0; k < fp.size(); ++k) {
        const auto mk = resize_nearest(mask, fp[k].size(2), fp[k].size(3));
        total = total + balanced_l1(fp[k], ft[k], mk);
    }
    return total;
}

torch::Tensor gram_matrix(const torch::Tensor& features) {
    require_nchw(features, "gram_matrix");
    const auto n = features.size(0);
    const auto c = features.size(1);
    const auto hw = features.size(2) * features.size(3);
    const auto f = features.reshape({n, c, hw});
    return torch::bmm(f, f.transpose(1, 2)) / static_cast<double>(c * hw);
}

torch::Tensor style_loss(const torch::Tensor& pred, const torch::Tensor& target,
                         const FeatureExtractor& extractor) {
    const auto fp = extractor.features(pred);
    const auto ft = extractor.features(target);
    torch::Tensor total = torch::zeros({}, pred.options());
    for (size_t k = 0; k < fp.size(); ++k) {
        total = total + (gram_matrix(ft[k]) - gram_matrix(fp[k])).abs().mean();
    }
    return total;
}

namespace {

torch::Tensor clamped_probability(const torch::Tensor& scores) {
    return torch::sigmoid(scores).clamp(kProbabilityClamp, 1.0 - kProbabilityClamp);
}

}  // namespace

torch::Tensor discriminator_loss(const torch::Tensor& real_scores,
                                 const torch::Tensor& fake_scores) {
    return -clamped_probability(real_scores).log().mean() -
           (1.0 - clamped_probability(fake_scores)).log().mean();
}

torch::Tensor generator_adversarial_loss(const torch::Tensor& fake_scores) {
    return -clamped_probability(fake_scores).log().mean();
}

AdversarialLosses adversarial_pair(const torch::Tensor& real_scores,
                                   const torch::Tensor& fake_scores) {
    return {discriminator_loss(real_scores, fake_scores), generator_adversarial_loss(fake_scores)};
}

std::string LossReport::to_line() const {
    char buf[64];
    std::string line;
    auto add = [&](const char* key, double value) {
        std::snprintf(buf, sizeof(buf), "%s%s=%.9g", line.empty() ? "" : " ", key, value);
        line += buf;
    };
    add("adv", adv);
    add("l1", l1);
    add("per", per);
    add("sty", sty);
    if (wav) {
        add("wav", *wav);
    }
    if (iht) {
        add("iht", *iht);
    }
    add("total", total);
    add("d_loss", d_loss);
    return line;
}

GeneratorLoss total_generator_loss(const LossParts& parts, const LossWeights& weights) {
    auto need = [](const std::optional<torch::Tensor>& t, const char* name) -> const torch::Tensor& {
        if (!t.has_value() || !t->defined()) {
            throw std::invalid_argument(std::string("total_generator_loss: missing '") + name +
                                        "' term");
        }
        return *t;
    };
    const auto& adv = need(parts.adv, "adv");
    const auto& l1 = need(parts.l1, "l1");
    const auto& per = need(parts.per, "per");
    const auto& sty = need(parts.sty, "sty");
    if (weights.adv < 0 || weights.per < 0 || weights.sty < 0 || weights.iht < 0) {
        throw std::invalid_argument("total_generator_loss: weights must be non-negative");
    }

    GeneratorLoss out;
    out.total = weights.adv * adv + l1 + weights.per * per + weights.sty * sty;
    out.report.adv = adv.item<double>();
    out.report.l1 = l1.item<double>();
    out.report.per = per.item<double>();
    out.report.sty = sty.item<double>();
    if (parts.wav.has_value() && parts.wav->defined()) {
        out.total = out.total + *parts.wav;
        out.report.wav = parts.wav->item<double>();
    }
    if (parts.iht.has_value() && parts.iht->defined()) {
        out.total = out.total + weights.iht * *parts.iht;
        out.report.iht = parts.iht->item<double>();
    }
    out.report.total = out.total.item<double>();
    return out;
}

}  // namespace wain

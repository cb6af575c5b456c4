#include "wain/feature_extractor.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "wain/checkpoint.hpp"
#include "wain/resize.hpp"

namespace wain {

namespace F = torch::nn::functional;

torch::Tensor FeatureExtractor::embed(const torch::Tensor& image) const {
    const auto stages = features(image);
    return stages.back().mean({2, 3});
}

ConvPyramidExtractor::ConvPyramidExtractor(uint64_t seed, int stages, int64_t base_channels) {
    if (stages < 1) {
        throw std::invalid_argument("ConvPyramidExtractor: need at least one stage");
    }
    // Own generator so the weights do not depend on torch's global RNG state.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    int64_t in = 3;
    for (int k = 0; k < stages; ++k) {
        const int64_t out = base_channels << std::min(k, 2);
        const double scale = std::sqrt(2.0 / static_cast<double>(in * 9));
        auto w = torch::empty({out, in, 3, 3}, torch::kFloat32);
        auto* wp = w.data_ptr<float>();
        for (int64_t i = 0; i < w.numel(); ++i) {
            wp[i] = static_cast<float>(normal(rng) * scale);
        }
        auto b = torch::empty({out}, torch::kFloat32);
        auto* bp = b.data_ptr<float>();
        for (int64_t i = 0; i < out; ++i) {
            bp[i] = static_cast<float>(normal(rng) * 0.01);
        }
        weights_.push_back(w);
        biases_.push_back(b);
        in = out;
    }
}

std::unique_ptr<ConvPyramidExtractor> ConvPyramidExtractor::load(
    const std::filesystem::path& path) {
    const auto archive = Checkpoint::read(path);
    std::unique_ptr<ConvPyramidExtractor> extractor(new ConvPyramidExtractor(Empty{}));
    for (int k = 0;; ++k) {
        const std::string prefix = "stage" + std::to_string(k);
        if (!archive.has_tensor(prefix + ".weight")) {
            break;
        }
        extractor->weights_.push_back(archive.tensor(prefix + ".weight"));
        extractor->biases_.push_back(archive.tensor(prefix + ".bias"));
    }
    if (extractor->weights_.empty()) {
        throw std::runtime_error("ConvPyramidExtractor::load: no stage weights in " +
                                 path.string());
    }
    extractor->provenance_ = Provenance::pretrained;
    return extractor;
}

std::vector<torch::Tensor> ConvPyramidExtractor::features(const torch::Tensor& image) const {
    require_nchw(image, "ConvPyramidExtractor::features");
    std::vector<torch::Tensor> stages;
    stages.reserve(weights_.size());
    auto x = image - 0.5;
    for (size_t k = 0; k < weights_.size(); ++k) {
        const auto w = weights_[k].to(image.scalar_type());
        const auto b = biases_[k].to(image.scalar_type());
        x = torch::relu(F::conv2d(x, w, F::Conv2dFuncOptions().bias(b).stride(2).padding(1)));
        stages.push_back(x);
    }
    return stages;
}

}  // namespace wain

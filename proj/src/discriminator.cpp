#include "wain/discriminator.hpp"

#include <algorithm>
#include <stdexcept>

namespace wain {

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config) : config_(config) {
    if (config_.stages < 1 || config_.base_channels < 1) {
        throw std::invalid_argument("discriminator: stages and base_channels must be positive");
    }
    int64_t in = 3;
    for (int k = 0; k < config_.stages; ++k) {
        const bool last = k + 1 == config_.stages;
        const int64_t out = last ? 1 : config_.base_channels << std::min(k, 2);
        SpectralConv2dOptions o;
        o.in_channels = in;
        o.out_channels = out;
        o.kernel = 5;
        o.stride = 2;
        o.padding = 2;
        stages.push_back(register_module("stage" + std::to_string(k), SpectralConv2d(o)));
        in = out;
    }
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
    auto x = image;
    for (size_t k = 0; k < stages.size(); ++k) {
        x = stages[k]->forward(x);
        if (k + 1 < stages.size()) {
            x = torch::leaky_relu(x, 0.2);
        }
    }
    return x;
}

}  // namespace wain

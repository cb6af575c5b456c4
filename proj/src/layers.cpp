#include "wain/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace wain {

namespace F = torch::nn::functional;

namespace {

constexpr double kNormEps = 1e-12;
constexpr int kInitialPowerIterations = 15;

torch::Tensor unit(const torch::Tensor& t) {
    return t / t.norm().clamp_min(kNormEps);
}

}  // namespace

SpectralConv2dImpl::SpectralConv2dImpl(const SpectralConv2dOptions& options) : options_(options) {
    if (options.in_channels <= 0 || options.out_channels <= 0 || options.kernel <= 0) {
        throw std::invalid_argument("SpectralConv2d: channel counts and kernel must be positive");
    }
    const auto fan_in = options.in_channels * options.kernel * options.kernel;
    weight = register_parameter(
        "weight", torch::empty({options.out_channels, options.in_channels, options.kernel,
                                options.kernel}));
    torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    bias = register_parameter("bias", torch::empty({options.out_channels}).uniform_(-bound, bound));
    u = register_buffer("u", unit(torch::randn({options.out_channels})));
    v = register_buffer("v", unit(torch::randn({fan_in})));
    power_iterate(kInitialPowerIterations);
}

void SpectralConv2dImpl::power_iterate(int steps) {
    torch::NoGradGuard no_grad;
    const auto w = weight.reshape({weight.size(0), -1});
    for (int i = 0; i < steps; ++i) {
        v.copy_(unit(torch::mv(w.t(), u)));
        u.copy_(unit(torch::mv(w, v)));
    }
}

torch::Tensor SpectralConv2dImpl::normalized_weight() const {
    const auto w = weight.reshape({weight.size(0), -1});
    // Snapshots, so a later power iteration cannot invalidate this graph.
    const auto sigma = torch::dot(u.clone(), torch::mv(w, v.clone()));
    return weight / sigma;
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& x) {
    if (is_training()) {
        power_iterate(options_.power_iterations);
    }
    return F::conv2d(x, normalized_weight(),
                     F::Conv2dFuncOptions()
                         .bias(bias)
                         .stride(options_.stride)
                         .padding(options_.padding)
                         .dilation(options_.dilation));
}

GatedConv2dImpl::GatedConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel,
                                 int64_t stride) {
    SpectralConv2dOptions opts;
    opts.in_channels = in_channels;
    opts.out_channels = 2 * out_channels;
    opts.kernel = kernel;
    opts.stride = stride;
    opts.padding = kernel % 2 ? kernel / 2 : kernel / 2 - 1;
    conv = register_module("conv", SpectralConv2d(opts));
    norm = register_module(
        "norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out_channels).affine(true)));
}

torch::Tensor GatedConv2dImpl::gated_response(const torch::Tensor& x) {
    const auto halves = conv(x).chunk(2, 1);
    return halves[0] * torch::sigmoid(halves[1]);
}

torch::Tensor GatedConv2dImpl::forward(const torch::Tensor& x) {
    return torch::relu(norm(gated_response(x)));
}

DilatedBlockImpl::DilatedBlockImpl(const DilatedBlockOptions& options)
    : use_norm_(options.instance_norm) {
    const auto c = options.channels;
    conv1 = register_module(
        "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3)
                                       .padding(options.dilation)
                                       .dilation(options.dilation)));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1)));
    const auto norm_opts = torch::nn::InstanceNorm2dOptions(c).affine(true);
    norm1 = register_module("norm1", torch::nn::InstanceNorm2d(norm_opts));
    norm2 = register_module("norm2", torch::nn::InstanceNorm2d(norm_opts));
}

torch::Tensor DilatedBlockImpl::forward(const torch::Tensor& x) {
    auto y = conv1(x);
    if (use_norm_) {
        y = norm1(y);
    }
    y = conv2(torch::relu(y));
    if (use_norm_) {
        y = norm2(y);
    }
    return x + y;
}

}  // namespace wain

#include "wain/resize.hpp"

#include <stdexcept>
#include <string>

namespace wain {

namespace F = torch::nn::functional;

void require_nchw(const torch::Tensor& t, const char* what) {
    if (!t.defined()) {
        throw std::invalid_argument(std::string(what) + ": tensor is undefined");
    }
    if (t.dim() != 4) {
        throw std::invalid_argument(std::string(what) + ": expected an N×C×H×W tensor, got " +
                                    std::to_string(t.dim()) + " dims");
    }
}

torch::Tensor resize_bilinear(const torch::Tensor& image, int64_t height, int64_t width) {
    require_nchw(image, "resize_bilinear");
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument("resize_bilinear: target size must be positive");
    }
    if (image.size(2) == height && image.size(3) == width) {
        return image;
    }
    return F::interpolate(image, F::InterpolateFuncOptions()
                                     .size(std::vector<int64_t>{height, width})
                                     .mode(torch::kBilinear)
                                     .align_corners(false));
}

torch::Tensor resize_nearest(const torch::Tensor& image, int64_t height, int64_t width) {
    require_nchw(image, "resize_nearest");
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument("resize_nearest: target size must be positive");
    }
    if (image.size(2) == height && image.size(3) == width) {
        return image;
    }
    return F::interpolate(image, F::InterpolateFuncOptions()
                                     .size(std::vector<int64_t>{height, width})
                                     .mode(torch::kNearest));
}

}  // namespace wain

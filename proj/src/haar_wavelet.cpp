#include "wain/haar_wavelet.hpp"

#include <stdexcept>
#include <string>

#include "wain/image_io.hpp"
#include "wain/resize.hpp"

namespace wain {

using torch::indexing::None;
using torch::indexing::Slice;

const WaveletLevel& WaveletPyramid::level(int l) const {
    if (l < 1 || l > level_count()) {
        throw std::out_of_range("WaveletPyramid::level: level " + std::to_string(l) +
                                " outside 1.." + std::to_string(level_count()));
    }
    return levels[static_cast<size_t>(l - 1)];
}

WaveletLevel haar_forward(const torch::Tensor& image) {
    require_nchw(image, "haar_forward");
    if (image.size(2) % 2 != 0) {
        throw std::invalid_argument("haar_forward: height " + std::to_string(image.size(2)) +
                                    " is odd");
    }
    if (image.size(3) % 2 != 0) {
        throw std::invalid_argument("haar_forward: width " + std::to_string(image.size(3)) +
                                    " is odd");
    }
    const auto p = image.index({Slice(), Slice(), Slice(0, None, 2), Slice(0, None, 2)});
    const auto q = image.index({Slice(), Slice(), Slice(0, None, 2), Slice(1, None, 2)});
    const auto r = image.index({Slice(), Slice(), Slice(1, None, 2), Slice(0, None, 2)});
    const auto s = image.index({Slice(), Slice(), Slice(1, None, 2), Slice(1, None, 2)});

    const auto top = p + q;
    const auto bottom = r + s;
    const auto left = p + r;
    const auto right = q + s;

    WaveletLevel out;
    out.low = (top + bottom) * 0.25;
    const auto horiz = (top - bottom) * 0.25;
    const auto vert = (left - right) * 0.25;
    const auto diag = ((p - q) - (r - s)) * 0.25;

    const auto n = image.size(0);
    const auto c = image.size(1);
    out.high = torch::stack({horiz, vert, diag}, 2).reshape({n, 3 * c, image.size(2) / 2,
                                                           image.size(3) / 2});
    return out;
}

torch::Tensor haar_inverse(const torch::Tensor& low, const torch::Tensor& high) {
    require_nchw(low, "haar_inverse(low)");
    require_nchw(high, "haar_inverse(high)");
    const auto n = low.size(0);
    const auto c = low.size(1);
    const auto h = low.size(2);
    const auto w = low.size(3);
    if (high.size(0) != n || high.size(1) != 3 * c || high.size(2) != h || high.size(3) != w) {
        throw std::invalid_argument("haar_inverse: high bands " + std::to_string(high.size(1)) +
                                    "x" + std::to_string(high.size(2)) + "x" +
                                    std::to_string(high.size(3)) +
                                    " do not match low band (need 3·C channels, same size)");
    }
    const auto bands = high.reshape({n, c, 3, h, w});
    const auto horiz = bands.select(2, 0);
    const auto vert = bands.select(2, 1);
    const auto diag = bands.select(2, 2);

    const auto p = low + horiz + vert + diag;
    const auto q = low + horiz - vert - diag;
    const auto r = low - horiz + vert - diag;
    const auto s = low - horiz - vert + diag;

    // Interleave: rows come from (p,q) / (r,s), columns alternate within each.
    const auto even_rows = torch::stack({p, q}, -1).reshape({n, c, h, 2 * w});
    const auto odd_rows = torch::stack({r, s}, -1).reshape({n, c, h, 2 * w});
    return torch::stack({even_rows, odd_rows}, 3).reshape({n, c, 2 * h, 2 * w});
}

torch::Tensor pyramid_base(const torch::Tensor& image) {
    require_nchw(image, "pyramid_base");
    return resize_bilinear(image, 2 * image.size(2), 2 * image.size(3));
}

WaveletPyramid build_pyramid(const torch::Tensor& image,
                             const std::optional<torch::Tensor>& mask,
                             const PyramidOptions& options) {
    require_nchw(image, "build_pyramid");
    if (options.levels < 1) {
        throw std::invalid_argument("build_pyramid: levels must be >= 1");
    }
    const int64_t h = image.size(2);
    const int64_t w = image.size(3);
    // Level l halves 2h a total of l times, and every level must stay even.
    const int64_t need = int64_t{1} << options.levels;
    if (h < need || w < need || (2 * h) % need != 0 || (2 * w) % need != 0) {
        throw std::invalid_argument("build_pyramid: image " + std::to_string(h) + "x" +
                                    std::to_string(w) + " too small or not divisible for " +
                                    std::to_string(options.levels) + " levels");
    }

    torch::Tensor source = image;
    if (mask.has_value()) {
        require_nchw(*mask, "build_pyramid(mask)");
        if (mask->size(2) != h || mask->size(3) != w) {
            throw std::invalid_argument("build_pyramid: mask size differs from image size");
        }
        source = image * (1.0 - *mask);
    }

    WaveletPyramid pyramid;
    torch::Tensor current = pyramid_base(source);
    for (int l = 1; l <= options.levels; ++l) {
        pyramid.levels.push_back(haar_forward(current));
        current = pyramid.levels.back().low;
    }
    if (options.filter_finest) {
        const auto base = pyramid_base(source);
        const auto smoothed = resize_bilinear(resize_bilinear(base, h, w), 2 * h, 2 * w);
        pyramid.levels.front().high = haar_forward(smoothed).high;
    }
    return pyramid;
}

namespace {

torch::Tensor stretch(const torch::Tensor& band) {
    const auto lo = band.min();
    const auto hi = band.max();
    const auto span = (hi - lo).clamp_min(1e-12);
    return (band - lo) / span;
}

}  // namespace

void dump_pyramid(const WaveletPyramid& pyramid, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    static constexpr const char* kBandNames[3] = {"h", "v", "d"};
    for (int l = 1; l <= pyramid.level_count(); ++l) {
        const auto& lev = pyramid.level(l);
        const auto low = lev.low.index({0}).detach().to(torch::kFloat32);
        const std::string prefix = "L" + std::to_string(l) + "_";
        write_png(dir / (prefix + "low.png"), stretch(low));
        const auto c = low.size(0);
        const auto bands = lev.high.index({0}).detach().to(torch::kFloat32).reshape(
            {c, 3, low.size(1), low.size(2)});
        for (int b = 0; b < 3; ++b) {
            const auto band = bands.select(1, b).mean(0, /*keepdim=*/true);
            write_png(dir / (prefix + kBandNames[b] + ".png"), stretch(band));
        }
    }
}

}  // namespace wain

#include "wain/wavelet_prior_attention.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <string>

#include "wain/losses.hpp"
#include "wain/resize.hpp"

namespace wain {

const torch::Tensor& AggregatedPyramid::level(int l) const {
    if (l < 1 || l > level_count()) {
        throw std::out_of_range("AggregatedPyramid::level: level " + std::to_string(l) +
                                " outside 1.." + std::to_string(level_count()));
    }
    return high_levels[static_cast<size_t>(l - 1)];
}

bool WaveletScales::contains(int level) const {
    return std::find(levels.begin(), levels.end(), level) != levels.end();
}

WaveletScales WaveletScales::all(int level_count) {
    WaveletScales s;
    s.levels.clear();
    for (int l = 1; l <= level_count; ++l) {
        s.levels.push_back(l);
    }
    return s;
}

WaveletScales WaveletScales::parse(const std::string& text, bool* filter_finest) {
    WaveletScales s;
    s.levels.clear();
    bool filtered = false;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        bool minus = false;
        if (item.back() == '-') {
            minus = true;
            item.pop_back();
        }
        int level = 0;
        try {
            level = std::stoi(item);
        } catch (const std::exception&) {
            throw std::invalid_argument("wavelet scales: cannot parse '" + item + "'");
        }
        if (level < 1) {
            throw std::invalid_argument("wavelet scales: levels start at 1");
        }
        if (minus) {
            if (level != 1) {
                throw std::invalid_argument("wavelet scales: only level 1 can be filtered");
            }
            filtered = true;
        }
        if (!s.contains(level)) {
            s.levels.push_back(level);
        }
    }
    std::sort(s.levels.begin(), s.levels.end());
    if (filter_finest != nullptr) {
        *filter_finest = filtered;
    }
    return s;
}

std::string WaveletScales::to_string(bool filter_finest) const {
    std::string out;
    for (size_t i = 0; i < levels.size(); ++i) {
        if (i != 0) {
            out += ',';
        }
        out += std::to_string(levels[i]);
        if (levels[i] == 1 && filter_finest) {
            out += '-';
        }
    }
    return out;
}

void check_wpa_compatible(const WaveletPyramid& pyramid, int64_t rows, int64_t cols) {
    for (int l = 1; l <= pyramid.level_count(); ++l) {
        const auto& high = pyramid.level(l).high;
        if (high.size(2) % rows != 0 || high.size(3) % cols != 0) {
            throw std::invalid_argument(
                "wpa: level " + std::to_string(l) + " bands " + std::to_string(high.size(2)) +
                "x" + std::to_string(high.size(3)) + " do not tile a " + std::to_string(rows) +
                "x" + std::to_string(cols) + " grid");
        }
    }
}

AggregatedPyramid wpa_aggregate(const AttentionRelation& relation,
                                const WaveletPyramid& masked_pyramid) {
    check_wpa_compatible(masked_pyramid, relation.rows, relation.cols);
    AggregatedPyramid out;
    for (int l = 1; l <= masked_pyramid.level_count(); ++l) {
        const auto grid = unfold_patches(masked_pyramid.level(l).high, relation.rows,
                                         relation.cols);
        const auto mixed = aggregate(relation, grid, /*replace_only_masked=*/false, {});
        out.high_levels.push_back(fold_patches(mixed));
        out.relation_sources.push_back(relation.weights);
    }
    return out;
}

namespace {

torch::Tensor mask_like(const torch::Tensor& mask, const torch::Tensor& field) {
    return resize_nearest(mask, field.size(2), field.size(3));
}

}  // namespace

torch::Tensor wavelet_loss(const AggregatedPyramid& aggregated, const WaveletPyramid& clean,
                           const torch::Tensor& mask, const WaveletScales& scales) {
    if (aggregated.level_count() != clean.level_count()) {
        throw std::invalid_argument("wavelet_loss: aggregated pyramid has " +
                                    std::to_string(aggregated.level_count()) +
                                    " levels, clean pyramid " +
                                    std::to_string(clean.level_count()));
    }
    require_nchw(mask, "wavelet_loss(mask)");
    torch::Tensor total = torch::zeros({}, aggregated.level(1).options());
    for (int l = 1; l <= clean.level_count(); ++l) {
        if (!scales.contains(l)) {
            continue;
        }
        const auto& target = clean.level(l).high;
        const auto& pred = aggregated.level(l);
        if (pred.sizes() != target.sizes()) {
            throw std::invalid_argument("wavelet_loss: level " + std::to_string(l) +
                                        " shape mismatch");
        }
        total = total + balanced_l1(pred, target, mask_like(mask, target));
    }
    return total;
}

IhtChain iht_chain(const AggregatedPyramid& aggregated, const WaveletPyramid& clean,
                   const torch::Tensor& output) {
    if (!output.defined()) {
        throw std::invalid_argument("iht_chain: output image is missing");
    }
    if (aggregated.level_count() != clean.level_count() || clean.level_count() < 1) {
        throw std::invalid_argument("iht_chain: level-count mismatch between pyramids");
    }
    IhtChain chain;
    chain.images.push_back(haar_inverse(output, aggregated.level(1)));
    for (int l = 1; l < clean.level_count(); ++l) {
        chain.images.push_back(haar_inverse(clean.level(l + 1).low, aggregated.level(l + 1)));
    }
    return chain;
}

torch::Tensor iht_chain_loss(const AggregatedPyramid& aggregated, const WaveletPyramid& clean,
                             const torch::Tensor& clean_base, const torch::Tensor& output,
                             const torch::Tensor& mask, const WaveletScales& scales) {
    require_nchw(mask, "iht_chain_loss(mask)");
    const auto chain = iht_chain(aggregated, clean, output);
    torch::Tensor total = torch::zeros({}, output.options());
    for (int l = 0; l < clean.level_count(); ++l) {
        if (!scales.contains(l + 1)) {
            continue;
        }
        const auto& target = l == 0 ? clean_base : clean.level(l).low;
        const auto& pred = chain.images[static_cast<size_t>(l)];
        if (pred.sizes() != target.sizes()) {
            throw std::invalid_argument("iht_chain_loss: level " + std::to_string(l) +
                                        " target shape mismatch");
        }
        total = total + balanced_l1(pred, target, mask_like(mask, target));
    }
    return total;
}

}  // namespace wain

#include "wain/generator.hpp"

#include <cmath>
#include <stdexcept>

#include "wain/config.hpp"
#include "wain/resize.hpp"

namespace wain {

namespace F = torch::nn::functional;

std::string to_string(AttentionKind kind) {
    return kind == AttentionKind::cosine ? "cosine" : "standard";
}

AttentionKind parse_attention_kind(const std::string& text) {
    if (text == "cosine") {
        return AttentionKind::cosine;
    }
    if (text == "standard") {
        return AttentionKind::standard;
    }
    throw std::invalid_argument("unknown attention kind '" + text + "' (cosine|standard)");
}

void GeneratorConfig::validate() const {
    if (pyramid_levels < 1) {
        throw std::invalid_argument("generator: pyramid_levels must be >= 1");
    }
    const int64_t unit = int64_t{8} << (pyramid_levels - 1);
    if (image_size <= 0 || image_size % unit != 0) {
        throw std::invalid_argument("generator: image_size " + std::to_string(image_size) +
                                    " must be a positive multiple of " + std::to_string(unit));
    }
    if (base_channels <= 0) {
        throw std::invalid_argument("generator: base_channels must be positive");
    }
    if (dc_count < 0 || at_count < 0 || dc_count + at_count < 1) {
        throw std::invalid_argument("generator: need dc_count + at_count >= 1");
    }
    if (at_heads <= 0 || middle_channels() % at_heads != 0) {
        throw std::invalid_argument("generator: middle channels " +
                                    std::to_string(middle_channels()) +
                                    " not divisible by at_heads");
    }
    if (ff_multiplier <= 0) {
        throw std::invalid_argument("generator: ff_multiplier must be positive");
    }
    for (int l : wpa_scales.levels) {
        if (l < 1 || l > pyramid_levels) {
            throw std::invalid_argument("generator: wpa scale " + std::to_string(l) +
                                        " outside 1.." + std::to_string(pyramid_levels));
        }
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("generator: temperature must be positive");
    }
}

int GeneratorConfig::leading_dilated_blocks() const {
    const int total = use_at ? dc_count : dc_count + at_count;
    return total / 2;
}

int GeneratorConfig::trailing_dilated_blocks() const {
    const int total = use_at ? dc_count : dc_count + at_count;
    return total - total / 2;
}

std::string GeneratorConfig::serialize() const {
    FlatConfig c;
    c.set("gen.image_size", std::to_string(image_size));
    c.set("gen.base_channels", std::to_string(base_channels));
    c.set("gen.dc_count", std::to_string(dc_count));
    c.set("gen.at_count", std::to_string(at_count));
    c.set("gen.at_heads", std::to_string(at_heads));
    c.set("gen.ff_multiplier", std::to_string(ff_multiplier));
    c.set("gen.pyramid_levels", std::to_string(pyramid_levels));
    c.set("gen.wpa_scales", wpa_scales.to_string(filter_finest));
    c.set("gen.use_wpa", use_wpa ? "1" : "0");
    c.set("gen.use_at", use_at ? "1" : "0");
    c.set("gen.attention", to_string(attention));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", temperature);
    c.set("gen.temperature", buf);
    return c.serialize();
}

GeneratorConfig GeneratorConfig::parse(const std::string& text) {
    const auto c = FlatConfig::parse(text);
    GeneratorConfig g;
    g.image_size = c.get_int("gen.image_size", g.image_size);
    g.base_channels = c.get_int("gen.base_channels", g.base_channels);
    g.dc_count = static_cast<int>(c.get_int("gen.dc_count", g.dc_count));
    g.at_count = static_cast<int>(c.get_int("gen.at_count", g.at_count));
    g.at_heads = c.get_int("gen.at_heads", g.at_heads);
    g.ff_multiplier = c.get_int("gen.ff_multiplier", g.ff_multiplier);
    g.pyramid_levels = static_cast<int>(c.get_int("gen.pyramid_levels", g.pyramid_levels));
    if (c.has("gen.wpa_scales")) {
        g.wpa_scales = WaveletScales::parse(c.get("gen.wpa_scales", ""), &g.filter_finest);
    } else {
        g.wpa_scales = WaveletScales::all(g.pyramid_levels);
    }
    g.use_wpa = c.get_bool("gen.use_wpa", g.use_wpa);
    g.use_at = c.get_bool("gen.use_at", g.use_at);
    g.attention = parse_attention_kind(c.get("gen.attention", to_string(g.attention)));
    g.temperature = c.get_double("gen.temperature", g.temperature);
    g.validate();
    return g;
}

FeatureAttentionImpl::FeatureAttentionImpl(AttentionKind kind, int64_t channels,
                                           double temperature)
    : kind_(kind), temperature_(temperature) {
    if (kind_ == AttentionKind::standard) {
        query = register_module("query", torch::nn::Conv2d(
                                             torch::nn::Conv2dOptions(channels, channels, 1)));
        key = register_module("key", torch::nn::Conv2d(
                                         torch::nn::Conv2dOptions(channels, channels, 1)));
        value = register_module("value", torch::nn::Conv2d(
                                             torch::nn::Conv2dOptions(channels, channels, 1)));
    }
}

std::pair<torch::Tensor, AttentionRelation> FeatureAttentionImpl::forward(
    const torch::Tensor& features, const PatchRoles& roles, int64_t grid) {
    if (kind_ == AttentionKind::cosine) {
        auto relation = cosine_relation(features, roles.valid_keys, grid, grid, temperature_);
        const auto values = unfold_patches(features, grid, grid);
        auto mixed = aggregate(relation, values, true, roles.query_targets);
        return {fold_patches(mixed), std::move(relation)};
    }
    const auto q = unfold_patches(query->forward(features), grid, grid).patches;
    const auto k = unfold_patches(key->forward(features), grid, grid).patches;
    const auto logits =
        torch::bmm(q, k.transpose(1, 2)) / std::sqrt(static_cast<double>(q.size(2)));
    AttentionRelation relation;
    relation.weights = masked_softmax(logits, roles.valid_keys);
    relation.valid_keys = roles.valid_keys;
    relation.rows = grid;
    relation.cols = grid;
    check_relation(relation);

    auto values = unfold_patches(value->forward(features), grid, grid);
    const auto mixed = torch::bmm(relation.weights, values.patches);
    const auto own = unfold_patches(features, grid, grid);
    const auto sel = roles.query_targets.unsqueeze(-1).to(features.dtype());
    values.patches = sel * mixed + (1 - sel) * own.patches;
    return {fold_patches(values), std::move(relation)};
}

namespace {

torch::nn::Sequential dilated_stack(int count, int64_t channels) {
    torch::nn::Sequential seq;
    for (int i = 0; i < count; ++i) {
        DilatedBlockOptions o;
        o.channels = channels;
        seq->push_back(DilatedBlock(o));
    }
    return seq;
}

torch::Tensor upsample2(const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
}

}  // namespace

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
    config_.validate();
    const int64_t c = config_.base_channels;
    const int64_t wav = config_.use_wpa ? 9 : 0;
    stem = register_module("stem", GatedConv2d(3 + 1 + wav, c, 7));
    down1 = register_module("down1", GatedConv2d(c, 2 * c, 4, 2));
    down2 = register_module("down2", GatedConv2d(2 * c + wav, 4 * c, 4, 2));
    const int64_t mid = config_.middle_channels();
    leading = register_module("leading", dilated_stack(config_.leading_dilated_blocks(), mid));
    if (config_.axial_blocks() > 0) {
        AxialBlockOptions o;
        o.channels = mid;
        o.heads = config_.at_heads;
        o.ff_multiplier = config_.ff_multiplier;
        const int64_t fs = config_.feature_size();
        axial = register_module("axial", AxialTransformer(fs, fs, config_.axial_blocks(), o));
    }
    trailing =
        register_module("trailing", dilated_stack(config_.trailing_dilated_blocks(), mid));
    attention = register_module(
        "attention", FeatureAttention(config_.attention, mid, config_.temperature));
    up1 = register_module("up1", GatedConv2d(4 * c, 2 * c));
    up2 = register_module("up2", GatedConv2d(2 * c, c));
    to_rgb = register_module("to_rgb",
                             torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 3, 7).padding(3)));
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& image, const torch::Tensor& mask) {
    require_nchw(image, "generator image");
    require_nchw(mask, "generator mask");
    const int64_t h = config_.image_size;
    if (image.size(1) != 3 || image.size(2) != h || image.size(3) != h) {
        throw std::invalid_argument("generator_forward: image must be N×3×" +
                                    std::to_string(h) + "×" + std::to_string(h));
    }
    if (mask.size(0) != image.size(0) || mask.size(1) != 1 || mask.size(2) != h ||
        mask.size(3) != h) {
        throw std::invalid_argument("generator_forward: mask must be N×1×" +
                                    std::to_string(h) + "×" + std::to_string(h));
    }
    const int64_t grid = config_.grid();

    GeneratorOutput out;
    try {
        out.roles = patch_validity(mask, grid, grid);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("generator_forward: ") + e.what());
    }

    const auto m = mask.to(image.dtype());
    const auto masked = image * (1 - m);

    std::vector<torch::Tensor> stem_in{masked, m};
    if (config_.use_wpa) {
        PyramidOptions po;
        po.levels = config_.pyramid_levels;
        po.filter_finest = config_.filter_finest;
        out.masked_pyramid = build_pyramid(masked, m, po);
        check_wpa_compatible(*out.masked_pyramid, grid, grid);
        stem_in.push_back(out.masked_pyramid->level(1).high);
    }
    auto x = stem->forward(torch::cat(stem_in, 1));
    x = down1->forward(x);
    if (config_.use_wpa) {
        x = torch::cat({x, out.masked_pyramid->level(2).high}, 1);
    }
    x = down2->forward(x);
    if (!leading->is_empty()) {
        x = leading->forward(x);
    }
    if (!axial.is_empty()) {
        x = axial->forward(x);
    }
    if (!trailing->is_empty()) {
        x = trailing->forward(x);
    }

    auto [mixed, relation] = attention->forward(x, out.roles, grid);
    out.relation = std::move(relation);
    if (config_.use_wpa) {
        out.aggregated = wpa_aggregate(out.relation, *out.masked_pyramid);
    }

    auto y = up1->forward(upsample2(mixed));
    y = up2->forward(upsample2(y));
    out.raw = torch::sigmoid(to_rgb->forward(y));
    out.composited = composite(out.raw, masked, m);
    return out;
}

int64_t GeneratorImpl::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : parameters()) {
        n += p.numel();
    }
    return n;
}

torch::Tensor composite(const torch::Tensor& raw, const torch::Tensor& input,
                        const torch::Tensor& mask) {
    if (raw.sizes() != input.sizes()) {
        throw std::invalid_argument("composite: raw and input shapes differ");
    }
    const auto m = mask.to(raw.dtype());
    return raw * m + input * (1 - m);
}

torch::Tensor attention_row_map(const AttentionRelation& relation, int64_t batch_index,
                                int64_t query_row, int64_t query_col) {
    if (!relation.weights.defined() || relation.weights.dim() != 3) {
        throw std::invalid_argument("attention_row_map: relation is empty");
    }
    if (batch_index < 0 || batch_index >= relation.weights.size(0)) {
        throw std::out_of_range("attention_row_map: batch index out of range");
    }
    if (query_row < 0 || query_row >= relation.rows || query_col < 0 ||
        query_col >= relation.cols) {
        throw std::out_of_range("attention_row_map: query (" + std::to_string(query_row) + "," +
                                std::to_string(query_col) + ") outside " +
                                std::to_string(relation.rows) + "×" +
                                std::to_string(relation.cols) + " grid");
    }
    const int64_t i = query_row * relation.cols + query_col;
    return relation.weights[batch_index][i].reshape({1, 1, relation.rows, relation.cols});
}

torch::Tensor extract_attention_heatmap(const AttentionRelation& relation, int64_t batch_index,
                                        int64_t query_row, int64_t query_col, int64_t height,
                                        int64_t width) {
    const auto row = attention_row_map(relation, batch_index, query_row, query_col).detach();
    auto up = resize_nearest(row, height, width);
    const double peak = up.max().item<double>();
    return peak > 0 ? up / peak : up;
}

}  // namespace wain

#include "wain/axial_transformer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wain {

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int64_t channels, int64_t heads)
    : channels_(channels), heads_(heads) {
    if (channels <= 0 || heads <= 0 || channels % heads != 0) {
        throw std::invalid_argument("MultiHeadAttention: channels " + std::to_string(channels) +
                                    " not divisible by " + std::to_string(heads) + " heads");
    }
    q_proj = register_module("q_proj", torch::nn::Linear(channels, channels));
    k_proj = register_module("k_proj", torch::nn::Linear(channels, channels));
    v_proj = register_module("v_proj", torch::nn::Linear(channels, channels));
    out_proj = register_module("out_proj", torch::nn::Linear(channels, channels));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key,
                                              const torch::Tensor& value, torch::Tensor* weights) {
    if (query.dim() != 3 || key.dim() != 3 || value.dim() != 3) {
        throw std::invalid_argument("MultiHeadAttention: expected N×L×C token sequences");
    }
    if (key.size(1) != value.size(1)) {
        throw std::invalid_argument("MultiHeadAttention: key and value lengths differ");
    }
    const auto n = query.size(0);
    const auto lq = query.size(1);
    const auto lk = key.size(1);
    const auto d = channels_ / heads_;

    auto split = [&](const torch::Tensor& t, int64_t len) {
        return t.reshape({n, len, heads_, d}).transpose(1, 2);
    };
    const auto q = split(q_proj(query), lq);
    const auto k = split(k_proj(key), lk);
    const auto v = split(v_proj(value), lk);

    const auto logits = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(d));
    if (!torch::isfinite(logits).all().item<bool>()) {
        throw std::runtime_error("MultiHeadAttention: non-finite attention logits");
    }
    const auto attn = torch::softmax(logits, -1);
    if (weights != nullptr) {
        *weights = attn;
    }
    const auto mixed = torch::matmul(attn, v).transpose(1, 2).reshape({n, lq, channels_});
    return out_proj(mixed);
}

AxialPositionTableImpl::AxialPositionTableImpl(int64_t rows, int64_t cols, int64_t channels) {
    row_embed = register_parameter("row_embed", torch::randn({rows, channels}) * 0.02);
    col_embed = register_parameter("col_embed", torch::randn({cols, channels}) * 0.02);
}

torch::Tensor AxialPositionTableImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != row_embed.size(0) || x.size(2) != col_embed.size(0) ||
        x.size(3) != row_embed.size(1)) {
        throw std::invalid_argument("AxialPositionTable: table dims do not match the feature map");
    }
    return x + row_embed.unsqueeze(1) + col_embed.unsqueeze(0);
}

AxialBlockImpl::AxialBlockImpl(const AxialBlockOptions& options) {
    const auto c = options.channels;
    row_norm = register_module("row_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
    col_norm = register_module("col_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
    ff_norm = register_module("ff_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
    row_attn = register_module("row_attn", MultiHeadAttention(c, options.heads));
    col_attn = register_module("col_attn", MultiHeadAttention(c, options.heads));
    ff_in = register_module("ff_in", torch::nn::Linear(c, options.ff_multiplier * c));
    ff_out = register_module("ff_out", torch::nn::Linear(options.ff_multiplier * c, c));
}

torch::Tensor AxialBlockImpl::row_pass(const torch::Tensor& x, torch::Tensor* weights) {
    const auto n = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
    const auto rows = row_norm(x).reshape({n * h, w, c});
    return row_attn(rows, rows, rows, weights).reshape({n, h, w, c});
}

torch::Tensor AxialBlockImpl::column_pass(const torch::Tensor& x, torch::Tensor* weights) {
    const auto n = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
    const auto cols = col_norm(x).transpose(1, 2).reshape({n * w, h, c});
    return col_attn(cols, cols, cols, weights).reshape({n, w, h, c}).transpose(1, 2);
}

torch::Tensor AxialBlockImpl::feed_forward_pass(const torch::Tensor& x) {
    return ff_out(torch::gelu(ff_in(ff_norm(x))));
}

torch::Tensor AxialBlockImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4) {
        throw std::invalid_argument("AxialBlock: expected a channel-last N×H×W×C map");
    }
    auto y = x + row_pass(x);
    y = y + column_pass(y);
    return y + feed_forward_pass(y);
}

AxialTransformerImpl::AxialTransformerImpl(int64_t rows, int64_t cols, int64_t depth,
                                           const AxialBlockOptions& options) {
    positions = register_module("positions", AxialPositionTable(rows, cols, options.channels));
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < depth; ++i) {
        blocks->push_back(AxialBlock(options));
    }
}

torch::Tensor AxialTransformerImpl::forward(const torch::Tensor& x) {
    auto y = positions(x.permute({0, 2, 3, 1}));
    for (const auto& block : *blocks) {
        y = block->as<AxialBlock>()->forward(y);
    }
    return y.permute({0, 3, 1, 2}).contiguous();
}

AttentionCost axial_flop_estimate(int64_t rows, int64_t cols, int64_t channels, int64_t heads) {
    if (rows <= 0 || cols <= 0 || channels <= 0 || heads <= 0) {
        throw std::invalid_argument("axial_flop_estimate: dimensions must be positive");
    }
    const auto h = static_cast<uint64_t>(rows);
    const auto w = static_cast<uint64_t>(cols);
    const auto c = static_cast<uint64_t>(channels);
    AttentionCost cost;
    // Scores (QKᵀ) and aggregation (AV) each cost c multiplies per token pair.
    cost.axial = 2 * c * (h * w * w + w * h * h);
    cost.full = 2 * c * (h * w) * (h * w);
    return cost;
}

}  // namespace wain

#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace wain {

/// Standard scaled dot-product multi-head attention with learned q/k/v/output
/// projections and no masking. Inputs are token sequences N×L×C.
class MultiHeadAttentionImpl : public torch::nn::Module {
public:
    MultiHeadAttentionImpl(int64_t channels, int64_t heads);

    /// When `weights` is non-null it receives the N×heads×Lq×Lk softmax.
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key,
                          const torch::Tensor& value, torch::Tensor* weights = nullptr);

    int64_t heads() const { return heads_; }

    torch::nn::Linear q_proj{nullptr};
    torch::nn::Linear k_proj{nullptr};
    torch::nn::Linear v_proj{nullptr};
    torch::nn::Linear out_proj{nullptr};

private:
    int64_t channels_;
    int64_t heads_;
};
TORCH_MODULE(MultiHeadAttention);

/// Learned row and column embedding tables added once before the first block.
class AxialPositionTableImpl : public torch::nn::Module {
public:
    AxialPositionTableImpl(int64_t rows, int64_t cols, int64_t channels);

    /// x is channel-last N×H×W×C; returns x[i,j] + row[i] + col[j].
    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor row_embed;
    torch::Tensor col_embed;
};
TORCH_MODULE(AxialPositionTable);

struct AxialBlockOptions {
    int64_t channels = 64;
    int64_t heads = 4;
    int64_t ff_multiplier = 4;
};

/// Pre-norm axial transformer block on channel-last N×H×W×C maps:
///   y1 = x  + RowAttn(LN(x))    (attention within each row, sequence length W)
///   y2 = y1 + ColAttn(LN(y1))   (attention within each column, length H)
///   out = y2 + FF(LN(y2)),  FF = Linear(C→4C) → GELU → Linear(4C→C)
class AxialBlockImpl : public torch::nn::Module {
public:
    explicit AxialBlockImpl(const AxialBlockOptions& options);

    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor row_pass(const torch::Tensor& x, torch::Tensor* weights = nullptr);
    torch::Tensor column_pass(const torch::Tensor& x, torch::Tensor* weights = nullptr);
    torch::Tensor feed_forward_pass(const torch::Tensor& x);

    torch::nn::LayerNorm row_norm{nullptr};
    torch::nn::LayerNorm col_norm{nullptr};
    torch::nn::LayerNorm ff_norm{nullptr};
    MultiHeadAttention row_attn{nullptr};
    MultiHeadAttention col_attn{nullptr};
    torch::nn::Linear ff_in{nullptr};
    torch::nn::Linear ff_out{nullptr};
};
TORCH_MODULE(AxialBlock);

/// Position embeddings followed by `depth` axial blocks; takes and returns
/// NCHW feature maps.
class AxialTransformerImpl : public torch::nn::Module {
public:
    AxialTransformerImpl(int64_t rows, int64_t cols, int64_t depth,
                         const AxialBlockOptions& options);

    torch::Tensor forward(const torch::Tensor& x);

    AxialPositionTable positions{nullptr};
    torch::nn::ModuleList blocks{nullptr};
};
TORCH_MODULE(AxialTransformer);

/// Multiply counts of the attention score and aggregation stages.
struct AttentionCost {
    uint64_t axial = 0;  ///< 2·c·(h·w² + w·h²)
    uint64_t full = 0;   ///< 2·c·(h·w)²
    /// axial/full, equal to (h+w)/(h·w).
    double ratio() const { return static_cast<double>(axial) / static_cast<double>(full); }
};

/// `heads` splits the channels without changing the total multiply count.
AttentionCost axial_flop_estimate(int64_t rows, int64_t cols, int64_t channels, int64_t heads);

}  // namespace wain

#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace wain {

/// Non-overlapping tiling of an N×C×H×W field into rows×cols patches.
/// `patches` is N×(rows·cols)×(C·patch_h·patch_w); patch index = row·cols + col,
/// and each patch vector is laid out channel-major (C, patch_h, patch_w).
struct PatchGrid {
    torch::Tensor patches;
    int64_t rows = 0;
    int64_t cols = 0;
    int64_t patch_h = 0;
    int64_t patch_w = 0;
    int64_t channels = 0;

    int64_t count() const { return rows * cols; }
};

PatchGrid unfold_patches(const torch::Tensor& field, int64_t rows, int64_t cols);
torch::Tensor fold_patches(const PatchGrid& grid);

/// Per-patch roles derived from a mask (both N×(rows·cols), bool).
struct PatchRoles {
    torch::Tensor valid_keys;     ///< no pixel in the tile is masked
    torch::Tensor query_targets;  ///< at least one pixel in the tile is masked
};

/// Throws std::invalid_argument("no unmasked keys") when a sample has no
/// valid key patch, since attention is undefined there.
PatchRoles patch_validity(const torch::Tensor& mask, int64_t rows, int64_t cols);

/// Row-stochastic patch relation R (N×P×P). R[n,i,j] is the weight patch i
/// gives to key patch j; columns of invalid keys are exactly zero.
struct AttentionRelation {
    torch::Tensor weights;
    torch::Tensor valid_keys;
    int64_t rows = 0;
    int64_t cols = 0;
};

/// Softmax over the last axis restricted to `valid_keys` (N×P bool). Invalid
/// entries are dropped before normalisation and come out as exact zeros.
torch::Tensor masked_softmax(const torch::Tensor& logits, const torch::Tensor& valid_keys);

inline constexpr double kCosineTemperature = 10.0;
inline constexpr double kNormFloor = 1e-8;

/// Parameter-free contextual attention: cosine similarity between the
/// flattened rows×cols patches of `features`, scaled by `temperature` and
/// soft-maxed over valid keys.
AttentionRelation cosine_relation(const torch::Tensor& features, const torch::Tensor& valid_keys,
                                  int64_t rows, int64_t cols,
                                  double temperature = kCosineTemperature);

/// out[j] = Σ_i R[j,i]·values[i]. With `replace_only_masked`, positions whose
/// `query_mask` entry is false keep their original patch.
PatchGrid aggregate(const AttentionRelation& relation, const PatchGrid& values,
                    bool replace_only_masked, const torch::Tensor& query_mask);

/// Throws std::logic_error if the relation breaks row-stochasticity,
/// non-negativity or the zero-column rule for invalid keys.
void check_relation(const AttentionRelation& relation, double tolerance = 1e-5);

/// Binary export for visualisation: two little-endian uint32 (rows, cols)
/// followed by the (rows·cols)² matrix of batch element `batch_index` as
/// row-major little-endian float32.
void write_relation(const std::filesystem::path& path, const AttentionRelation& relation,
                    int64_t batch_index = 0);

/// Reads a file produced by write_relation into a 1×P×P float tensor.
AttentionRelation read_relation(const std::filesystem::path& path);

}  // namespace wain

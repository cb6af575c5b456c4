#include "wain/patch_attention.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "wain/resize.hpp"

namespace wain {

PatchGrid unfold_patches(const torch::Tensor& field, int64_t rows, int64_t cols) {
    require_nchw(field, "unfold_patches");
    if (rows <= 0 || cols <= 0) {
        throw std::invalid_argument("unfold_patches: grid must be positive");
    }
    const auto n = field.size(0);
    const auto c = field.size(1);
    const auto h = field.size(2);
    const auto w = field.size(3);
    if (h % rows != 0 || w % cols != 0) {
        throw std::invalid_argument("unfold_patches: field " + std::to_string(h) + "x" +
                                    std::to_string(w) + " not divisible into a " +
                                    std::to_string(rows) + "x" + std::to_string(cols) + " grid");
    }
    PatchGrid grid;
    grid.rows = rows;
    grid.cols = cols;
    grid.patch_h = h / rows;
    grid.patch_w = w / cols;
    grid.channels = c;
    grid.patches = field.reshape({n, c, rows, grid.patch_h, cols, grid.patch_w})
                       .permute({0, 2, 4, 1, 3, 5})
                       .reshape({n, rows * cols, c * grid.patch_h * grid.patch_w});
    return grid;
}

torch::Tensor fold_patches(const PatchGrid& grid) {
    const auto& p = grid.patches;
    if (!p.defined() || p.dim() != 3) {
        throw std::invalid_argument("fold_patches: patches must be N×P×D");
    }
    if (p.size(1) != grid.rows * grid.cols ||
        p.size(2) != grid.channels * grid.patch_h * grid.patch_w) {
        throw std::invalid_argument("fold_patches: patch matrix " + std::to_string(p.size(1)) +
                                    "x" + std::to_string(p.size(2)) +
                                    " inconsistent with grid metadata");
    }
    const auto n = p.size(0);
    return p.reshape({n, grid.rows, grid.cols, grid.channels, grid.patch_h, grid.patch_w})
        .permute({0, 3, 1, 4, 2, 5})
        .reshape({n, grid.channels, grid.rows * grid.patch_h, grid.cols * grid.patch_w});
}

PatchRoles patch_validity(const torch::Tensor& mask, int64_t rows, int64_t cols) {
    require_nchw(mask, "patch_validity");
    if (mask.size(1) != 1) {
        throw std::invalid_argument("patch_validity: mask must have one channel");
    }
    const auto tiles = unfold_patches(mask, rows, cols).patches;  // N×P×(ph·pw)
    const auto any_masked = std::get<0>(tiles.max(-1)) > 0.5;
    PatchRoles roles{~any_masked, any_masked};
    const auto keys_per_sample = roles.valid_keys.sum(-1);
    if ((keys_per_sample == 0).any().item<bool>()) {
        throw std::invalid_argument("patch_validity: no unmasked keys");
    }
    return roles;
}

torch::Tensor masked_softmax(const torch::Tensor& logits, const torch::Tensor& valid_keys) {
    if (logits.dim() != 3 || valid_keys.dim() != 2 || valid_keys.size(0) != logits.size(0) ||
        valid_keys.size(1) != logits.size(2)) {
        throw std::invalid_argument("masked_softmax: logits N×P×P and keys N×P required");
    }
    const auto keep = valid_keys.to(torch::kBool).unsqueeze(1).expand_as(logits);
    const auto zeros = torch::zeros_like(logits);
    // Row maximum over valid keys only; the shift does not change the result.
    const auto floor = logits.detach().min();
    const auto row_max = std::get<0>(torch::where(keep, logits, floor).max(-1, true)).detach();
    const auto shifted = torch::where(keep, logits - row_max, zeros);
    const auto e = torch::where(keep, shifted.exp(), zeros);
    return e / e.sum(-1, true);
}

AttentionRelation cosine_relation(const torch::Tensor& features, const torch::Tensor& valid_keys,
                                  int64_t rows, int64_t cols, double temperature) {
    require_nchw(features, "cosine_relation");
    if (!torch::isfinite(features).all().item<bool>()) {
        throw std::invalid_argument("cosine_relation: features contain non-finite values");
    }
    if (!valid_keys.defined() || valid_keys.dim() != 2 || valid_keys.size(0) != features.size(0) ||
        valid_keys.size(1) != rows * cols) {
        throw std::invalid_argument("cosine_relation: valid_keys must be N×(rows·cols)");
    }
    if ((valid_keys.to(torch::kBool).sum(-1) == 0).any().item<bool>()) {
        throw std::invalid_argument("cosine_relation: no unmasked keys");
    }
    const auto patches = unfold_patches(features, rows, cols).patches;
    const auto norms = patches.norm(2, -1, true).clamp_min(kNormFloor);
    const auto unit = patches / norms;
    const auto cosine = torch::bmm(unit, unit.transpose(1, 2));

    AttentionRelation relation;
    relation.weights = masked_softmax(cosine * temperature, valid_keys);
    relation.valid_keys = valid_keys.to(torch::kBool);
    relation.rows = rows;
    relation.cols = cols;
    check_relation(relation);
    return relation;
}

PatchGrid aggregate(const AttentionRelation& relation, const PatchGrid& values,
                    bool replace_only_masked, const torch::Tensor& query_mask) {
    const auto& r = relation.weights;
    const auto& v = values.patches;
    if (!r.defined() || !v.defined() || r.dim() != 3 || v.dim() != 3 || r.size(0) != v.size(0) ||
        r.size(2) != v.size(1) || r.size(1) != v.size(1)) {
        throw std::invalid_argument("aggregate: relation and values disagree on token count");
    }
    PatchGrid out = values;
    const auto mixed = torch::bmm(r, v);
    if (!replace_only_masked) {
        out.patches = mixed;
        return out;
    }
    if (!query_mask.defined() || query_mask.sizes() != torch::IntArrayRef({v.size(0), v.size(1)})) {
        throw std::invalid_argument("aggregate: query_mask must be N×P");
    }
    const auto q = query_mask.to(v.scalar_type()).unsqueeze(-1);
    out.patches = q * mixed + (1.0 - q) * v;
    return out;
}

void check_relation(const AttentionRelation& relation, double tolerance) {
    const auto w = relation.weights.detach();
    const auto row_error = (w.sum(-1) - 1.0).abs().max().item<double>();
    if (row_error > tolerance) {
        throw std::logic_error("attention relation rows deviate from 1 by " +
                               std::to_string(row_error));
    }
    if (w.min().item<double>() < 0.0) {
        throw std::logic_error("attention relation has negative entries");
    }
    const auto invalid = (~relation.valid_keys).unsqueeze(1).expand_as(w);
    if (invalid.any().item<bool>() && (w.masked_select(invalid) != 0).any().item<bool>()) {
        throw std::logic_error("attention relation assigns weight to an invalid key");
    }
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "relation export assumes a little-endian host");

}  // namespace

void write_relation(const std::filesystem::path& path, const AttentionRelation& relation,
                    int64_t batch_index) {
    const auto matrix =
        relation.weights.index({batch_index}).detach().to(torch::kFloat32).contiguous();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("write_relation: cannot open " + path.string());
    }
    const uint32_t header[2] = {static_cast<uint32_t>(relation.rows),
                                static_cast<uint32_t>(relation.cols)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(matrix.data_ptr<float>()),
              static_cast<std::streamsize>(matrix.numel() * sizeof(float)));
}

AttentionRelation read_relation(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("read_relation: cannot open " + path.string());
    }
    uint32_t header[2] = {0, 0};
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    const int64_t tokens = static_cast<int64_t>(header[0]) * header[1];
    if (!in || tokens == 0) {
        throw std::runtime_error("read_relation: bad header in " + path.string());
    }
    AttentionRelation relation;
    relation.rows = header[0];
    relation.cols = header[1];
    relation.weights = torch::empty({1, tokens, tokens}, torch::kFloat32);
    in.read(reinterpret_cast<char*>(relation.weights.data_ptr<float>()),
            static_cast<std::streamsize>(tokens * tokens * sizeof(float)));
    if (!in) {
        throw std::runtime_error("read_relation: truncated matrix in " + path.string());
    }
    relation.valid_keys = relation.weights.sum(1) > 0;
    return relation;
}

}  // namespace wain

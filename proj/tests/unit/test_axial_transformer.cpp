#include <doctest.h>

#include "../support/helpers.hpp"
#include "../support/oracles.hpp"
#include "wain/axial_transformer.hpp"

using namespace wain;
using testing_support::max_abs_diff;

namespace {

AxialBlock make_block(int64_t c, int64_t heads) {
    AxialBlock block(AxialBlockOptions{c, heads, 4});
    block->to(torch::kFloat64);
    // Non-trivial affine norms so the oracle exercises gamma and beta.
    torch::NoGradGuard guard;
    for (auto* norm : {&block->row_norm, &block->col_norm, &block->ff_norm}) {
        (*norm)->weight.uniform_(0.5, 1.5);
        (*norm)->bias.uniform_(-0.2, 0.2);
    }
    return block;
}

torch::Tensor degenerate_column(const AxialBlock& block, const torch::Tensor& y) {
    const auto normed = oracle::layer_norm(y, block->col_norm->weight, block->col_norm->bias);
    const auto& a = block->col_attn;
    return oracle::linear(oracle::linear(normed, a->v_proj->weight, a->v_proj->bias),
                          a->out_proj->weight, a->out_proj->bias);
}

}  // namespace

TEST_CASE("position embeddings add row and column tables") {
    AxialPositionTable table(3, 4, 2);
    table->to(torch::kFloat64);
    {
        torch::NoGradGuard guard;
        table->row_embed.zero_();
        table->col_embed.zero_();
    }
    const auto x = torch::randn({2, 3, 4, 2}, torch::kFloat64);
    CHECK(torch::equal(table(x), x));

    {
        torch::NoGradGuard guard;
        for (int64_t i = 0; i < 3; ++i) {
            table->row_embed[i].fill_(static_cast<double>(i));
        }
    }
    const auto out = table(torch::zeros({1, 3, 4, 2}, torch::kFloat64));
    for (int64_t i = 0; i < 3; ++i) {
        CHECK((out[0][i] == static_cast<double>(i)).all().item<bool>());
    }
}

TEST_CASE("position update separates into row and column parts") {
    AxialPositionTable table(4, 5, 3);
    table->to(torch::kFloat64);
    const auto x = torch::randn({1, 4, 5, 3}, torch::kFloat64);
    const auto d = (table(x) - x)[0];
    const auto rebuilt = d.select(1, 0).unsqueeze(1) + d.select(0, 0).unsqueeze(0) - d[0][0];
    CHECK(max_abs_diff(d, rebuilt) < 1e-12);
}

TEST_CASE("position table rejects mismatched maps") {
    AxialPositionTable table(4, 4, 8);
    CHECK_THROWS_AS(table(torch::zeros({1, 4, 5, 8})), std::invalid_argument);
    CHECK_THROWS_AS(table(torch::zeros({1, 4, 4, 6})), std::invalid_argument);
}

TEST_CASE("position embeddings are applied once per stack") {
    AxialTransformer stack(2, 2, 3, AxialBlockOptions{8, 2, 4});
    stack->to(torch::kFloat64);
    const auto x = torch::randn({1, 8, 2, 2}, torch::kFloat64);
    auto y = stack->positions(x.permute({0, 2, 3, 1}));
    for (const auto& b : *stack->blocks) {
        y = b->as<AxialBlock>()->forward(y);
    }
    CHECK(max_abs_diff(stack(x), y.permute({0, 3, 1, 2})) < 1e-12);
}

TEST_CASE("attention over one token is the value path") {
    MultiHeadAttention mha(8, 2);
    mha->to(torch::kFloat64);
    const auto x = torch::randn({3, 1, 8}, torch::kFloat64);
    const auto expected = mha->out_proj(mha->v_proj(x));
    CHECK(max_abs_diff(mha(x, x, x), expected) < 1e-12);
}

TEST_CASE("identical tokens attend uniformly") {
    MultiHeadAttention mha(8, 4);
    mha->to(torch::kFloat64);
    const auto x = torch::randn({1, 1, 8}, torch::kFloat64).expand({1, 6, 8}).contiguous();
    torch::Tensor weights;
    const auto out = mha(x, x, x, &weights);
    CHECK(max_abs_diff(weights, torch::full_like(weights, 1.0 / 6)) < 1e-12);
    CHECK(max_abs_diff(out, out.select(1, 0).unsqueeze(1).expand_as(out)) < 1e-12);
}

TEST_CASE("multi-head attention matches the per-pair oracle") {
    MultiHeadAttention mha(12, 3);
    mha->to(torch::kFloat64);
    const auto x = torch::randn({1, 5, 12}, torch::kFloat64);
    CHECK(max_abs_diff(mha(x, x, x)[0], oracle::attention(mha, x[0])) < 1e-5);
}

TEST_CASE("multi-head attention preconditions") {
    CHECK_THROWS_AS(MultiHeadAttention(10, 4), std::invalid_argument);
    MultiHeadAttention mha(8, 2);
    CHECK_THROWS_AS(mha(torch::zeros({1, 3, 8}), torch::zeros({1, 3, 8}), torch::zeros({1, 2, 8})),
                    std::invalid_argument);
    auto bad = torch::zeros({1, 3, 8});
    bad[0][1][0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(mha(bad, bad, bad), std::runtime_error);
}

TEST_CASE("axial weights are row-stochastic on both axes") {
    auto block = make_block(8, 2);
    const auto x = torch::randn({2, 3, 5, 8}, torch::kFloat64);
    torch::Tensor row_w, col_w;
    block->row_pass(x, &row_w);
    block->column_pass(x, &col_w);
    CHECK(row_w.size(-1) == 5);
    CHECK(col_w.size(-1) == 3);
    CHECK(((row_w.sum(-1) - 1).abs().max().item<double>()) < 1e-6);
    CHECK(((col_w.sum(-1) - 1).abs().max().item<double>()) < 1e-6);
}

TEST_CASE("axial block on a single row equals a standard transformer block") {
    for (int64_t n : {4, 16, 64}) {
        auto block = make_block(16, 4);
        const auto x = torch::randn({1, 1, n, 16}, torch::kFloat64);
        const auto got = block(x)[0][0];
        const auto expected = oracle::transformer_block(
            block, x[0][0], true, [&](const torch::Tensor& y) { return degenerate_column(block, y); });
        CHECK(max_abs_diff(got, expected) < 1e-5);
    }
}

TEST_CASE("row attention is equivariant to column permutations") {
    auto block = make_block(8, 2);
    const auto x = torch::randn({1, 3, 6, 8}, torch::kFloat64);
    const auto perm = torch::randperm(6, torch::kLong);
    const auto a = block->row_pass(x).index_select(2, perm);
    const auto b = block->row_pass(x.index_select(2, perm));
    CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("zeroed output projections reduce the block to its feed-forward residual") {
    auto block = make_block(8, 2);
    {
        torch::NoGradGuard guard;
        for (auto* attn : {&block->row_attn, &block->col_attn}) {
            (*attn)->out_proj->weight.zero_();
            (*attn)->out_proj->bias.zero_();
        }
    }
    const auto x = torch::randn({1, 4, 4, 8}, torch::kFloat64);
    CHECK(max_abs_diff(block(x), x + block->feed_forward_pass(x)) < 1e-12);
}

TEST_CASE("axial block gradient matches finite differences") {
    auto block = make_block(8, 2);
    const auto err = oracle::gradcheck(
        [&](const torch::Tensor& x) { return block(x).pow(2).sum(); },
        torch::randn({1, 2, 3, 8}, torch::kFloat64));
    CHECK(err <= 1e-3);
}

TEST_CASE("axial cost examples") {
    const auto c32 = axial_flop_estimate(32, 32, 64, 4);
    CHECK(c32.ratio() == 1.0 / 16.0);
    CHECK(axial_flop_estimate(1, 9, 8, 1).ratio() >= 1.0);
    const auto c64 = axial_flop_estimate(64, 64, 64, 4);
    CHECK(c64.full == 16 * c32.full);
    CHECK(c64.axial == 8 * c32.axial);
    CHECK(axial_flop_estimate(32, 32, 64, 1).axial == c32.axial);
    CHECK_THROWS_AS(axial_flop_estimate(0, 4, 8, 1), std::invalid_argument);
}

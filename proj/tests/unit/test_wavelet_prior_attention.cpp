#include <doctest.h>

#include "../support/helpers.hpp"
#include "../support/oracles.hpp"
#include "wain/losses.hpp"
#include "wain/resize.hpp"
#include "wain/wavelet_prior_attention.hpp"

using namespace wain;
using testing_support::max_abs_diff;

namespace {

AttentionRelation identity_relation(int64_t n, int64_t rows, int64_t cols) {
    AttentionRelation r;
    const auto p = rows * cols;
    r.weights = torch::eye(p, torch::kFloat64).expand({n, p, p}).contiguous();
    r.valid_keys = torch::ones({n, p}, torch::kBool);
    r.rows = rows;
    r.cols = cols;
    return r;
}

AttentionRelation uniform_relation(const torch::Tensor& valid, int64_t rows, int64_t cols) {
    AttentionRelation r;
    const auto p = rows * cols;
    const auto v = valid.to(torch::kFloat64);
    r.weights = (v / v.sum(-1, true)).unsqueeze(1).expand({valid.size(0), p, p}).contiguous();
    r.valid_keys = valid;
    r.rows = rows;
    r.cols = cols;
    return r;
}

torch::Tensor block_mask(int64_t h, int64_t top, int64_t left, int64_t size) {
    auto m = torch::zeros({1, 1, h, h}, torch::kFloat64);
    m.slice(2, top, top + size).slice(3, left, left + size).fill_(1);
    return m;
}

}  // namespace

TEST_CASE("identity relation reproduces the masked pyramid") {
    const auto img = testing_support::rand64({2, 3, 32, 32});
    const auto pyr = build_pyramid(img, std::nullopt, {3, false});
    const auto agg = wpa_aggregate(identity_relation(2, 4, 4), pyr);
    REQUIRE(agg.level_count() == 3);
    for (int l = 1; l <= 3; ++l) {
        CHECK(torch::equal(agg.level(l), pyr.level(l).high));
    }
}

TEST_CASE("constant image aggregates to zero bands") {
    const auto pyr = build_pyramid(torch::full({1, 3, 32, 32}, 0.6, torch::kFloat64),
                                   std::nullopt, {3, false});
    const auto r = cosine_relation(torch::randn({1, 4, 8, 8}, torch::kFloat64),
                                   torch::ones({1, 16}, torch::kBool), 4, 4);
    const auto agg = wpa_aggregate(r, pyr);
    for (int l = 1; l <= 3; ++l) {
        CHECK(agg.level(l).abs().max().item<double>() < 1e-12);
    }
}

TEST_CASE("uniform relation gives the mean of valid patches at every level") {
    const auto pyr = build_pyramid(testing_support::rand64({1, 3, 32, 32}), std::nullopt,
                                   {3, false});
    auto valid = torch::rand({1, 16}) > 0.5;
    valid.select(1, 2).fill_(true);
    const auto agg = wpa_aggregate(uniform_relation(valid, 4, 4), pyr);
    for (int l = 1; l <= 3; ++l) {
        CHECK(max_abs_diff(agg.level(l), oracle::aggregate_field(uniform_relation(valid, 4, 4)
                                                                     .weights,
                                                                 pyr.level(l).high, 4, 4)) <
              1e-12);
        const auto patches = unfold_patches(pyr.level(l).high, 4, 4).patches[0];
        const auto mean = patches.index({valid[0]}).mean(0);
        const auto got = unfold_patches(agg.level(l), 4, 4).patches[0];
        CHECK(max_abs_diff(got, mean.unsqueeze(0).expand_as(got)) < 1e-12);
    }
}

TEST_CASE("every level shares one relation instance") {
    const auto pyr = build_pyramid(torch::rand({1, 3, 64, 64}), std::nullopt, {});
    const auto r = cosine_relation(torch::randn({1, 4, 16, 16}),
                                   torch::ones({1, 64}, torch::kBool), 8, 8);
    const auto agg = wpa_aggregate(r, pyr);
    for (const auto& src : agg.relation_sources) {
        CHECK(src.unsafeGetTensorImpl() == r.weights.unsafeGetTensorImpl());
    }
    for (int l = 1; l <= 4; ++l) {
        CHECK(agg.level(l).sizes() == pyr.level(l).high.sizes());
    }
}

TEST_CASE("wpa_aggregate rejects a grid that does not tile every level") {
    const auto pyr = build_pyramid(torch::rand({1, 3, 24, 24}), std::nullopt, {3, false});
    // Level 3 bands are 12×12; a 8×8 grid does not divide them.
    CHECK_THROWS_AS(wpa_aggregate(identity_relation(1, 8, 8), pyr), std::invalid_argument);
}

TEST_CASE("wavelet_loss is zero for matching bands") {
    const auto pyr = build_pyramid(testing_support::rand64({1, 3, 32, 32}), std::nullopt,
                                   {3, false});
    const auto agg = wpa_aggregate(identity_relation(1, 4, 4), pyr);
    CHECK(wavelet_loss(agg, pyr, block_mask(32, 4, 4, 8), WaveletScales::all(3))
              .item<double>() == 0.0);
}

TEST_CASE("wavelet_loss hand-evaluated single level") {
    // One level, mask covers all but one pixel, constant error e everywhere: e + e.
    const double e = 0.125;
    WaveletPyramid clean;
    clean.levels.push_back({torch::zeros({1, 3, 4, 4}, torch::kFloat64),
                            torch::zeros({1, 9, 4, 4}, torch::kFloat64)});
    AggregatedPyramid agg;
    agg.high_levels.push_back(torch::full({1, 9, 4, 4}, e, torch::kFloat64));
    auto mask = torch::ones({1, 1, 4, 4}, torch::kFloat64);
    mask[0][0][0][0] = 0;
    CHECK(wavelet_loss(agg, clean, mask, WaveletScales::all(1)).item<double>() ==
          doctest::Approx(2 * e).epsilon(1e-12));
}

TEST_CASE("wavelet_loss is symmetric under mask inversion") {
    const auto clean = build_pyramid(testing_support::rand64({1, 3, 32, 32}), std::nullopt,
                                     {3, false});
    const auto noisy = build_pyramid(testing_support::rand64({1, 3, 32, 32}), std::nullopt,
                                     {3, false});
    const auto agg = wpa_aggregate(identity_relation(1, 4, 4), noisy);
    const auto m = block_mask(32, 8, 4, 12);
    const auto a = wavelet_loss(agg, clean, m, WaveletScales::all(3)).item<double>();
    const auto b = wavelet_loss(agg, clean, 1 - m, WaveletScales::all(3)).item<double>();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
    CHECK(a > 0);
}

TEST_CASE("wavelet_loss respects the scale selection") {
    const auto clean = build_pyramid(testing_support::rand64({1, 3, 32, 32}), std::nullopt,
                                     {3, false});
    const auto noisy = build_pyramid(testing_support::rand64({1, 3, 32, 32}), std::nullopt,
                                     {3, false});
    const auto agg = wpa_aggregate(identity_relation(1, 4, 4), noisy);
    const auto m = block_mask(32, 8, 8, 8);
    double sum = 0;
    for (int l = 1; l <= 3; ++l) {
        WaveletScales s;
        s.levels = {l};
        sum += wavelet_loss(agg, clean, m, s).item<double>();
    }
    CHECK(wavelet_loss(agg, clean, m, WaveletScales::all(3)).item<double>() ==
          doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("iht_chain sizes and teacher forcing") {
    const auto img = testing_support::rand64({1, 3, 32, 32});
    const auto clean = build_pyramid(img, std::nullopt, {3, false});
    const auto agg = wpa_aggregate(identity_relation(1, 4, 4), clean);
    const auto chain = iht_chain(agg, clean, img);
    REQUIRE(chain.images.size() == 3);
    CHECK(chain.images[0].size(2) == 64);
    for (int l = 1; l < 3; ++l) {
        CHECK(chain.images[l].size(2) == 2 * clean.level(l + 1).low.size(2));
        // Perfect bands with the clean low band reconstruct the level above.
        CHECK(max_abs_diff(chain.images[l], clean.level(l).low) < 1e-6);
    }
}

TEST_CASE("iht_chain_loss is zero with perfect bands and the level-one low band") {
    const auto img = testing_support::rand64({1, 3, 32, 32});
    const auto clean = build_pyramid(img, std::nullopt, {3, false});
    const auto agg = wpa_aggregate(identity_relation(1, 4, 4), clean);
    const auto base = pyramid_base(img);
    const auto loss = iht_chain_loss(agg, clean, base, clean.level(1).low, block_mask(32, 0, 0, 9),
                                     WaveletScales::all(3));
    CHECK(loss.item<double>() < 1e-6);
}

TEST_CASE("iht_chain_loss with zeroed finest bands matches a direct computation") {
    const auto img = testing_support::rand64({1, 3, 32, 32});
    const auto clean = build_pyramid(img, std::nullopt, {3, false});
    auto agg = wpa_aggregate(identity_relation(1, 4, 4), clean);
    agg.high_levels[0] = torch::zeros_like(agg.high_levels[0]);
    const auto base = pyramid_base(img);
    const auto mask = block_mask(32, 10, 12, 10);
    WaveletScales only_finest;
    only_finest.levels = {1};
    const auto loss = iht_chain_loss(agg, clean, base, img, mask, only_finest);
    const auto rec = haar_inverse(img, torch::zeros({1, 9, 32, 32}, torch::kFloat64));
    const auto direct = balanced_l1(rec, base, resize_nearest(mask, 64, 64));
    CHECK(loss.item<double>() == doctest::Approx(direct.item<double>()).epsilon(1e-12));
}

TEST_CASE("iht_chain errors") {
    const auto img = testing_support::rand64({1, 3, 16, 16});
    const auto clean = build_pyramid(img, std::nullopt, {2, false});
    const auto agg = wpa_aggregate(identity_relation(1, 2, 2), clean);
    CHECK_THROWS_AS(iht_chain(agg, clean, torch::Tensor()), std::invalid_argument);
    const auto deeper = build_pyramid(img, std::nullopt, {3, false});
    CHECK_THROWS_AS(iht_chain(agg, deeper, img), std::invalid_argument);
}

TEST_CASE("iht_chain_loss gradient with respect to the output") {
    const auto img = testing_support::rand64({1, 3, 8, 8});
    const auto clean = build_pyramid(img, std::nullopt, {2, false});
    const auto agg = wpa_aggregate(identity_relation(1, 2, 2), clean);
    const auto base = pyramid_base(img);
    const auto mask = block_mask(8, 2, 2, 3);
    const auto err = oracle::gradcheck(
        [&](const torch::Tensor& out) {
            return iht_chain_loss(agg, clean, base, out, mask, WaveletScales::all(2));
        },
        testing_support::rand64({1, 3, 8, 8}));
    CHECK(err <= 1e-3);
}

TEST_CASE("wavelet and chain losses carry gradient into the relation features") {
    const auto img = testing_support::rand64({1, 3, 16, 16});
    const auto mask = block_mask(16, 4, 4, 4);
    const auto masked = build_pyramid(img * (1 - mask), mask, {2, false});
    const auto clean = build_pyramid(img, std::nullopt, {2, false});
    const auto base = pyramid_base(img);
    const auto valid = patch_validity(mask, 4, 4).valid_keys;
    const auto err = oracle::gradcheck(
        [&](const torch::Tensor& features) {
            const auto r = cosine_relation(features, valid, 4, 4);
            const auto agg = wpa_aggregate(r, masked);
            return wavelet_loss(agg, clean, mask, WaveletScales::all(2)) +
                   iht_chain_loss(agg, clean, base, img, mask, WaveletScales::all(2));
        },
        torch::randn({1, 2, 4, 4}, torch::kFloat64));
    CHECK(err <= 1e-3);
}

TEST_CASE("WaveletScales parsing") {
    bool filtered = false;
    const auto s = WaveletScales::parse("4,2,1-,3", &filtered);
    CHECK(filtered);
    CHECK(s.levels == std::vector<int>{1, 2, 3, 4});
    CHECK(s.to_string(true) == "1-,2,3,4");
    CHECK(WaveletScales::parse("2,3").to_string() == "2,3");
    CHECK_THROWS_AS(WaveletScales::parse("0"), std::invalid_argument);
    CHECK_THROWS_AS(WaveletScales::parse("2-"), std::invalid_argument);
    CHECK_THROWS_AS(WaveletScales::parse("x"), std::invalid_argument);
}

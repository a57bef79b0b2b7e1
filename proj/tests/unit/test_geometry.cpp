#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "partdisent/geometry.hpp"
#include "oracles.hpp"

using namespace partdisent;

TEST(IdentityGrid, CornersOfTwoByTwo) {
    auto g = make_identity_grid(2, 2, torch::kFloat64).coords;
    EXPECT_EQ(g[0][0][0].item<double>(), -1.0);
    EXPECT_EQ(g[0][0][1].item<double>(), -1.0);
    EXPECT_EQ(g[0][1][1].item<double>(), 1.0);
    EXPECT_EQ(g[1][0][0].item<double>(), 1.0);
    EXPECT_EQ(g[1][1][0].item<double>(), 1.0);
    EXPECT_EQ(g[1][1][1].item<double>(), 1.0);
}

TEST(IdentityGrid, CenterOfOddGridIsOrigin) {
    auto g = make_identity_grid(3, 3, torch::kFloat64).coords;
    EXPECT_EQ(g[1][1][0].item<double>(), 0.0);
    EXPECT_EQ(g[1][1][1].item<double>(), 0.0);
}

TEST(IdentityGrid, RowCoordinateOfFiveBySeven) {
    auto g = make_identity_grid(5, 7, torch::kFloat64).coords;
    EXPECT_NEAR(g[1][3][0].item<double>(), -0.5, 1e-15);
    EXPECT_EQ(g.size(0), 5);
    EXPECT_EQ(g.size(1), 7);
}

TEST(IdentityGrid, StrictlyIncreasing) {
    auto g = make_identity_grid(9, 6, torch::kFloat64).coords;
    EXPECT_TRUE((g.select(2, 0).diff(1, 0) > 0).all().item<bool>());
    EXPECT_TRUE((g.select(2, 1).diff(1, 1) > 0).all().item<bool>());
}

TEST(IdentityGrid, RejectsDegenerateSize) {
    EXPECT_THROW(make_identity_grid(1, 4), std::invalid_argument);
}

TEST(TpsKernel, ZeroAtOriginAndRSquaredLogR) {
    auto r2 = torch::tensor({0.0, 0.25, 1.0, 4.0}, torch::kFloat64);
    auto u = tps_kernel_from_squared(r2);
    EXPECT_EQ(u[0].item<double>(), 0.0);
    EXPECT_NEAR(u[1].item<double>(), 0.25 * std::log(0.5), 1e-15);
    EXPECT_NEAR(u[2].item<double>(), 0.0, 1e-15);
    EXPECT_NEAR(u[3].item<double>(), 4.0 * std::log(2.0), 1e-14);
}

TEST(Tps, IdentityLeavesGridUnchanged) {
    auto grid = make_identity_grid(11, 13, torch::kFloat64);
    auto out = apply_transform(TpsTransform::identity(5, torch::kFloat64), grid);
    EXPECT_LT((out.coords - grid.coords).abs().max().item<double>(), 1e-12);
}

TEST(Tps, TranslationShiftsEveryCoordinate) {
    auto grid = make_identity_grid(7, 7, torch::kFloat64);
    auto out = apply_transform(TpsTransform::translation(0.2, 0.0, 5, torch::kFloat64), grid);
    auto d = out.coords - grid.coords;
    EXPECT_LT((d.select(2, 0) - 0.2).abs().max().item<double>(), 1e-12);
    EXPECT_LT(d.select(2, 1).abs().max().item<double>(), 1e-12);
}

TEST(Tps, ZeroOffsetSamplingIsIdentity) {
    TpsSamplingConfig cfg;
    cfg.offset_std = 0.0;
    cfg.max_rotation_deg = 0.0;
    cfg.min_scale = cfg.max_scale = 1.0;
    cfg.max_translation = 0.0;
    SeededRng rng(3);
    auto t = sample_tps(cfg, rng);
    auto grid = make_identity_grid(9, 9, torch::kFloat64);
    EXPECT_LT((apply_transform(t, grid).coords - grid.coords).abs().max().item<double>(), 1e-6);
}

TEST(Tps, SameSeedSameParameters) {
    SeededRng a(42), b(42);
    auto ta = sample_tps({}, a), tb = sample_tps({}, b);
    EXPECT_TRUE(torch::equal(ta.offsets, tb.offsets));
    EXPECT_TRUE(torch::equal(ta.affine, tb.affine));
}

TEST(Tps, OffsetSpreadMatchesConfig) {
    SeededRng rng(7);
    TpsSamplingConfig cfg;
    std::vector<torch::Tensor> all;
    for (int i = 0; i < 1000; ++i) all.push_back(sample_tps(cfg, rng).offsets.to(torch::kFloat64));
    const double sd = torch::cat(all).std().item<double>();
    EXPECT_NEAR(sd, 0.1, 0.01);
}

TEST(Tps, MatchesDenseKernelSolver) {
    SeededRng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        auto t = sample_tps({}, rng).to(torch::kFloat64);
        auto grid = make_identity_grid(15, 12, torch::kFloat64);
        auto ours = apply_transform(t, grid).points();
        auto ref = oracle::tps_points(t, grid.points());
        EXPECT_LT((ours - ref).abs().max().item<double>(), 1e-6) << "trial " << trial;
    }
}

TEST(Tps, InterpolatesControlOffsets) {
    SeededRng rng(5);
    TpsSamplingConfig cfg;
    cfg.max_rotation_deg = 0.0;
    cfg.min_scale = cfg.max_scale = 1.0;
    cfg.max_translation = 0.0;
    auto t = sample_tps(cfg, rng).to(torch::kFloat64);
    auto grid = CoordGrid{t.control_points.reshape({5, 5, 2})};
    auto out = apply_transform(t, grid).points();
    EXPECT_LT((out - t.control_points - t.offsets).abs().max().item<double>(), 1e-9);
}

TEST(WarpImage, IdentityGridReproducesInput) {
    auto img = torch::rand({3, 10, 12}, torch::kFloat64);
    auto out = warp_image(img, make_identity_grid(10, 12, torch::kFloat64));
    EXPECT_LT((out - img).abs().max().item<double>(), 1e-6);
}

TEST(WarpImage, OnePixelShiftMovesInterior) {
    auto img = torch::rand({1, 9, 9}, torch::kFloat64);
    auto grid = make_identity_grid(9, 9, torch::kFloat64);
    const double pitch = 2.0 / 8.0;
    auto shifted = grid.coords.clone();
    shifted.select(2, 1) += pitch;
    auto out = warp_image(img, CoordGrid{shifted});
    auto expected = img.slice(2, 1, 9);
    EXPECT_LT((out.slice(2, 0, 8) - expected).abs().max().item<double>(), 1e-12);
}

TEST(WarpImage, MatchesPointwiseBilinear) {
    SeededRng rng(2);
    auto img = torch::rand({3, 8, 8}, torch::kFloat64);
    auto t = sample_tps({}, rng);
    auto grid = apply_transform(t, make_identity_grid(8, 8, torch::kFloat64));
    auto ours = warp_image(img, grid);
    EXPECT_LT((ours - oracle::bilinear_warp(img, grid.coords)).abs().max().item<double>(), 1e-12);
}

TEST(WarpImage, BatchedPerSampleGrids) {
    SeededRng rng(8);
    auto img = torch::rand({2, 3, 8, 8}, torch::kFloat64);
    auto base = make_identity_grid(8, 8, torch::kFloat64);
    auto g0 = apply_transform(sample_tps({}, rng), base).coords;
    auto g1 = apply_transform(sample_tps({}, rng), base).coords;
    auto out = warp_image(img, CoordGrid{torch::stack({g0, g1})});
    EXPECT_LT((out[0] - warp_image(img[0], CoordGrid{g0})).abs().max().item<double>(), 1e-12);
    EXPECT_LT((out[1] - warp_image(img[1], CoordGrid{g1})).abs().max().item<double>(), 1e-12);
}

TEST(WarpImage, GradientMatchesFiniteDifferences) {
    SeededRng rng(4);
    auto img = torch::rand({2, 8, 8}, torch::kFloat64);
    auto grid = apply_transform(sample_tps({}, rng), make_identity_grid(8, 8, torch::kFloat64)).coords;
    auto weights = torch::randn({2, 8, 8}, torch::kFloat64);
    auto f = [&](const std::vector<torch::Tensor>& in) {
        return (warp_image(in[0], CoordGrid{in[1]}) * weights).sum();
    };
    EXPECT_LT(oracle::gradient_error(f, {img, grid}), 1e-4);
}

TEST(Appearance, IdentityLeavesImageUnchanged) {
    auto img = torch::rand({3, 6, 6}, torch::kFloat64);
    EXPECT_LT((apply_appearance(img, {}) - img).abs().max().item<double>(), 1e-15);
}

TEST(Appearance, BrightnessOnMidGray) {
    auto img = torch::full({3, 4, 4}, 0.5, torch::kFloat64);
    AppearanceTransform t;
    t.brightness_delta = 0.1;
    EXPECT_LT((apply_appearance(img, t) - 0.6).abs().max().item<double>(), 1e-12);
}

TEST(Appearance, HueIsPeriodic) {
    auto img = torch::rand({3, 6, 6}, torch::kFloat64) * 0.5 + 0.25;
    AppearanceTransform full_turn;
    full_turn.hue_delta = 2.0 * std::numbers::pi;
    EXPECT_LT((apply_appearance(img, full_turn) - apply_appearance(img, {})).abs().max().item<double>(), 1e-5);
}

TEST(Appearance, HuePreservesLuma) {
    auto img = torch::rand({3, 5, 5}, torch::kFloat64) * 0.4 + 0.3;
    AppearanceTransform t;
    t.hue_delta = 0.7;
    auto out = apply_appearance(img, t);
    auto luma = [](const torch::Tensor& x) { return 0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2]; };
    EXPECT_LT((luma(out) - luma(img)).abs().max().item<double>(), 1e-5);
}

TEST(Appearance, RejectsNonPositiveContrast) {
    AppearanceTransform t;
    t.contrast_factor = 0.0;
    EXPECT_THROW(apply_appearance(torch::rand({3, 2, 2}), t), std::invalid_argument);
}

TEST(Appearance, CommutesWithWarpOnPiecewiseConstantImages) {
    // two flat regions; the warp only resamples at lattice positions so no blending occurs
    auto img = torch::zeros({3, 8, 8}, torch::kFloat64);
    img.slice(2, 0, 4).fill_(0.2);
    img.slice(2, 4, 8).select(0, 0).fill_(0.8);
    auto grid = make_identity_grid(8, 8, torch::kFloat64);
    auto shifted = grid.coords.clone();
    shifted.select(2, 0) += 2.0 / 7.0;
    AppearanceTransform t{0.05, 1.2, 0.1};
    auto a = warp_image(apply_appearance(img, t), CoordGrid{shifted});
    auto b = apply_appearance(warp_image(img, CoordGrid{shifted}), t);
    EXPECT_LT((a - b).abs().max().item<double>(), 1e-5);
}

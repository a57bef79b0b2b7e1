#include <gtest/gtest.h>

#include "partdisent/partcore.hpp"
#include "oracles.hpp"

using namespace partdisent;

namespace {

double max_dev(const torch::Tensor& a, const torch::Tensor& b) {
    return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

}  // namespace

TEST(NormalizeMaps, UniformMap) {
    auto m = torch::ones({1, 1, 64, 64}, torch::kFloat64);
    auto p = normalize_maps({m}).values;
    EXPECT_LT((p - 1.0 / 4096.0).abs().max().item<double>(), 1e-15);
}

TEST(NormalizeMaps, DominantSpike) {
    auto m = torch::ones({1, 1, 8, 8}, torch::kFloat64);
    m[0][0][3][5] = 1e6;
    auto p = normalize_maps({m}).values;
    EXPECT_NEAR(p[0][0][3][5].item<double>(), 1.0, 1e-4);
}

TEST(NormalizeMaps, MatchesLoopOracle) {
    torch::manual_seed(0);
    for (int i = 0; i < 20; ++i) {
        auto m = oracle::random_maps(2, 3, 9, 7);
        EXPECT_LT(max_dev(normalize_maps({m}).values, oracle::normalize(m)), 1e-12);
    }
}

TEST(ComputeMoments, DeltaMass) {
    auto grid = make_identity_grid(5, 5, torch::kFloat64);
    auto m = torch::zeros({1, 1, 5, 5}, torch::kFloat64);
    m[0][0][1][3] = 1.0;
    auto mom = compute_moments({m}, grid);
    EXPECT_NEAR(mom.mean[0][0][0].item<double>(), -0.5, 1e-7);
    EXPECT_NEAR(mom.mean[0][0][1].item<double>(), 0.5, 1e-7);
    EXPECT_LT(max_dev(mom.cov[0][0], kCovarianceFloor * torch::eye(2, torch::kFloat64)), 1e-7);
}

TEST(ComputeMoments, TwoPointVariance) {
    auto grid = make_identity_grid(3, 3, torch::kFloat64);
    auto m = torch::zeros({1, 1, 3, 3}, torch::kFloat64);
    m[0][0][0][1] = 1.0;  // (-1, 0)
    m[0][0][2][1] = 1.0;  // (1, 0)
    auto mom = compute_moments({m}, grid);
    EXPECT_NEAR(mom.mean[0][0][0].item<double>(), 0.0, 1e-12);
    EXPECT_NEAR(mom.mean[0][0][1].item<double>(), 0.0, 1e-12);
    EXPECT_NEAR(mom.cov[0][0][0][0].item<double>(), 1.0 + kCovarianceFloor, 1e-7);
}

TEST(ComputeMoments, MatchesLoopOracle) {
    torch::manual_seed(1);
    auto grid = make_identity_grid(16, 16, torch::kFloat64);
    for (int i = 0; i < 20; ++i) {
        auto m = oracle::random_maps(2, 4, 16, 16);
        auto ours = compute_moments({m}, grid);
        auto ref = oracle::moments(m, grid.coords);
        EXPECT_LT(max_dev(ours.mean, ref.mean), 1e-10);
        EXPECT_LT(max_dev(ours.cov, ref.cov), 1e-10);
    }
}

TEST(ComputeMoments, SymmetricWithFloor) {
    torch::manual_seed(2);
    auto grid = make_identity_grid(12, 12, torch::kFloat64);
    auto mom = compute_moments({oracle::random_maps(3, 5, 12, 12)}, grid);
    EXPECT_LT(max_dev(mom.cov, mom.cov.transpose(-1, -2)), 1e-8);
    auto eig = torch::linalg_eigvalsh(mom.cov);
    EXPECT_TRUE((eig >= kCovarianceFloor * (1 - 1e-9)).all().item<bool>());
    EXPECT_TRUE((mom.mean.abs() <= 1.0).all().item<bool>());
}

TEST(ComputeMoments, TranslatingMapShiftsMeanByOnePitch) {
    auto grid = make_identity_grid(16, 16, torch::kFloat64);
    auto m = torch::full({1, 1, 16, 16}, 1e-12, torch::kFloat64);
    m.slice(2, 5, 9).slice(3, 4, 8) += torch::rand({4, 4}, torch::kFloat64) + 0.1;
    auto shifted = torch::roll(m, {1}, {3});
    auto a = compute_moments({m}, grid), b = compute_moments({shifted}, grid);
    EXPECT_NEAR((b.mean - a.mean)[0][0][1].item<double>(), 2.0 / 15.0, 1e-9);
    EXPECT_NEAR((b.mean - a.mean)[0][0][0].item<double>(), 0.0, 1e-9);
    EXPECT_LT(max_dev(a.cov, b.cov), 1e-9);
}

TEST(ComputeMoments, RejectsGridMismatch) {
    EXPECT_THROW(compute_moments({torch::rand({1, 1, 4, 4})}, make_identity_grid(5, 5)), std::invalid_argument);
}

TEST(RenderApproxMaps, ClosedFormValues) {
    auto grid = CoordGrid{torch::tensor({0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 2.0}, torch::kFloat64).reshape({2, 2, 2})};
    PartMoments mom{torch::zeros({1, 1, 2}, torch::kFloat64), torch::eye(2, torch::kFloat64).reshape({1, 1, 2, 2})};
    auto v = render_approx_maps(mom, grid).values[0][0];
    EXPECT_DOUBLE_EQ(v[0][0].item<double>(), 1.0);        // u = mu
    EXPECT_NEAR(v[0][1].item<double>(), 1.0 / 3.0, 1e-15);  // (1, 1)
    EXPECT_NEAR(v[1][0].item<double>(), 0.5, 1e-15);        // Mahalanobis distance 1
}

TEST(RenderApproxMaps, MatchesLoopOracle) {
    torch::manual_seed(3);
    auto grid = make_identity_grid(10, 11, torch::kFloat64);
    for (int i = 0; i < 10; ++i) {
        auto mean = torch::rand({2, 3, 2}, torch::kFloat64) * 2 - 1;
        auto a = torch::randn({2, 3, 2, 2}, torch::kFloat64);
        auto cov = torch::matmul(a, a.transpose(-1, -2)) + 0.05 * torch::eye(2, torch::kFloat64);
        EXPECT_LT(max_dev(render_approx_maps({mean, cov}, grid).values, oracle::render(mean, cov, grid.coords)), 1e-12);
    }
}

TEST(RenderApproxMaps, LargerCovarianceRaisesValue) {
    auto grid = make_identity_grid(9, 9, torch::kFloat64);
    auto mean = torch::zeros({1, 1, 2}, torch::kFloat64);
    auto cov = 0.1 * torch::eye(2, torch::kFloat64).reshape({1, 1, 2, 2});
    auto small = render_approx_maps({mean, cov}, grid).values;
    auto large = render_approx_maps({mean, 2.0 * cov}, grid).values;
    EXPECT_TRUE((large >= small).all().item<bool>());
    // doubling Sigma halves the quadratic form
    auto q_small = 1.0 / small - 1.0, q_large = 1.0 / large - 1.0;
    EXPECT_LT(max_dev(q_large * 2.0, q_small), 1e-12);
}

TEST(RenderApproxMaps, RejectsIndefiniteCovariance) {
    auto grid = make_identity_grid(4, 4, torch::kFloat64);
    auto cov = torch::tensor({1.0, 2.0, 2.0, 1.0}, torch::kFloat64).reshape({1, 1, 2, 2});
    EXPECT_THROW(render_approx_maps({torch::zeros({1, 1, 2}, torch::kFloat64), cov}, grid), std::invalid_argument);
}

TEST(DecoderMoments, IsotropicAndFull) {
    PartMoments mom{torch::rand({2, 3, 2}), torch::rand({2, 3, 2, 2})};
    auto iso = decoder_moments(mom, CovarianceMode::Isotropic, 0.02, 2.0);
    EXPECT_TRUE(torch::equal(iso.mean, mom.mean));
    EXPECT_NEAR(iso.cov[1][2][0][0].item<float>(), 0.04F, 1e-8);
    EXPECT_EQ(iso.cov[1][2][0][1].item<float>(), 0.0F);
    auto full = decoder_moments(mom, CovarianceMode::Full, 0.02, 0.5);
    EXPECT_TRUE(torch::allclose(full.cov, mom.cov * 0.5));
}

TEST(PoolAppearance, SpikeSelectsFeature) {
    auto f = torch::randn({1, 5, 6, 6}, torch::kFloat64);
    auto m = torch::zeros({1, 1, 6, 6}, torch::kFloat64);
    m[0][0][2][4] = 1.0;
    auto a = pool_appearance({f}, {m}).features[0][0];
    EXPECT_LT(max_dev(a, f[0].select(1, 2).select(1, 4)), 1e-7);
}

TEST(PoolAppearance, UniformMapGivesSpatialMean) {
    auto f = torch::randn({1, 4, 5, 5}, torch::kFloat64);
    auto a = pool_appearance({f}, {torch::ones({1, 1, 5, 5}, torch::kFloat64)}).features[0][0];
    EXPECT_LT(max_dev(a, f[0].mean({1, 2})), 1e-9);
}

TEST(PoolAppearance, MatchesLoopOracle) {
    torch::manual_seed(4);
    for (int i = 0; i < 10; ++i) {
        auto f = torch::randn({2, 6, 8, 8}, torch::kFloat64);
        auto m = oracle::random_maps(2, 3, 8, 8);
        EXPECT_LT(max_dev(pool_appearance({f}, {m}).features, oracle::pool(f, m)), 1e-10);
    }
}

TEST(PoolAppearance, InvariantToMapScale) {
    auto f = torch::randn({1, 3, 6, 6}, torch::kFloat64);
    auto m = oracle::random_maps(1, 2, 6, 6);
    EXPECT_LT(max_dev(pool_appearance({f}, {m}).features, pool_appearance({f}, {m * 7.5}).features), 1e-8);
}

TEST(ProjectAppearance, SinglePartAtOneGivesHalf) {
    auto alpha = torch::randn({1, 1, 4}, torch::kFloat64);
    auto fx = project_appearance({alpha}, {torch::ones({1, 1, 3, 3}, torch::kFloat64)}).values;
    for (int64_t n = 0; n < 4; ++n) {
        EXPECT_LT((fx[0][n] - alpha[0][0][n] / 2).abs().max().item<double>(), 1e-15);
    }
}

TEST(ProjectAppearance, VanishingMapsGiveZero) {
    auto alpha = torch::randn({1, 3, 4}, torch::kFloat64);
    auto fx = project_appearance({alpha}, {torch::full({1, 3, 3, 3}, 1e-12, torch::kFloat64)}).values;
    EXPECT_LT(fx.abs().max().item<double>(), 1e-10);
}

TEST(ProjectAppearance, MatchesLoopOracle) {
    torch::manual_seed(5);
    for (int i = 0; i < 10; ++i) {
        auto alpha = torch::randn({2, 4, 5}, torch::kFloat64);
        auto approx = oracle::random_maps(2, 4, 7, 6);
        EXPECT_LT(max_dev(project_appearance({alpha}, {approx}).values, oracle::project(alpha, approx)), 1e-10);
    }
}

TEST(PartcoreGradients, FiniteDifferences) {
    torch::manual_seed(6);
    auto grid = make_identity_grid(6, 6, torch::kFloat64);
    auto w_mom = torch::randn({1, 2, 2}, torch::kFloat64);
    auto w_cov = torch::randn({1, 2, 2, 2}, torch::kFloat64);
    auto moments_fn = [&](const std::vector<torch::Tensor>& in) {
        auto mom = compute_moments({in[0]}, grid);
        return (mom.mean * w_mom).sum() + (mom.cov * w_cov).sum();
    };
    EXPECT_LT(oracle::gradient_error(moments_fn, {oracle::random_maps(1, 2, 6, 6)}), 1e-4);

    auto w_r = torch::randn({1, 2, 6, 6}, torch::kFloat64);
    auto render_fn = [&](const std::vector<torch::Tensor>& in) {
        return (render_approx_maps({in[0], in[1]}, grid).values * w_r).sum();
    };
    auto mean = torch::rand({1, 2, 2}, torch::kFloat64) - 0.5;
    auto cov = torch::tensor({0.2, 0.05, 0.05, 0.3, 0.1, -0.02, -0.02, 0.15}, torch::kFloat64).reshape({1, 2, 2, 2});
    EXPECT_LT(oracle::gradient_error(render_fn, {mean, cov}), 1e-4);

    auto w_p = torch::randn({1, 2, 3}, torch::kFloat64);
    auto pool_fn = [&](const std::vector<torch::Tensor>& in) {
        return (pool_appearance({in[0]}, {in[1]}).features * w_p).sum();
    };
    EXPECT_LT(oracle::gradient_error(pool_fn, {torch::randn({1, 3, 5, 5}, torch::kFloat64),
                                               oracle::random_maps(1, 2, 5, 5)}),
              1e-4);

    auto w_f = torch::randn({1, 3, 5, 5}, torch::kFloat64);
    auto project_fn = [&](const std::vector<torch::Tensor>& in) {
        return (project_appearance({in[0]}, {in[1]}).values * w_f).sum();
    };
    EXPECT_LT(oracle::gradient_error(project_fn, {torch::randn({1, 2, 3}, torch::kFloat64),
                                                  oracle::random_maps(1, 2, 5, 5)}),
              1e-4);
}

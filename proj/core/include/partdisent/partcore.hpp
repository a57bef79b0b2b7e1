#pragma once

#include <torch/torch.h>

#include "partdisent/geometry.hpp"

namespace partdisent {

/// Guard added to every normalization denominator.
inline constexpr double kNormalizationEps = 1e-8;
/// Isotropic floor added to every covariance so that it stays invertible.
inline constexpr double kCovarianceFloor = 1e-6;

/// Part activation maps sigma_i(x), B x K x h x w, strictly positive.
struct ActivationMaps {
    torch::Tensor values;

    int64_t batch() const { return values.size(0); }
    int64_t parts() const { return values.size(1); }
};

/// First two moments of each normalized activation map.
struct PartMoments {
    torch::Tensor mean;  // B x K x 2, (row, col)
    torch::Tensor cov;   // B x K x 2 x 2

    PartMoments detach() const { return {mean.detach(), cov.detach()}; }
};

/// Per-part appearance vectors alpha_i, B x K x n.
struct PartAppearances {
    torch::Tensor features;
};

/// Dense appearance encoding, B x n x h x w (channels first, like every
/// other feature tensor handed to the networks).
struct LocalizedFeatures {
    torch::Tensor values;
};

/// Which covariance the decoder-side approximation uses.
enum class CovarianceMode {
    Isotropic,  // fixed kappa * I, confines part shapes
    Full,       // covariance of the normalized activation map
};

/// sigma_i / (sum_u sigma_i + eps) for every batch item and part.
ActivationMaps normalize_maps(const ActivationMaps& m);

/// mu = sum_u p(u) u,  Sigma = sum_u p(u) (u - mu)(u - mu)^T + floor * I.
PartMoments compute_moments(const ActivationMaps& m, const CoordGrid& grid);

/// Replaces covariances according to the decoder approximation variant;
/// cov_scale multiplies the resulting matrices.
PartMoments decoder_moments(const PartMoments& mom, CovarianceMode mode, double kappa,
                            double cov_scale = 1.0);

/// Two-moment reconstruction 1 / (1 + (u - mu)^T Sigma^{-1} (u - mu)).
/// Throws std::invalid_argument if any covariance is not positive definite.
ActivationMaps render_approx_maps(const PartMoments& mom, const CoordGrid& grid);

/// alpha_i = sum_u f[u] sigma_i[u] / (sum_u sigma_i[u] + eps).
PartAppearances pool_appearance(const LocalizedFeatures& f, const ActivationMaps& m);

/// f_x[u] = sum_i alpha_i approx_i[u] / (1 + sum_j approx_j[u]).
LocalizedFeatures project_appearance(const PartAppearances& a, const ActivationMaps& approx);

}  // namespace partdisent

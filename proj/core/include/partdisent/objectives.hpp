#pragma once

#include <optional>
#include <span>

#include <torch/torch.h>

#include "partdisent/geometry.hpp"
#include "partdisent/partcore.hpp"

namespace partdisent {

struct LossWeights {
    double lambda_mu = 1.0;
    double lambda_sigma = 1.0;
    double lambda_scal = 0.2;  // soft-mask length scale, normalized units
    double lambda_adv = 1.0;
};

/// mask[u] = min(sum_i 1 / (1 + |u - mu_i| / lambda_scal), 1), B x 1 x H x W.
torch::Tensor soft_mask(const PartMoments& mom, double lambda_scal, const CoordGrid& grid);

/// Mean over batch and pixels of mask * sum_c |x - x_hat|.
/// Throws std::invalid_argument on shape mismatch.
torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                                  const torch::Tensor& mask);

/// Per-sample sum_i lambda_mu |mu_a - mu_b|_2 + lambda_sigma |Sigma_a - Sigma_b|_1, averaged
/// over samples whose entry in `valid` (shape B, 0/1) is set. An undefined
/// `valid` counts every sample; if none is valid the result is zero.
torch::Tensor equivariance_loss(const PartMoments& a, const PartMoments& b, const LossWeights& w,
                                const torch::Tensor& valid = {});

/// Moments of (maps o s): each map is resampled through the warp induced by
/// its transform and then reduced with compute_moments. One transform per
/// batch item, or a single shared transform.
PartMoments warped_map_moments(const ActivationMaps& maps, std::span<const TpsTransform> transforms,
                               const CoordGrid& grid);

struct AdversarialLosses {
    torch::Tensor discriminator;  // 0.5 (BCE(real, 1) + BCE(fake, 0))
    torch::Tensor generator;      // BCE(fake, 1), non-saturating
};

AdversarialLosses adversarial_losses(const torch::Tensor& logits_real, const torch::Tensor& logits_fake);

/// rec + equiv (+ lambda_adv * adv_g). Throws NumericError naming the first
/// non-finite component.
torch::Tensor total_loss(const torch::Tensor& rec, const torch::Tensor& equiv,
                         const std::optional<torch::Tensor>& adv_g, const LossWeights& w);

}  // namespace partdisent

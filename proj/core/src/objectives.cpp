#include "partdisent/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "partdisent/errors.hpp"

namespace partdisent {

namespace F = torch::nn::functional;

torch::Tensor soft_mask(const PartMoments& mom, double lambda_scal, const CoordGrid& grid) {
    if (!(lambda_scal > 0.0)) {
        throw std::invalid_argument("soft_mask: lambda_scal must be positive");
    }
    auto u = grid.coords.to(mom.mean.scalar_type());
    auto d = u.unsqueeze(0).unsqueeze(0) - mom.mean.unsqueeze(2).unsqueeze(2);  // B x K x H x W x 2
    auto dist = torch::sqrt((d * d).sum(-1));
    auto terms = 1.0 / (1.0 + dist / lambda_scal);
    return terms.sum(1, /*keepdim=*/true).clamp_max(1.0);
}

torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                                  const torch::Tensor& mask) {
    if (x.sizes() != x_hat.sizes()) {
        throw std::invalid_argument("reconstruction_loss: image shapes differ");
    }
    if (mask.size(0) != x.size(0) || mask.size(-1) != x.size(-1) || mask.size(-2) != x.size(-2)) {
        throw std::invalid_argument("reconstruction_loss: mask does not match the images");
    }
    auto l1 = (x - x_hat).abs().sum(1, /*keepdim=*/true);
    return (mask * l1).mean();
}

torch::Tensor equivariance_loss(const PartMoments& a, const PartMoments& b, const LossWeights& w,
                                const torch::Tensor& valid) {
    if (a.mean.sizes() != b.mean.sizes()) {
        throw std::invalid_argument("equivariance_loss: part counts differ");
    }
    auto mean_term = torch::linalg_vector_norm(a.mean - b.mean, 2, {-1}, false, c10::nullopt);
    auto cov_term = (a.cov - b.cov).abs().sum({-2, -1});
    auto per_sample = (w.lambda_mu * mean_term + w.lambda_sigma * cov_term).sum(-1);  // B
    if (!valid.defined()) return per_sample.mean();
    auto v = valid.to(per_sample.scalar_type());
    return (per_sample * v).sum() / v.sum().clamp_min(1.0);
}

PartMoments warped_map_moments(const ActivationMaps& maps, std::span<const TpsTransform> transforms,
                               const CoordGrid& grid) {
    const int64_t B = maps.batch();
    if (transforms.empty() ||
        (transforms.size() != 1 && static_cast<int64_t>(transforms.size()) != B)) {
        throw std::invalid_argument("warped_map_moments: need one transform or one per sample");
    }
    std::vector<torch::Tensor> grids;
    grids.reserve(B);
    for (int64_t b = 0; b < B; ++b) {
        const auto& t = transforms.size() == 1 ? transforms[0] : transforms[b];
        grids.push_back(apply_transform(t, grid).coords);
    }
    auto warped = warp_image(maps.values, CoordGrid{torch::stack(grids)});
    return compute_moments(ActivationMaps{warped}, grid);
}

AdversarialLosses adversarial_losses(const torch::Tensor& logits_real, const torch::Tensor& logits_fake) {
    // BCE(z, 1) = softplus(-z), BCE(z, 0) = softplus(z)
    auto d_real = F::softplus(-logits_real).mean();
    auto d_fake = F::softplus(logits_fake).mean();
    return {0.5 * (d_real + d_fake), F::softplus(-logits_fake).mean()};
}

torch::Tensor total_loss(const torch::Tensor& rec, const torch::Tensor& equiv,
                         const std::optional<torch::Tensor>& adv_g, const LossWeights& w) {
    auto check = [](const char* name, const torch::Tensor& t) {
        if (!std::isfinite(t.item<double>())) {
            throw NumericError(name, std::string(name) + " loss is not finite");
        }
    };
    check("reconstruction", rec);
    check("equivariance", equiv);
    auto total = rec + equiv;
    if (adv_g) {
        check("adversarial", *adv_g);
        total = total + w.lambda_adv * *adv_g;
    }
    return total;
}

}  // namespace partdisent

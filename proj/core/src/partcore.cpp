#include "partdisent/partcore.hpp"

#include <stdexcept>

namespace partdisent {

ActivationMaps normalize_maps(const ActivationMaps& m) {
    auto mass = m.values.sum({2, 3}, /*keepdim=*/true);
    return {m.values / (mass + kNormalizationEps)};
}

PartMoments compute_moments(const ActivationMaps& m, const CoordGrid& grid) {
    const auto& v = m.values;
    if (v.size(2) != grid.height() || v.size(3) != grid.width()) {
        throw std::invalid_argument("compute_moments: map and grid sizes differ");
    }
    auto p = normalize_maps(m).values.flatten(2);            // B x K x N
    auto u = grid.points().to(v.scalar_type());               // N x 2
    auto mean = torch::matmul(p, u);                          // B x K x 2
    auto d = u.unsqueeze(0).unsqueeze(0) - mean.unsqueeze(2);  // B x K x N x 2
    auto cov = torch::einsum("bkn,bkni,bknj->bkij", {p, d, d});
    auto eye = torch::eye(2, v.options());
    return {mean, cov + kCovarianceFloor * eye};
}

PartMoments decoder_moments(const PartMoments& mom, CovarianceMode mode, double kappa,
                            double cov_scale) {
    if (mode == CovarianceMode::Isotropic) {
        auto eye = torch::eye(2, mom.mean.options());
        auto cov = (kappa * cov_scale * eye).expand(mom.cov.sizes());
        return {mom.mean, cov};
    }
    return {mom.mean, mom.cov * cov_scale};
}

ActivationMaps render_approx_maps(const PartMoments& mom, const CoordGrid& grid) {
    const auto& cov = mom.cov;
    auto a = cov.select(-1, 0).select(-1, 0);
    auto b = 0.5 * (cov.select(-1, 1).select(-1, 0) + cov.select(-1, 0).select(-1, 1));
    auto c = cov.select(-1, 1).select(-1, 1);
    auto det = a * c - b * b;
    if (!(a > 0).all().item<bool>() || !(det > 0).all().item<bool>()) {
        throw std::invalid_argument("render_approx_maps: covariance is not positive definite");
    }
    auto u = grid.coords.to(mom.mean.scalar_type());  // h x w x 2
    // d: B x K x h x w x 2
    auto d = u.unsqueeze(0).unsqueeze(0) - mom.mean.unsqueeze(2).unsqueeze(2);
    auto dr = d.select(-1, 0);
    auto dc = d.select(-1, 1);
    auto ex = [](const torch::Tensor& t) { return t.unsqueeze(-1).unsqueeze(-1); };
    auto quad = (ex(c) * dr * dr - 2.0 * ex(b) * dr * dc + ex(a) * dc * dc) / ex(det);
    return {1.0 / (1.0 + quad)};
}

PartAppearances pool_appearance(const LocalizedFeatures& f, const ActivationMaps& m) {
    const auto& fv = f.values;
    const auto& mv = m.values;
    if (fv.size(2) != mv.size(2) || fv.size(3) != mv.size(3)) {
        throw std::invalid_argument("pool_appearance: spatial sizes differ");
    }
    auto num = torch::einsum("bnhw,bkhw->bkn", {fv, mv});
    auto den = mv.sum({2, 3}).unsqueeze(-1) + kNormalizationEps;
    return {num / den};
}

LocalizedFeatures project_appearance(const PartAppearances& a, const ActivationMaps& approx) {
    auto num = torch::einsum("bkn,bkhw->bnhw", {a.features, approx.values});
    auto den = 1.0 + approx.values.sum(1, /*keepdim=*/true);
    return {num / den};
}

}  // namespace partdisent

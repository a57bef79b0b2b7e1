#include "partdisent/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace partdisent {

namespace F = torch::nn::functional;

CoordGrid make_identity_grid(int64_t h, int64_t w, torch::Dtype dtype) {
    if (h < 2 || w < 2) {
        throw std::invalid_argument("make_identity_grid: grid must be at least 2x2, got " +
                                    std::to_string(h) + "x" + std::to_string(w));
    }
    auto opts = torch::TensorOptions().dtype(dtype);
    auto rows = torch::linspace(-1.0, 1.0, h, opts);
    auto cols = torch::linspace(-1.0, 1.0, w, opts);
    auto mesh = torch::meshgrid({rows, cols}, "ij");
    return CoordGrid{torch::stack({mesh[0], mesh[1]}, -1)};
}

namespace {

torch::Tensor control_lattice(int64_t n, torch::Dtype dtype) {
    return make_identity_grid(n, n, dtype).points().clone();
}

torch::Tensor identity_affine(torch::Dtype dtype) {
    return torch::tensor({1.0, 0.0, 0.0, 0.0, 1.0, 0.0}, torch::TensorOptions().dtype(dtype))
        .reshape({2, 3});
}

}  // namespace

TpsTransform TpsTransform::identity(int64_t control_grid, torch::Dtype dtype) {
    auto cp = control_lattice(control_grid, dtype);
    return {cp, torch::zeros_like(cp), identity_affine(dtype)};
}

TpsTransform TpsTransform::translation(double d_row, double d_col, int64_t control_grid,
                                       torch::Dtype dtype) {
    auto t = identity(control_grid, dtype);
    t.affine.index_put_({0, 2}, d_row);
    t.affine.index_put_({1, 2}, d_col);
    return t;
}

TpsTransform TpsTransform::to(torch::Dtype dtype) const {
    return {control_points.to(dtype), offsets.to(dtype), affine.to(dtype)};
}

TpsTransform sample_tps(const TpsSamplingConfig& cfg, SeededRng& rng) {
    auto t = TpsTransform::identity(cfg.control_grid, torch::kFloat64);
    auto off = t.offsets.accessor<double, 2>();
    for (int64_t p = 0; p < off.size(0); ++p) {
        off[p][0] = rng.normal(0.0, cfg.offset_std);
        off[p][1] = rng.normal(0.0, cfg.offset_std);
    }
    const double rot = cfg.max_rotation_deg * std::numbers::pi / 180.0;
    const double theta = rng.uniform(-rot, rot);
    const double scale = rng.uniform(cfg.min_scale, cfg.max_scale);
    const double tr = rng.uniform(-cfg.max_translation, cfg.max_translation);
    const double tc = rng.uniform(-cfg.max_translation, cfg.max_translation);
    auto a = t.affine.accessor<double, 2>();
    a[0][0] = scale * std::cos(theta);
    a[0][1] = -scale * std::sin(theta);
    a[0][2] = tr;
    a[1][0] = scale * std::sin(theta);
    a[1][1] = scale * std::cos(theta);
    a[1][2] = tc;
    return t.to(torch::kFloat32);
}

torch::Tensor tps_kernel_from_squared(const torch::Tensor& r2) {
    auto positive = r2 > 0;
    auto safe = torch::where(positive, r2, torch::ones_like(r2));
    // r^2 log r = 0.5 r^2 log r^2
    return torch::where(positive, 0.5 * safe * torch::log(safe), torch::zeros_like(r2));
}

namespace {

torch::Tensor pairwise_sq_dist(const torch::Tensor& a, const torch::Tensor& b) {
    auto d = a.unsqueeze(1) - b.unsqueeze(0);
    return (d * d).sum(-1);
}

}  // namespace

CoordGrid apply_transform(const TpsTransform& t, const CoordGrid& grid) {
    const auto dtype = grid.coords.scalar_type();
    auto cp = t.control_points.to(dtype);
    auto offsets = t.offsets.to(dtype);
    auto affine = t.affine.to(dtype);
    const int64_t P = cp.size(0);

    auto pts = grid.coords.reshape({-1, 2});
    auto ones_pts = torch::ones({pts.size(0), 1}, pts.options());
    auto homog = torch::cat({pts, ones_pts}, 1);  // N x 3 as (row, col, 1)
    auto warped = torch::matmul(homog, affine.transpose(0, 1));

    // System [[K, Q], [Q^T, 0]] [w; a] = [offsets; 0] with Q = [1, c].
    auto K = tps_kernel_from_squared(pairwise_sq_dist(cp, cp));
    auto Q = torch::cat({torch::ones({P, 1}, cp.options()), cp}, 1);
    auto top = torch::cat({K, Q}, 1);
    auto bottom = torch::cat({Q.transpose(0, 1), torch::zeros({3, 3}, cp.options())}, 1);
    auto L = torch::cat({top, bottom}, 0);
    auto rhs = torch::cat({offsets, torch::zeros({3, 2}, cp.options())}, 0);
    auto coeffs = torch::linalg_solve(L, rhs);
    auto w = coeffs.slice(0, 0, P);
    auto a = coeffs.slice(0, P, P + 3);

    auto Upts = tps_kernel_from_squared(pairwise_sq_dist(pts, cp));
    auto Qpts = torch::cat({ones_pts, pts}, 1);
    auto f = torch::matmul(Upts, w) + torch::matmul(Qpts, a);

    return CoordGrid{(warped + f).reshape(grid.coords.sizes())};
}

torch::Tensor warp_image(const torch::Tensor& img, const CoordGrid& grid) {
    const bool batched = img.dim() == 4;
    auto input = batched ? img : img.unsqueeze(0);
    auto g = grid.coords;
    if (g.dim() == 3) {
        g = g.unsqueeze(0).expand({input.size(0), g.size(0), g.size(1), 2});
    }
    if (g.size(0) != input.size(0)) {
        throw std::invalid_argument("warp_image: grid batch does not match image batch");
    }
    // grid_sample expects (x, y) = (col, row).
    auto xy = g.flip(-1).to(input.scalar_type());
    auto out = F::grid_sample(input, xy,
                              F::GridSampleFuncOptions()
                                  .mode(torch::kBilinear)
                                  .padding_mode(torch::kBorder)
                                  .align_corners(true));
    return batched ? out : out.squeeze(0);
}

AppearanceTransform sample_appearance(const AppearanceJitterConfig& cfg, SeededRng& rng) {
    AppearanceTransform t;
    t.brightness_delta = rng.uniform(-cfg.max_brightness, cfg.max_brightness);
    t.contrast_factor = rng.uniform(cfg.min_contrast, cfg.max_contrast);
    t.hue_delta = rng.uniform(-cfg.max_hue, cfg.max_hue);
    return t;
}

torch::Tensor hue_rotation_matrix(double hue_delta, torch::Dtype dtype) {
    // NTSC YIQ basis.
    auto to_yiq = torch::tensor({0.299, 0.587, 0.114,
                                 0.595716, -0.274453, -0.321263,
                                 0.211456, -0.522591, 0.311135},
                                torch::kFloat64)
                      .reshape({3, 3});
    const double c = std::cos(hue_delta);
    const double s = std::sin(hue_delta);
    auto rot = torch::tensor({1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c}, torch::kFloat64).reshape({3, 3});
    auto m = torch::matmul(torch::linalg_inv(to_yiq), torch::matmul(rot, to_yiq));
    return m.to(dtype);
}

torch::Tensor apply_appearance(const torch::Tensor& img, const AppearanceTransform& t) {
    if (!(t.contrast_factor > 0.0)) {
        throw std::invalid_argument("apply_appearance: contrast_factor must be positive");
    }
    const int64_t cdim = img.dim() - 3;
    if (img.size(cdim) != 3) {
        throw std::invalid_argument("apply_appearance: expected an RGB image");
    }
    auto rgb = img;
    if (t.hue_delta != 0.0) {
        auto m = hue_rotation_matrix(t.hue_delta, img.scalar_type()).to(img.device());
        rgb = torch::tensordot(m, img, {1}, {cdim});  // channel axis first
        if (cdim == 1) rgb = rgb.movedim(0, 1);
    }
    auto out = (rgb - 0.5) * t.contrast_factor + 0.5 + t.brightness_delta;
    return out.clamp(0.0, 1.0);
}

}  // namespace partdisent

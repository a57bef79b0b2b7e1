#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "partdisent/rng.hpp"

namespace partdisent {

/// Normalized sampling coordinates in [-1, 1]^2, shape H x W x 2 (or
/// B x H x W x 2 for per-sample grids). The last axis is (row, col).
struct CoordGrid {
    torch::Tensor coords;

    int64_t height() const { return coords.size(-3); }
    int64_t width() const { return coords.size(-2); }
    /// Flattened (H*W) x 2 view for a single grid.
    torch::Tensor points() const { return coords.reshape({-1, 2}); }
};

CoordGrid make_identity_grid(int64_t h, int64_t w, torch::Dtype dtype = torch::kFloat32);

/// Thin-plate spline with a global affine part.
///
/// The warp maps a coordinate u to A [u; 1] + f(u), where f is the minimum
/// bending-energy interpolant with f(control_points[p]) = offsets[p].
struct TpsTransform {
    torch::Tensor control_points;  // P x 2, normalized (row, col)
    torch::Tensor offsets;         // P x 2, normalized displacements
    torch::Tensor affine;          // 2 x 3

    static TpsTransform identity(int64_t control_grid = 5, torch::Dtype dtype = torch::kFloat32);
    /// Pure affine translation by (d_row, d_col).
    static TpsTransform translation(double d_row, double d_col, int64_t control_grid = 5,
                                    torch::Dtype dtype = torch::kFloat32);

    TpsTransform to(torch::Dtype dtype) const;
};

struct TpsSamplingConfig {
    int64_t control_grid = 5;
    double offset_std = 0.1;
    double max_rotation_deg = 15.0;
    double min_scale = 0.9;
    double max_scale = 1.1;
    double max_translation = 0.1;
};

TpsTransform sample_tps(const TpsSamplingConfig& cfg, SeededRng& rng);

/// Radial basis U(r) = r^2 log r expressed through the squared distance,
/// with U(0) = 0.
torch::Tensor tps_kernel_from_squared(const torch::Tensor& r2);

/// Evaluates the transform at every grid coordinate. Differentiable with
/// respect to the offsets and the affine matrix.
CoordGrid apply_transform(const TpsTransform& t, const CoordGrid& grid);

/// Bilinear resampling with border replication: out[u] = img[grid[u]].
/// img is C x H x W or B x C x H x W; grid is H' x W' x 2 (shared) or
/// B x H' x W' x 2. Differentiable with respect to both inputs.
torch::Tensor warp_image(const torch::Tensor& img, const CoordGrid& grid);

/// Photometric change a(x): hue rotation, contrast about mid-gray, brightness.
struct AppearanceTransform {
    double brightness_delta = 0.0;
    double contrast_factor = 1.0;
    double hue_delta = 0.0;  // radians
};

struct AppearanceJitterConfig {
    double max_brightness = 0.3;
    double min_contrast = 0.7;
    double max_contrast = 1.3;
    double max_hue = 0.15;
};

AppearanceTransform sample_appearance(const AppearanceJitterConfig& cfg, SeededRng& rng);

/// The 3x3 RGB matrix that rotates chroma by hue_delta in YIQ space.
torch::Tensor hue_rotation_matrix(double hue_delta, torch::Dtype dtype = torch::kFloat64);

/// Applies t to an RGB image (3 x H x W or B x 3 x H x W) with values in
/// [0, 1]. Pixel positions are untouched; the result is clipped to [0, 1].
/// Throws std::invalid_argument when contrast_factor <= 0.
torch::Tensor apply_appearance(const torch::Tensor& img, const AppearanceTransform& t);

}  // namespace partdisent

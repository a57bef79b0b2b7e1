#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "partdisent/partcore.hpp"

namespace partdisent {

/// Fixed 16-entry RGB palette in [0, 1]; part k uses entry k % 16.
const std::array<std::array<float, 3>, 16>& part_palette();

/// Per-pixel argmax part over K x h x w maps, upsampled (nearest) to H x W.
torch::Tensor part_labels(const torch::Tensor& maps, int64_t height, int64_t width);

/// 3 x H x W palette image of the argmax labels.
torch::Tensor label_image(const torch::Tensor& labels);

/// Alpha-blends the argmax palette colors over `image` (3 x H x W), weighted
/// by each pixel's peak activation relative to its part's maximum.
torch::Tensor overlay_maps(const torch::Tensor& image, const torch::Tensor& maps, double alpha = 0.6);

struct MomentRow {
    std::string image;
    int64_t part = 0;
    double mean_row = 0.0, mean_col = 0.0;
    double cov_rr = 0.0, cov_rc = 0.0, cov_cc = 0.0;
};

/// Flattens B x K moments into one row per (image, part).
std::vector<MomentRow> moment_rows(const PartMoments& mom, const std::vector<std::string>& names);
void write_moments_csv(const std::filesystem::path& path, const std::vector<MomentRow>& rows);
std::vector<MomentRow> read_moments_csv(const std::filesystem::path& path);

}  // namespace partdisent

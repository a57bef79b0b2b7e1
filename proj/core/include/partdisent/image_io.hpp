#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace partdisent {

/// Reads an image file as a float RGB tensor 3 x H x W in [0, 1].
/// Throws DataError if the file cannot be decoded.
torch::Tensor load_image(const std::filesystem::path& path);

/// Writes a 3 x H x W tensor in [0, 1] (values are clipped) as PNG or any
/// other format OpenCV infers from the extension.
void save_image(const std::filesystem::path& path, const torch::Tensor& img);

/// Center-crops to a square and resizes to size x size. Returns the tensor
/// together with the affine map (scale, offset_x, offset_y) applied to pixel
/// coordinates (pixel centres at integers): p' = scale * (p - offset + 0.5) - 0.5.
struct CropResize {
    double scale = 1.0;
    double offset_x = 0.0;
    double offset_y = 0.0;

    double map_x(double x) const { return scale * (x - offset_x + 0.5) - 0.5; }
    double map_y(double y) const { return scale * (y - offset_y + 0.5) - 0.5; }
};
torch::Tensor center_crop_resize(const torch::Tensor& img, int64_t size, CropResize* record = nullptr);

}  // namespace partdisent

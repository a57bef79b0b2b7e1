#include "partdisent/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "partdisent/errors.hpp"

namespace partdisent {

torch::Tensor load_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw DataError("cannot read image: " + path.string());
    }
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
    return t.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0).contiguous();
}

void save_image(const std::filesystem::path& path, const torch::Tensor& img) {
    auto t = img.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
    t = t.permute({1, 2, 0}).contiguous();
    cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr<uint8_t>());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), bgr)) {
        throw DataError("cannot write image: " + path.string());
    }
}

torch::Tensor center_crop_resize(const torch::Tensor& img, int64_t size, CropResize* record) {
    const int64_t H = img.size(1), W = img.size(2);
    const int64_t side = std::min(H, W);
    const int64_t top = (H - side) / 2, left = (W - side) / 2;
    auto crop = img.slice(1, top, top + side).slice(2, left, left + side).contiguous();
    if (record) {
        record->offset_x = static_cast<double>(left);
        record->offset_y = static_cast<double>(top);
        record->scale = static_cast<double>(size) / static_cast<double>(side);
    }
    if (side == size) return crop;
    auto hwc = crop.permute({1, 2, 0}).contiguous();
    cv::Mat src(static_cast<int>(side), static_cast<int>(side), CV_32FC3, hwc.data_ptr<float>());
    cv::Mat dst;
    const int interp = side > size ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(src, dst, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0, interp);
    auto out = torch::from_blob(dst.data, {size, size, 3}, torch::kFloat32).clone();
    return out.permute({2, 0, 1}).contiguous();
}

}  // namespace partdisent

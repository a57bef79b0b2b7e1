#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "partdisent/partcore.hpp"

namespace partdisent {

/// Architecture hyperparameters. Defaults follow the full-scale setting:
/// 128x128 input, hourglasses at 64x64 with 256 channels.
struct ModelConfig {
    int64_t num_parts = 16;
    int64_t image_height = 128;
    int64_t image_width = 128;
    int64_t map_size = 64;           // working resolution of both hourglasses
    int64_t width = 256;             // residual block channels
    int64_t shape_min_res = 4;       // lowest hourglass resolution of the shape encoder
    int64_t appearance_min_res = 32; // lowest hourglass resolution of the appearance encoder
    int64_t appearance_dim = 256;    // n
    int64_t decoder_width = 512;     // channels of the first upsampling stage
    int64_t decoder_min_width = 32;
    int64_t bottleneck_min_res = 4;
    int64_t bottleneck_max_res = 16;
    CovarianceMode covariance_mode = CovarianceMode::Isotropic;
    double kappa = 0.02;             // isotropic covariance of the decoder approximation
    double cov_scale = 1.0;
    int64_t patch_size = 49;
    int64_t discriminator_width = 64;

    /// Throws ConfigError if sizes are inconsistent.
    void validate() const;
};

// ---------------------------------------------------------------------------
// building blocks

/// Pre-activation bottleneck residual block (hourglass style). Instance norm
/// keeps train and eval behaviour identical and independent of the batch.
struct ResidualImpl : torch::nn::Module {
    ResidualImpl(int64_t in, int64_t out);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, skip{nullptr};
    torch::nn::InstanceNorm2d n1{nullptr}, n2{nullptr}, n3{nullptr};
};
TORCH_MODULE(Residual);

/// Single-stack hourglass of the given recursion depth; depth 0 is a
/// plain residual block.
struct HourglassImpl : torch::nn::Module {
    HourglassImpl(int64_t depth, int64_t width);
    torch::Tensor forward(const torch::Tensor& x);

    int64_t depth;
    Residual up{nullptr}, low1{nullptr}, low3{nullptr}, inner_res{nullptr};
    std::shared_ptr<HourglassImpl> inner;
};
TORCH_MODULE(Hourglass);

// ---------------------------------------------------------------------------
// encoders, decoder, discriminator

struct ShapeEncoding {
    ActivationMaps maps;  // B x K x m x m, in (0, 1)
    torch::Tensor stem;   // B x width x m x m
};

struct ShapeEncoderImpl : torch::nn::Module {
    explicit ShapeEncoderImpl(const ModelConfig& cfg);
    ShapeEncoding forward(const torch::Tensor& img);

    ModelConfig cfg;
    torch::nn::Sequential stem{nullptr};
    Hourglass hourglass{nullptr};
    torch::nn::Sequential head{nullptr};
};
TORCH_MODULE(ShapeEncoder);

struct AppearanceEncoderImpl : torch::nn::Module {
    explicit AppearanceEncoderImpl(const ModelConfig& cfg);
    LocalizedFeatures forward(const torch::Tensor& stem, const ActivationMaps& normalized);

    ModelConfig cfg;
    torch::nn::Conv2d entry{nullptr};
    Hourglass hourglass{nullptr};
    torch::nn::Conv2d exit{nullptr};
};
TORCH_MODULE(AppearanceEncoder);

/// Fixed average-pooling pyramid; owns no parameters.
struct DownsamplingPyramidImpl : torch::nn::Module {
    DownsamplingPyramidImpl(int64_t top_res, int64_t min_res) : top_res(top_res), min_res(min_res) {}
    /// Resolution -> pooled tensor, from top_res down to min_res.
    std::vector<torch::Tensor> forward(const torch::Tensor& x);

    int64_t top_res, min_res;
};
TORCH_MODULE(DownsamplingPyramid);

/// U-Net variant whose contracting path is the fixed pyramid above.
struct DecoderImpl : torch::nn::Module {
    explicit DecoderImpl(const ModelConfig& cfg);
    torch::Tensor forward(const ActivationMaps& approx, const LocalizedFeatures& fx);

    ModelConfig cfg;
    DownsamplingPyramid pyramid{nullptr};
    torch::nn::Sequential bottleneck{nullptr};
    std::vector<torch::nn::Sequential> stages;
    std::vector<int64_t> stage_res;
    torch::nn::Conv2d to_rgb{nullptr};
};
TORCH_MODULE(Decoder);

/// Four stride-2 convolutions and a dense head; one logit per patch.
struct PatchDiscriminatorImpl : torch::nn::Module {
    explicit PatchDiscriminatorImpl(const ModelConfig& cfg);
    torch::Tensor forward(const torch::Tensor& patches);

    torch::nn::Sequential convs{nullptr};
    torch::nn::Linear dense{nullptr};
    int64_t final_res;
};
TORCH_MODULE(PatchDiscriminator);

/// Output spatial size of the stride-2 stack (ceil division at each layer).
int64_t discriminator_output_size(int64_t patch_size);

// ---------------------------------------------------------------------------

/// All learnable parameters of the model.
struct ModelState {
    explicit ModelState(const ModelConfig& cfg, uint64_t seed);

    ModelConfig config;
    ShapeEncoder shape_encoder{nullptr};
    AppearanceEncoder appearance_encoder{nullptr};
    Decoder decoder{nullptr};
    PatchDiscriminator discriminator{nullptr};
    int64_t step = 0;

    /// Parameters updated by the main objective (both encoders + decoder).
    std::vector<torch::Tensor> generator_parameters() const;
    std::vector<torch::Tensor> discriminator_parameters() const;
    void train(bool on);
    void to(torch::Dtype dtype);
};

ShapeEncoding shape_encode(ModelState& state, const torch::Tensor& img);
LocalizedFeatures appearance_encode(ModelState& state, const torch::Tensor& stem,
                                    const ActivationMaps& normalized);
torch::Tensor decode(ModelState& state, const ActivationMaps& approx, const LocalizedFeatures& fx);

/// K square patches per image centred on the given means (normalized
/// (row, col)), border-replicated. img: B x C x H x W, means: B x K x 2.
/// Returns B x K x C x size x size. Throws std::invalid_argument for even sizes.
torch::Tensor extract_patches(const torch::Tensor& img, const torch::Tensor& means, int64_t size);

/// Logits B x K for image patches conditioned on approximate-map patches.
torch::Tensor discriminate(ModelState& state, const torch::Tensor& patches,
                           const torch::Tensor& cond);

}  // namespace partdisent

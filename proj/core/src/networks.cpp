#include "partdisent/networks.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "partdisent/errors.hpp"

namespace partdisent {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

bool is_pow2(int64_t v) { return v > 0 && std::has_single_bit(static_cast<uint64_t>(v)); }

int64_t log2_exact(int64_t v) { return std::bit_width(static_cast<uint64_t>(v)) - 1; }

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

constexpr double kHeadBias = -5.0;
constexpr double kHeadWeightScale = 4.0;

nn::LeakyReLU lrelu(double slope = 0.2) {
    return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(slope));
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model: " + msg); };
    if (num_parts < 1) fail("num_parts must be >= 1");
    if (image_height != image_width) fail("only square images are supported");
    if (!is_pow2(map_size) || map_size < 4) fail("map_size must be a power of two >= 4");
    if (image_height < map_size || image_height % map_size != 0 ||
        !is_pow2(image_height / map_size)) {
        fail("image size must be map_size times a power of two");
    }
    if (!is_pow2(shape_min_res) || shape_min_res < 2 || shape_min_res > map_size) fail("invalid shape_min_res");
    if (!is_pow2(appearance_min_res) || appearance_min_res < 2 || appearance_min_res > map_size) {
        fail("invalid appearance_min_res");
    }
    if (!is_pow2(bottleneck_min_res) || !is_pow2(bottleneck_max_res) ||
        bottleneck_min_res > bottleneck_max_res || bottleneck_max_res > map_size) {
        fail("invalid bottleneck resolutions");
    }
    if (width < 8 || width % 4 != 0) fail("width must be a multiple of 4 and >= 8");
    if (appearance_dim < 1 || decoder_width < 1 || decoder_min_width < 1) fail("invalid widths");
    if (!(kappa > 0.0) || !(cov_scale > 0.0)) fail("kappa and cov_scale must be positive");
    if (patch_size < 1 || patch_size % 2 == 0) fail("patch_size must be odd");
}

// --- Residual --------------------------------------------------------------

ResidualImpl::ResidualImpl(int64_t in, int64_t out) {
    const int64_t mid = std::max<int64_t>(out / 2, 1);
    conv1 = register_module("conv1", conv(in, mid, 1));
    conv2 = register_module("conv2", conv(mid, mid, 3));
    conv3 = register_module("conv3", conv(mid, out, 1));
    if (in != out) skip = register_module("skip", conv(in, out, 1));
    auto norm = [](int64_t c) { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(c).affine(true)); };
    n1 = register_module("n1", norm(in));
    n2 = register_module("n2", norm(mid));
    n3 = register_module("n3", norm(mid));
}

torch::Tensor ResidualImpl::forward(const torch::Tensor& x) {
    auto y = conv1(torch::relu(n1(x)));
    y = conv2(torch::relu(n2(y)));
    y = conv3(torch::relu(n3(y)));
    return y + (skip ? skip(x) : x);
}

// --- Hourglass -------------------------------------------------------------

HourglassImpl::HourglassImpl(int64_t depth, int64_t width) : depth(depth) {
    if (depth == 0) {
        up = register_module("up", Residual(width, width));
        return;
    }
    up = register_module("up", Residual(width, width));
    low1 = register_module("low1", Residual(width, width));
    if (depth > 1) {
        inner = register_module("inner", std::make_shared<HourglassImpl>(depth - 1, width));
    } else {
        inner_res = register_module("inner_res", Residual(width, width));
    }
    low3 = register_module("low3", Residual(width, width));
}

torch::Tensor HourglassImpl::forward(const torch::Tensor& x) {
    if (depth == 0) return up(x);
    auto upper = up(x);
    auto low = low1(F::max_pool2d(x, F::MaxPool2dFuncOptions(2)));
    low = inner ? inner->forward(low) : inner_res(low);
    low = low3(low);
    auto upsampled = F::interpolate(
        low, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    return upper + upsampled;
}

// --- Shape encoder ---------------------------------------------------------

ShapeEncoderImpl::ShapeEncoderImpl(const ModelConfig& c) : cfg(c) {
    const int64_t w = cfg.width;
    const int64_t factor = cfg.image_height / cfg.map_size;
    stem = nn::Sequential();
    stem->push_back(conv(3, w / 4, 7, factor >= 2 ? 2 : 1));
    stem->push_back(nn::ReLU());
    stem->push_back(Residual(w / 4, w / 2));
    for (int64_t f = factor; f > 2; f /= 2) {
        stem->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
    }
    stem->push_back(Residual(w / 2, w / 2));
    stem->push_back(Residual(w / 2, w));
    register_module("stem", stem);

    hourglass = register_module("hourglass",
                                Hourglass(log2_exact(cfg.map_size / cfg.shape_min_res), w));
    head = nn::Sequential(Residual(w, w), conv(w, w, 1), nn::ReLU(), conv(w, cfg.num_parts, 1));
    register_module("head", head);
    // Start sparse: sigmoid(-5) ~ 0.007 off-peak, with logits spread wide enough
    // that each map begins as a few confident blobs instead of a flat field.
    {
        torch::NoGradGuard guard;
        auto last = head->ptr(3)->as<nn::Conv2d>();
        last->bias.fill_(kHeadBias);
        last->weight.mul_(kHeadWeightScale);
    }
}

ShapeEncoding ShapeEncoderImpl::forward(const torch::Tensor& img) {
    if (img.dim() != 4 || img.size(1) != 3 || img.size(2) != cfg.image_height ||
        img.size(3) != cfg.image_width) {
        throw std::invalid_argument("shape_encode: expected B x 3 x " +
                                    std::to_string(cfg.image_height) + " x " +
                                    std::to_string(cfg.image_width) + " input");
    }
    auto features = stem->forward(img);
    auto maps = torch::sigmoid(head->forward(hourglass(features)));
    return {ActivationMaps{maps}, features};
}

// --- Appearance encoder ----------------------------------------------------

AppearanceEncoderImpl::AppearanceEncoderImpl(const ModelConfig& c) : cfg(c) {
    entry = register_module("entry", conv(cfg.width + cfg.num_parts, cfg.width, 1));
    hourglass = register_module(
        "hourglass", Hourglass(log2_exact(cfg.map_size / cfg.appearance_min_res), cfg.width));
    exit = register_module("exit", conv(cfg.width, cfg.appearance_dim, 1));
}

LocalizedFeatures AppearanceEncoderImpl::forward(const torch::Tensor& stem,
                                                 const ActivationMaps& normalized) {
    if (stem.size(1) != cfg.width || normalized.values.size(1) != cfg.num_parts) {
        throw std::invalid_argument("appearance_encode: channel mismatch");
    }
    // Normalized maps sum to one; rescale so they have unit mean per pixel.
    const double pixels = static_cast<double>(normalized.values.size(2) * normalized.values.size(3));
    auto x = torch::cat({stem, normalized.values * pixels}, 1);
    return {exit(torch::relu(hourglass(entry(x))))};
}

// --- Decoder ---------------------------------------------------------------

std::vector<torch::Tensor> DownsamplingPyramidImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> levels{x};
    for (int64_t r = top_res; r > min_res; r /= 2) {
        levels.push_back(F::avg_pool2d(levels.back(), F::AvgPool2dFuncOptions(2)));
    }
    return levels;
}

DecoderImpl::DecoderImpl(const ModelConfig& c) : cfg(c) {
    pyramid = register_module("pyramid", DownsamplingPyramid(cfg.map_size, cfg.bottleneck_min_res));
    const int64_t K = cfg.num_parts;
    const int64_t n = cfg.appearance_dim;
    int64_t width = cfg.decoder_width;
    bottleneck = nn::Sequential(conv(K + n, width, 3), lrelu(), conv(width, width, 3), lrelu());
    register_module("bottleneck", bottleneck);

    int64_t prev = width;
    int64_t stage = 0;
    for (int64_t r = cfg.bottleneck_min_res * 2; r <= cfg.image_height; r *= 2, ++stage) {
        const int64_t w = std::max(cfg.decoder_min_width, cfg.decoder_width >> (stage / 2));
        const int64_t in = prev + K + (r <= cfg.bottleneck_max_res ? n : 0);
        auto block = nn::Sequential(conv(in, w, 3), lrelu(), conv(w, w, 3), lrelu());
        stages.push_back(register_module("stage" + std::to_string(stage), block));
        stage_res.push_back(r);
        prev = w;
    }
    to_rgb = register_module("to_rgb", conv(prev, 3, 1));
}

torch::Tensor DecoderImpl::forward(const ActivationMaps& approx, const LocalizedFeatures& fx) {
    const auto& maps = approx.values;
    if (maps.size(2) != cfg.map_size || fx.values.size(2) != cfg.map_size) {
        throw std::invalid_argument("decode: inputs must be at the map resolution");
    }
    auto map_levels = pyramid(maps);
    auto feat_levels = pyramid(fx.values);
    auto level_of = [&](int64_t r) { return log2_exact(cfg.map_size / r); };
    auto maps_at = [&](int64_t r) {
        if (r <= cfg.map_size) return map_levels[level_of(r)];
        return F::interpolate(maps, F::InterpolateFuncOptions()
                                        .size(std::vector<int64_t>{r, r})
                                        .mode(torch::kBilinear)
                                        .align_corners(true));
    };

    const int64_t r0 = cfg.bottleneck_min_res;
    auto h = bottleneck->forward(torch::cat({feat_levels[level_of(r0)], map_levels[level_of(r0)]}, 1));
    for (size_t s = 0; s < stages.size(); ++s) {
        const int64_t r = stage_res[s];
        h = F::interpolate(h, F::InterpolateFuncOptions()
                                  .scale_factor(std::vector<double>{2.0, 2.0})
                                  .mode(torch::kNearest));
        std::vector<torch::Tensor> parts{h, maps_at(r)};
        if (r <= cfg.bottleneck_max_res) parts.push_back(feat_levels[level_of(r)]);
        h = stages[s]->forward(torch::cat(parts, 1));
    }
    // linear output; a sigmoid here saturates under the L1 loss before the
    // parts have localized. Callers clamp to [0, 1] for display.
    return to_rgb(h);
}

// --- Discriminator ---------------------------------------------------------

int64_t discriminator_output_size(int64_t patch_size) {
    int64_t s = patch_size;
    for (int i = 0; i < 4; ++i) s = (s + 1) / 2;
    return s;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const ModelConfig& cfg) {
    const int64_t w = cfg.discriminator_width;
    const int64_t widths[4] = {w, 2 * w, 4 * w, 4 * w};
    convs = nn::Sequential();
    int64_t in = 3 + cfg.num_parts;
    for (int64_t out : widths) {
        convs->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1)));
        convs->push_back(lrelu());
        in = out;
    }
    register_module("convs", convs);
    final_res = discriminator_output_size(cfg.patch_size);
    dense = register_module("dense", nn::Linear(in * final_res * final_res, 1));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& patches) {
    auto h = convs->forward(patches);
    return dense(h.flatten(1)).squeeze(-1);
}

// --- ModelState ------------------------------------------------------------

ModelState::ModelState(const ModelConfig& cfg, uint64_t seed) : config(cfg) {
    cfg.validate();
    torch::manual_seed(seed);
    shape_encoder = ShapeEncoder(cfg);
    appearance_encoder = AppearanceEncoder(cfg);
    decoder = Decoder(cfg);
    discriminator = PatchDiscriminator(cfg);
}

std::vector<torch::Tensor> ModelState::generator_parameters() const {
    std::vector<torch::Tensor> params;
    const std::vector<std::shared_ptr<nn::Module>> modules{
        shape_encoder.ptr(), appearance_encoder.ptr(), decoder.ptr()};
    for (const auto& m : modules) {
        for (auto& p : m->parameters()) params.push_back(p);
    }
    return params;
}

std::vector<torch::Tensor> ModelState::discriminator_parameters() const {
    return discriminator->parameters();
}

void ModelState::train(bool on) {
    shape_encoder->train(on);
    appearance_encoder->train(on);
    decoder->train(on);
    discriminator->train(on);
}

void ModelState::to(torch::Dtype dtype) {
    shape_encoder->to(dtype);
    appearance_encoder->to(dtype);
    decoder->to(dtype);
    discriminator->to(dtype);
}

// --- Operations ------------------------------------------------------------

ShapeEncoding shape_encode(ModelState& state, const torch::Tensor& img) {
    return state.shape_encoder->forward(img);
}

LocalizedFeatures appearance_encode(ModelState& state, const torch::Tensor& stem,
                                    const ActivationMaps& normalized) {
    return state.appearance_encoder->forward(stem, normalized);
}

torch::Tensor decode(ModelState& state, const ActivationMaps& approx, const LocalizedFeatures& fx) {
    return state.decoder->forward(approx, fx);
}

torch::Tensor extract_patches(const torch::Tensor& img, const torch::Tensor& means, int64_t size) {
    if (size < 1 || size % 2 == 0) {
        throw std::invalid_argument("extract_patches: patch size must be odd");
    }
    const int64_t B = img.size(0), C = img.size(1), H = img.size(2), W = img.size(3);
    const int64_t K = means.size(1);
    const int64_t half = size / 2;
    auto m = means.detach().to(torch::kFloat64);
    auto center_r = torch::round((m.select(-1, 0) + 1.0) * 0.5 * static_cast<double>(H - 1)).to(torch::kLong);
    auto center_c = torch::round((m.select(-1, 1) + 1.0) * 0.5 * static_cast<double>(W - 1)).to(torch::kLong);
    auto offs = torch::arange(-half, half + 1, torch::kLong);
    // B x K x S x S index grids, clamped for border replication
    auto rows = (center_r.unsqueeze(-1).unsqueeze(-1) + offs.view({1, 1, size, 1})).clamp(0, H - 1);
    auto cols = (center_c.unsqueeze(-1).unsqueeze(-1) + offs.view({1, 1, 1, size})).clamp(0, W - 1);
    auto linear = (rows * W + cols).reshape({B, 1, K * size * size}).expand({B, C, K * size * size});
    auto gathered = img.flatten(2).gather(2, linear.to(img.device()));
    return gathered.reshape({B, C, K, size, size}).permute({0, 2, 1, 3, 4}).contiguous();
}

torch::Tensor discriminate(ModelState& state, const torch::Tensor& patches, const torch::Tensor& cond) {
    const int64_t B = patches.size(0), K = patches.size(1);
    auto x = torch::cat({patches, cond}, 2);
    auto flat = x.reshape({B * K, x.size(2), x.size(3), x.size(4)});
    return state.discriminator->forward(flat).reshape({B, K});
}

}  // namespace partdisent

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "partdisent/data.hpp"
#include "partdisent/networks.hpp"
#include "partdisent/objectives.hpp"

namespace partdisent {

enum class NormalizationMode { InterOcular, EdgeLength, Diagonal, PixelRadius };

std::string to_string(NormalizationMode m);
NormalizationMode normalization_mode_from_string(const std::string& s);

struct EvalConfig {
    NormalizationMode mode = NormalizationMode::EdgeLength;
    std::vector<double> pck_thresholds_px{6.0};
    std::vector<double> pck_alphas;  // fractions of the image diagonal
    int64_t left_eye = -1;           // landmark indices for inter-ocular normalization
    int64_t right_eye = -1;
    double ridge = 1e-6;
    int64_t batch_size = 32;
};

struct DataConfig {
    std::string kind = "sprites";  // sprites | folder | video
    std::string root;              // training images (folder/video)
    std::string eval_root;         // annotated train/test folders; defaults to root
    std::string manifest;
    SpriteConfig sprites;
    int64_t test_count = 500;      // sprites only
};

struct RunConfig {
    std::string name = "run";
    uint64_t seed = 0;
    int64_t steps = 1000;
    int64_t batch_size = 16;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double clip_grad_norm = 0.0;  // 0 disables clipping
    bool adversarial = false;
    int64_t checkpoint_every = 1000;
    int64_t log_every = 1;
    int64_t equivariance_warmup = 0;  // steps trained on reconstruction alone
    int64_t equivariance_ramp = 0;    // steps over which the equivariance weight reaches 1
    ModelConfig model;
    LossWeights weights;
    PairConfig pairs;
    DataConfig data;
    EvalConfig eval;

    /// Throws ConfigError on inconsistent values.
    void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);

/// Applies `patch` on top of `base`. Every key in the patch must already
/// exist in the base configuration; otherwise ConfigError names the key.
/// A top-level "preset" entry selects the base preset first.
RunConfig apply_json(const RunConfig& base, const nlohmann::json& patch);

RunConfig config_from_json(const nlohmann::json& j);

/// Names of built-in presets (one per row of the experiment settings
/// table plus "sprites").
std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names.
RunConfig preset(const std::string& name);

/// Loads a config file, or a built-in preset when `spec` is a preset name or
/// "presets/<name>" that does not exist on disk.
RunConfig load_config(const std::string& spec);

void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace partdisent

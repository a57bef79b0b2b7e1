#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "partdisent/config.hpp"
#include "partdisent/data.hpp"
#include "partdisent/networks.hpp"

namespace partdisent {

inline constexpr int64_t kCheckpointSchemaVersion = 1;

struct LossReport {
    int64_t step = 0;
    double reconstruction = 0.0;
    double equivariance = 0.0;  // at full weight, before the warm-up schedule
    double adversarial_g = 0.0;
    double adversarial_d = 0.0;
    double total = 0.0;

    nlohmann::json to_json() const;
};

/// Model, optimizer moments and step counter. The data stream is a pure
/// function of (seed, step), so no separate generator state is kept.
struct TrainState {
    explicit TrainState(const RunConfig& cfg);

    RunConfig config;
    ModelState model;
    std::unique_ptr<torch::optim::Adam> optimizer;
    std::unique_ptr<torch::optim::Adam> disc_optimizer;

    int64_t step() const { return model.step; }
};

/// Training pairs for one optimization step, stacked along the batch axis.
struct PairBatch {
    torch::Tensor shape_input;
    torch::Tensor appearance_input;
    torch::Tensor target;
    std::vector<TpsTransform> transforms;  // identity where the sample has none
    torch::Tensor has_transform;           // B, float 0/1

    static PairBatch stack(const std::vector<TrainingPair>& pairs);
};

/// Deterministic batch for the given step.
PairBatch make_batch(const RunConfig& cfg, const Dataset& data, int64_t step);

/// Weight of the equivariance term at a (1-based) step: zero through
/// cfg.equivariance_warmup, then a linear ramp over cfg.equivariance_ramp steps.
double equivariance_schedule(const RunConfig& cfg, int64_t step);

/// Runs the full two-stream forward pass, the losses and one update.
/// Throws NumericError naming the offending component on non-finite losses.
LossReport train_step(TrainState& state, const PairBatch& batch);

/// Forward pass only; returns the losses train_step would report.
LossReport evaluate_losses(TrainState& state, const PairBatch& batch);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);
/// Config echo stored in a checkpoint, without loading the weights.
RunConfig read_checkpoint_config(const std::filesystem::path& path);

struct RunData {
    Dataset train;
    /// Annotated splits for landmark evaluation; may be empty.
    Dataset eval_train;
    Dataset eval_test;
};

/// Materializes the datasets a config refers to.
RunData load_run_data(const RunConfig& cfg, const std::function<void(const std::string&)>& warn = {});

struct FitOptions {
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> resume_from;
    std::function<void(const LossReport&)> on_step;
    std::function<void(TrainState&)> on_finish;
    size_t prefetch = 2;
};

struct FitResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path log_path;
    std::vector<LossReport> reports;
};

/// Trains for cfg.steps steps on `train`, writing out_dir/config.json,
/// out_dir/log.jsonl and out_dir/ckpt_<step> archives.
FitResult fit(const RunConfig& cfg, const Dataset& train, const FitOptions& opts);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int64_t step);

struct InferenceResult {
    ActivationMaps maps;          // sigma(x)
    PartMoments moments;          // of sigma(x)
    PartAppearances appearances;  // alpha(x)
    torch::Tensor reconstruction; // D(approx(x), f_x), clamped to [0, 1]
};

/// Deterministic forward products for B x 3 x H x W images.
InferenceResult infer(ModelState& model, const torch::Tensor& images);

/// Decodes the shape of shape_src with the appearance of app_src for the
/// listed parts (0-based) and of shape_src elsewhere. Throws
/// std::out_of_range for invalid part indices.
torch::Tensor swap(ModelState& model, const torch::Tensor& shape_src, const torch::Tensor& app_src,
                   const std::vector<int64_t>& parts);

}  // namespace partdisent

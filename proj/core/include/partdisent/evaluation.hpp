#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "partdisent/config.hpp"
#include "partdisent/data.hpp"
#include "partdisent/networks.hpp"

namespace partdisent {

/// Linear map from stacked part means to stacked landmarks, without bias.
struct RegressionModel {
    torch::Tensor weight;  // 2K x 2L, float64
    int64_t rank = 0;      // numerical rank of the design matrix
    bool rank_deficient = false;

    /// N x 2K -> N x 2L.
    torch::Tensor predict(const torch::Tensor& features) const;
};

/// Least squares pred * W ~ gt through the ridge-regularized normal equations.
/// Throws std::invalid_argument if N < 2K or the row counts differ.
RegressionModel fit_regressor(const torch::Tensor& pred, const torch::Tensor& gt, double ridge = 1e-6);

/// Mean over images and landmarks of |predicted - gt|_2 / ref * 100.
/// predicted, gt: N x L x 2; ref: scalar or N. Throws std::invalid_argument
/// for non-positive references.
double normalized_error(const torch::Tensor& predicted, const torch::Tensor& gt, const torch::Tensor& ref);

/// Percentage of landmarks with |predicted - gt|_2 <= threshold.
double pck(const torch::Tensor& predicted, const torch::Tensor& gt, double threshold);

/// Per-image reference length in pixels for the chosen normalization.
torch::Tensor reference_lengths(const torch::Tensor& gt_px, const EvalConfig& cfg, int64_t height,
                                int64_t width);

struct PckEntry {
    std::string label;
    double threshold_px = 0.0;
    double percent = 0.0;
};

struct MetricReport {
    NormalizationMode mode = NormalizationMode::EdgeLength;
    double mean_error = 0.0;     // % of the reference length, or px for pixel_radius
    double mean_error_px = 0.0;
    std::vector<PckEntry> pck;
    std::vector<double> per_landmark_error;
    std::vector<double> per_landmark_px;
    int64_t num_images = 0;
    int64_t num_parts = 0;
    int64_t num_landmarks = 0;
    bool rank_deficient = false;
    std::optional<double> baseline_error;  // same metric for the fixed-grid baseline

    nlohmann::json to_json() const;
    /// One row per landmark: index, error, error_px.
    void write_csv(const std::filesystem::path& path) const;
};

MetricReport metric_report_from_json(const nlohmann::json& j);

/// Part means of every image as N x 2K normalized (row, col).
torch::Tensor extract_landmarks(ModelState& model, const Dataset& data, int64_t batch_size = 32);

/// Annotated landmarks as N x L x 2 pixel (x, y). Throws DataError if any
/// sample is unannotated or the landmark counts differ.
torch::Tensor landmark_matrix(const Dataset& data);

/// Constant inputs: K points on a regular lattice, repeated for N images.
torch::Tensor fixed_grid_features(int64_t n, int64_t k);

/// Fits on (train_features, train_gt) and scores test_features against
/// test_gt. Landmarks in pixels of an H x W image; features normalized.
MetricReport score_landmarks(const torch::Tensor& train_features, const torch::Tensor& train_gt_px,
                             const torch::Tensor& test_features, const torch::Tensor& test_gt_px,
                             const EvalConfig& cfg, int64_t height, int64_t width);

/// Full protocol on a frozen model, including the fixed-grid baseline.
MetricReport evaluate_run(ModelState& model, const Dataset& test_set, const Dataset& train_set,
                          const EvalConfig& cfg);

}  // namespace partdisent

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "partdisent/geometry.hpp"
#include "partdisent/rng.hpp"

namespace partdisent {

struct Sample {
    torch::Tensor image;                     // 3 x H x W, float in [0, 1]
    std::optional<torch::Tensor> landmarks;  // L x 2, pixel (x, y), float64
    std::optional<std::string> sequence_id;
    std::optional<int64_t> frame_index;
    std::optional<torch::Tensor> part_labels;  // H x W int64, synthetic data only
    std::string name;
};

struct Dataset {
    std::vector<Sample> samples;
    /// sequence id -> sample indices ordered by frame index
    std::map<std::string, std::vector<size_t>> sequences;

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    bool has_landmarks() const;
    void index_sequences();
    /// Stacks the images of the given indices into B x 3 x H x W.
    torch::Tensor images(const std::vector<size_t>& indices) const;
};

struct TrainingPair {
    torch::Tensor shape_input;       // a(x)
    torch::Tensor appearance_input;  // x o s
    torch::Tensor target;            // x
    std::optional<TpsTransform> transform_record;
};

struct PairConfig {
    TpsSamplingConfig tps;
    AppearanceJitterConfig appearance;
    double p_frame = 0.5;  // video datasets: probability of pairing with another frame
};

TrainingPair make_pair_image(const Sample& x, const PairConfig& cfg, SeededRng& rng);

/// Uses another frame of the same sequence as x o s with probability
/// cfg.p_frame (no transform is recorded then); otherwise, and for
/// single-frame sequences, falls back to make_pair_image.
TrainingPair make_pair_video(const Sample& x, const Dataset& dataset, const PairConfig& cfg,
                             SeededRng& rng);

// ---------------------------------------------------------------------------
// synthetic articulated sprites

struct SpriteConfig {
    int64_t count = 2000;
    int64_t resolution = 64;
    int64_t num_segments = 3;  // 2..4; a head disk sits at the free end
    double min_length = 10.0;
    double max_length = 12.0;
    double thickness = 5.0;
    double head_radius = 4.5;
    double max_rotation_deg = 45.0;
    double max_joint_angle_deg = 40.0;
    double min_color = 0.35;
    double max_color = 1.0;
    double min_background = 0.0;
    double max_background = 0.25;
    double margin = 3.0;
    int64_t frames_per_sequence = 1;
    double frame_angle_step_deg = 8.0;

    int64_t num_parts() const { return num_segments + 1; }
    int64_t num_joints() const { return num_segments + 1; }
};

/// Renders an articulated chain of capsules with a head disk. Landmarks are
/// the chain joints (root first, head centre last) in pixel (x, y).
Dataset generate_sprites(const SpriteConfig& cfg, SeededRng& rng);

// ---------------------------------------------------------------------------
// folders on disk

struct FolderOptions {
    int64_t resolution = 128;
    std::filesystem::path manifest;  // optional "<split>,<relative path>" lines
    std::function<void(const std::string&)> warn;
};

/// Images of root/<split>/ (sorted by file name) with an optional
/// root/<split>/landmarks.csv.
Dataset load_image_folder(const std::filesystem::path& root, const std::string& split,
                          const FolderOptions& opts = {});

/// Frames laid out as root/<sequence_id>/<frame_index>.png.
Dataset load_video_folder(const std::filesystem::path& root, const FolderOptions& opts = {});

/// Manifest entries per split. Throws DataError if a file appears in two splits.
std::map<std::string, std::vector<std::string>> read_split_manifest(const std::filesystem::path& path);

/// One row per image: x1,y1,...,xL,yL.
std::vector<torch::Tensor> read_landmark_csv(const std::filesystem::path& path);
void write_landmark_csv(const std::filesystem::path& path, const std::vector<torch::Tensor>& rows);

/// Writes a dataset in the on-disk folder layout (<dir>/<index>.png plus
/// landmarks.csv when annotated).
void write_image_folder(const std::filesystem::path& dir, const Dataset& data);

/// Pixel (x, y) -> normalized (row, col) and back, for an H x W image.
torch::Tensor pixels_to_normalized(const torch::Tensor& xy, int64_t height, int64_t width);
torch::Tensor normalized_to_pixels(const torch::Tensor& rc, int64_t height, int64_t width);

}  // namespace partdisent

#include "partdisent/data.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "partdisent/errors.hpp"
#include "partdisent/image_io.hpp"

namespace partdisent {

namespace fs = std::filesystem;

bool Dataset::has_landmarks() const {
    return !samples.empty() &&
           std::all_of(samples.begin(), samples.end(), [](const Sample& s) { return s.landmarks.has_value(); });
}

void Dataset::index_sequences() {
    sequences.clear();
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].sequence_id) sequences[*samples[i].sequence_id].push_back(i);
    }
    for (auto& [id, idx] : sequences) {
        std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            return samples[a].frame_index.value_or(0) < samples[b].frame_index.value_or(0);
        });
    }
}

torch::Tensor Dataset::images(const std::vector<size_t>& indices) const {
    std::vector<torch::Tensor> imgs;
    imgs.reserve(indices.size());
    for (auto i : indices) imgs.push_back(samples.at(i).image);
    return torch::stack(imgs);
}

// --- pairs -------------------------------------------------------------------

TrainingPair make_pair_image(const Sample& x, const PairConfig& cfg, SeededRng& rng) {
    const auto& img = x.image;
    auto a = sample_appearance(cfg.appearance, rng);
    auto s = sample_tps(cfg.tps, rng);
    auto grid = make_identity_grid(img.size(1), img.size(2), img.scalar_type());
    TrainingPair pair;
    pair.shape_input = apply_appearance(img, a);
    pair.appearance_input = warp_image(img, apply_transform(s, grid));
    pair.target = img;
    pair.transform_record = s;
    return pair;
}

TrainingPair make_pair_video(const Sample& x, const Dataset& dataset, const PairConfig& cfg,
                             SeededRng& rng) {
    if (!x.sequence_id) {
        throw std::invalid_argument("make_pair_video: sample has no sequence id");
    }
    auto it = dataset.sequences.find(*x.sequence_id);
    const bool use_frame = rng.bernoulli(cfg.p_frame);
    if (!use_frame || it == dataset.sequences.end() || it->second.size() < 2) {
        return make_pair_image(x, cfg, rng);
    }
    // candidates: every other frame of the sequence
    std::vector<size_t> others;
    for (auto idx : it->second) {
        if (dataset.samples[idx].frame_index != x.frame_index) others.push_back(idx);
    }
    if (others.empty()) return make_pair_image(x, cfg, rng);
    const auto pick = others[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(others.size()) - 1))];

    TrainingPair pair;
    pair.shape_input = apply_appearance(x.image, sample_appearance(cfg.appearance, rng));
    pair.appearance_input = dataset.samples[pick].image;
    pair.target = x.image;
    return pair;
}

// --- coordinates ---------------------------------------------------------------

torch::Tensor pixels_to_normalized(const torch::Tensor& xy, int64_t height, int64_t width) {
    auto x = xy.select(-1, 0), y = xy.select(-1, 1);
    auto row = 2.0 * y / static_cast<double>(height - 1) - 1.0;
    auto col = 2.0 * x / static_cast<double>(width - 1) - 1.0;
    return torch::stack({row, col}, -1);
}

torch::Tensor normalized_to_pixels(const torch::Tensor& rc, int64_t height, int64_t width) {
    auto r = rc.select(-1, 0), c = rc.select(-1, 1);
    auto x = (c + 1.0) * 0.5 * static_cast<double>(width - 1);
    auto y = (r + 1.0) * 0.5 * static_cast<double>(height - 1);
    return torch::stack({x, y}, -1);
}

// --- CSV -----------------------------------------------------------------------

std::vector<torch::Tensor> read_landmark_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open landmark file: " + path.string());
    std::vector<torch::Tensor> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
            }
        }
        if (vals.empty() || vals.size() % 2 != 0) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected x,y pairs");
        }
        rows.push_back(torch::tensor(vals, torch::kFloat64).reshape({-1, 2}));
    }
    return rows;
}

void write_landmark_csv(const fs::path& path, const std::vector<torch::Tensor>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write landmark file: " + path.string());
    out << std::setprecision(17);
    for (const auto& r : rows) {
        auto flat = r.to(torch::kFloat64).contiguous().flatten();
        auto acc = flat.accessor<double, 1>();
        for (int64_t i = 0; i < acc.size(0); ++i) {
            if (i) out << ',';
            out << acc[i];
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

std::map<std::string, std::vector<std::string>> read_split_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split manifest: " + path.string());
    std::map<std::string, std::vector<std::string>> splits;
    std::map<std::string, std::string> owner;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw DataError("manifest line without split: " + line);
        auto split = line.substr(0, comma);
        auto file = line.substr(comma + 1);
        auto [it, inserted] = owner.emplace(file, split);
        if (!inserted && it->second != split) {
            throw DataError("manifest lists " + file + " in both '" + it->second + "' and '" + split + "'");
        }
        splits[split].push_back(file);
    }
    return splits;
}

// --- folders ---------------------------------------------------------------------

namespace {

bool is_image_file(const fs::path& p) {
    static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff"};
    auto e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return exts.count(e) > 0;
}

Sample load_sample(const fs::path& file, int64_t resolution, const std::optional<torch::Tensor>& lms) {
    Sample s;
    s.name = file.filename().string();
    CropResize cr;
    s.image = center_crop_resize(load_image(file), resolution, &cr);
    if (lms) {
        auto l = lms->clone();
        auto acc = l.accessor<double, 2>();
        for (int64_t i = 0; i < acc.size(0); ++i) {
            acc[i][0] = cr.map_x(acc[i][0]);
            acc[i][1] = cr.map_y(acc[i][1]);
        }
        s.landmarks = l;
    }
    return s;
}

}  // namespace

Dataset load_image_folder(const fs::path& root, const std::string& split, const FolderOptions& opts) {
    const fs::path dir = root / split;
    std::vector<fs::path> files;
    if (!opts.manifest.empty()) {
        auto manifest = read_split_manifest(opts.manifest);
        for (const auto& f : manifest[split]) files.push_back(root / f);
    } else if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        throw DataError("dataset directory does not exist: " + dir.string());
    }

    Dataset data;
    if (files.empty()) {
        if (opts.warn) opts.warn("no images found for split '" + split + "' under " + root.string());
        return data;
    }

    std::vector<torch::Tensor> landmarks;
    const fs::path lm_file = dir / "landmarks.csv";
    if (fs::exists(lm_file)) {
        landmarks = read_landmark_csv(lm_file);
        if (landmarks.size() != files.size()) {
            throw DataError("landmark/image count mismatch in " + dir.string() + ": " +
                            std::to_string(landmarks.size()) + " rows for " + std::to_string(files.size()) +
                            " images");
        }
    }

    std::vector<std::string> unreadable;
    for (size_t i = 0; i < files.size(); ++i) {
        try {
            std::optional<torch::Tensor> lm;
            if (!landmarks.empty()) lm = landmarks[i];
            data.samples.push_back(load_sample(files[i], opts.resolution, lm));
        } catch (const DataError&) {
            unreadable.push_back(files[i].string());
        }
    }
    if (!unreadable.empty()) {
        std::string msg = "unreadable image files:";
        for (const auto& f : unreadable) msg += "\n  " + f;
        throw DataError(msg);
    }
    return data;
}

Dataset load_video_folder(const fs::path& root, const FolderOptions& opts) {
    if (!fs::is_directory(root)) throw DataError("video directory does not exist: " + root.string());
    std::vector<fs::path> seqs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) seqs.push_back(e.path());
    }
    std::sort(seqs.begin(), seqs.end());
    Dataset data;
    for (const auto& seq : seqs) {
        std::vector<std::pair<int64_t, fs::path>> frames;
        for (const auto& e : fs::directory_iterator(seq)) {
            if (!e.is_regular_file() || !is_image_file(e.path())) continue;
            try {
                frames.emplace_back(std::stoll(e.path().stem().string()), e.path());
            } catch (const std::exception&) {
                throw DataError("frame file name is not an index: " + e.path().string());
            }
        }
        std::sort(frames.begin(), frames.end());
        for (const auto& [idx, path] : frames) {
            Sample s = load_sample(path, opts.resolution, std::nullopt);
            s.sequence_id = seq.filename().string();
            s.frame_index = idx;
            data.samples.push_back(std::move(s));
        }
    }
    if (data.empty() && opts.warn) opts.warn("no frames found under " + root.string());
    data.index_sequences();
    return data;
}

void write_image_folder(const fs::path& dir, const Dataset& data) {
    fs::create_directories(dir);
    std::vector<torch::Tensor> lms;
    for (size_t i = 0; i < data.samples.size(); ++i) {
        std::ostringstream name;
        name << std::setw(6) << std::setfill('0') << i << ".png";
        save_image(dir / name.str(), data.samples[i].image);
        if (data.samples[i].landmarks) lms.push_back(*data.samples[i].landmarks);
    }
    if (!lms.empty()) write_landmark_csv(dir / "landmarks.csv", lms);
}

}  // namespace partdisent

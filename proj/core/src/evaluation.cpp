#include "partdisent/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "partdisent/errors.hpp"

namespace partdisent {

using nlohmann::json;
using MatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

MatrixXd to_eigen(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    return Eigen::Map<const MatrixXd>(c.data_ptr<double>(), c.size(0), c.size(1));
}

torch::Tensor to_tensor(const MatrixXd& m) {
    auto t = torch::empty({m.rows(), m.cols()}, torch::kFloat64);
    Eigen::Map<MatrixXd>(t.data_ptr<double>(), m.rows(), m.cols()) = m;
    return t;
}

torch::Tensor distances(const torch::Tensor& predicted, const torch::Tensor& gt) {
    if (predicted.sizes() != gt.sizes() || predicted.dim() != 3 || predicted.size(2) != 2) {
        throw std::invalid_argument("predicted and gt must both be N x L x 2");
    }
    return torch::linalg_vector_norm(predicted.to(torch::kFloat64) - gt.to(torch::kFloat64), 2, {-1});
}

}  // namespace

torch::Tensor RegressionModel::predict(const torch::Tensor& features) const {
    return torch::matmul(features.to(torch::kFloat64), weight);
}

RegressionModel fit_regressor(const torch::Tensor& pred, const torch::Tensor& gt, double ridge) {
    if (pred.dim() != 2 || gt.dim() != 2 || pred.size(0) != gt.size(0)) {
        throw std::invalid_argument("fit_regressor expects N x 2K and N x 2L with matching N");
    }
    if (pred.size(0) < pred.size(1)) {
        throw std::invalid_argument("fit_regressor needs at least " + std::to_string(pred.size(1)) +
                                    " samples, got " + std::to_string(pred.size(0)));
    }
    const MatrixXd X = to_eigen(pred), Y = to_eigen(gt);
    MatrixXd A = X.transpose() * X;
    A.diagonal().array() += ridge;
    const MatrixXd W = A.ldlt().solve(X.transpose() * Y);

    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    RegressionModel m;
    m.weight = to_tensor(W);
    m.rank = qr.rank();
    m.rank_deficient = m.rank < X.cols();
    return m;
}

double normalized_error(const torch::Tensor& predicted, const torch::Tensor& gt, const torch::Tensor& ref) {
    auto d = distances(predicted, gt);
    auto r = ref.to(torch::kFloat64);
    if ((r <= 0).any().item<bool>()) throw std::invalid_argument("reference length must be positive");
    if (r.dim() == 1) r = r.unsqueeze(1);
    return (d / r).mean().item<double>() * 100.0;
}

double pck(const torch::Tensor& predicted, const torch::Tensor& gt, double threshold) {
    if (!(threshold > 0.0)) throw std::invalid_argument("PCK threshold must be positive");
    auto d = distances(predicted, gt);
    return (d <= threshold).to(torch::kFloat64).mean().item<double>() * 100.0;
}

torch::Tensor reference_lengths(const torch::Tensor& gt_px, const EvalConfig& cfg, int64_t height,
                                int64_t width) {
    const int64_t n = gt_px.size(0);
    const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    switch (cfg.mode) {
        case NormalizationMode::InterOcular: {
            const int64_t L = gt_px.size(1);
            if (cfg.left_eye < 0 || cfg.right_eye < 0 || cfg.left_eye >= L || cfg.right_eye >= L) {
                throw ConfigError("inter_ocular normalization needs eval.left_eye and eval.right_eye in [0, " +
                                  std::to_string(L) + ")");
            }
            auto g = gt_px.to(torch::kFloat64);
            return torch::linalg_vector_norm(g.select(1, cfg.left_eye) - g.select(1, cfg.right_eye), 2, {-1});
        }
        case NormalizationMode::EdgeLength:
            return torch::full({n}, static_cast<double>(std::max(height, width)), opts);
        case NormalizationMode::Diagonal:
            return torch::full({n}, std::hypot(double(height), double(width)), opts);
        case NormalizationMode::PixelRadius:
            return torch::full({n}, 1.0, opts);
    }
    throw std::logic_error("unhandled normalization mode");
}

// --- report ----------------------------------------------------------------------

json MetricReport::to_json() const {
    json pck_json = json::array();
    for (const auto& p : pck) {
        pck_json.push_back({{"label", p.label}, {"threshold_px", p.threshold_px}, {"percent", p.percent}});
    }
    json j = {{"mode", to_string(mode)},
              {"mean_error", mean_error},
              {"mean_error_px", mean_error_px},
              {"pck", pck_json},
              {"per_landmark_error", per_landmark_error},
              {"per_landmark_px", per_landmark_px},
              {"num_images", num_images},
              {"num_parts", num_parts},
              {"num_landmarks", num_landmarks},
              {"rank_deficient", rank_deficient}};
    j["baseline_error"] = baseline_error ? json(*baseline_error) : json(nullptr);
    return j;
}

MetricReport metric_report_from_json(const json& j) {
    MetricReport r;
    r.mode = normalization_mode_from_string(j.at("mode").get<std::string>());
    r.mean_error = j.at("mean_error").get<double>();
    r.mean_error_px = j.at("mean_error_px").get<double>();
    for (const auto& p : j.at("pck")) {
        r.pck.push_back({p.at("label").get<std::string>(), p.at("threshold_px").get<double>(),
                         p.at("percent").get<double>()});
    }
    r.per_landmark_error = j.at("per_landmark_error").get<std::vector<double>>();
    r.per_landmark_px = j.at("per_landmark_px").get<std::vector<double>>();
    r.num_images = j.at("num_images").get<int64_t>();
    r.num_parts = j.at("num_parts").get<int64_t>();
    r.num_landmarks = j.at("num_landmarks").get<int64_t>();
    r.rank_deficient = j.at("rank_deficient").get<bool>();
    if (j.contains("baseline_error") && !j["baseline_error"].is_null()) {
        r.baseline_error = j["baseline_error"].get<double>();
    }
    return r;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(10);
    out << "landmark,error,error_px\n";
    for (size_t i = 0; i < per_landmark_error.size(); ++i) {
        out << i << ',' << per_landmark_error[i] << ',' << per_landmark_px[i] << '\n';
    }
}

// --- protocol ----------------------------------------------------------------------

torch::Tensor extract_landmarks(ModelState& model, const Dataset& data, int64_t batch_size) {
    torch::NoGradGuard guard;
    model.train(false);
    const auto& mc = model.config;
    auto grid = make_identity_grid(mc.map_size, mc.map_size);
    std::vector<torch::Tensor> out;
    const size_t step = static_cast<size_t>(std::max<int64_t>(1, batch_size));
    for (size_t lo = 0; lo < data.size(); lo += step) {
        std::vector<size_t> idx;
        for (size_t i = lo; i < std::min(data.size(), lo + step); ++i) idx.push_back(i);
        auto maps = shape_encode(model, data.images(idx)).maps;
        out.push_back(compute_moments(maps, grid).mean.flatten(1).to(torch::kFloat64));
    }
    if (out.empty()) return torch::empty({0, 2 * mc.num_parts}, torch::kFloat64);
    return torch::cat(out);
}

torch::Tensor landmark_matrix(const Dataset& data) {
    std::vector<torch::Tensor> rows;
    for (const auto& s : data.samples) {
        if (!s.landmarks) throw DataError("sample " + s.name + " has no landmark annotation");
        if (!rows.empty() && s.landmarks->sizes() != rows.front().sizes()) {
            throw DataError("sample " + s.name + " has a different number of landmarks");
        }
        rows.push_back(s.landmarks->to(torch::kFloat64));
    }
    if (rows.empty()) throw DataError("no annotated samples");
    return torch::stack(rows);
}

torch::Tensor fixed_grid_features(int64_t n, int64_t k) {
    const auto side = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(k))));
    auto pts = torch::empty({k, 2}, torch::kFloat64);
    for (int64_t i = 0; i < k; ++i) {
        const double r = side == 1 ? 0.0 : -0.5 + static_cast<double>(i / side) / static_cast<double>(side - 1);
        const double c = side == 1 ? 0.0 : -0.5 + static_cast<double>(i % side) / static_cast<double>(side - 1);
        pts[i][0] = r;
        pts[i][1] = c;
    }
    return pts.flatten().unsqueeze(0).expand({n, 2 * k}).contiguous();
}

MetricReport score_landmarks(const torch::Tensor& train_features, const torch::Tensor& train_gt_px,
                             const torch::Tensor& test_features, const torch::Tensor& test_gt_px,
                             const EvalConfig& cfg, int64_t height, int64_t width) {
    const int64_t L = train_gt_px.size(1);
    auto train_target = pixels_to_normalized(train_gt_px.to(torch::kFloat64), height, width).flatten(1);
    auto model = fit_regressor(train_features, train_target, cfg.ridge);
    auto pred_px = normalized_to_pixels(model.predict(test_features).reshape({-1, L, 2}), height, width);
    auto gt = test_gt_px.to(torch::kFloat64);

    MetricReport r;
    r.mode = cfg.mode;
    r.num_images = gt.size(0);
    r.num_parts = train_features.size(1) / 2;
    r.num_landmarks = L;
    r.rank_deficient = model.rank_deficient;

    auto ref = reference_lengths(gt, cfg, height, width);
    auto d = distances(pred_px, gt);
    auto rel = d / ref.unsqueeze(1) * (cfg.mode == NormalizationMode::PixelRadius ? 1.0 : 100.0);
    r.mean_error = rel.mean().item<double>();
    r.mean_error_px = d.mean().item<double>();
    auto per_rel = rel.mean(0), per_px = d.mean(0);
    for (int64_t l = 0; l < L; ++l) {
        r.per_landmark_error.push_back(per_rel[l].item<double>());
        r.per_landmark_px.push_back(per_px[l].item<double>());
    }
    for (double t : cfg.pck_thresholds_px) {
        std::ostringstream label;
        label << t << "px";
        r.pck.push_back({label.str(), t, pck(pred_px, gt, t)});
    }
    const double diag = std::hypot(double(height), double(width));
    for (double a : cfg.pck_alphas) {
        std::ostringstream label;
        label << "alpha" << a;
        r.pck.push_back({label.str(), a * diag, pck(pred_px, gt, a * diag)});
    }
    return r;
}

MetricReport evaluate_run(ModelState& model, const Dataset& test_set, const Dataset& train_set,
                          const EvalConfig& cfg) {
    if (test_set.empty() || train_set.empty()) throw DataError("evaluation needs annotated train and test splits");
    auto train_gt = landmark_matrix(train_set);
    auto test_gt = landmark_matrix(test_set);
    const int64_t H = train_set.samples.front().image.size(1);
    const int64_t W = train_set.samples.front().image.size(2);
    const int64_t K = model.config.num_parts;
    if (train_gt.size(0) < 2 * K) {
        throw DataError("regression needs at least " + std::to_string(2 * K) + " annotated training images");
    }

    auto report = score_landmarks(extract_landmarks(model, train_set, cfg.batch_size), train_gt,
                                  extract_landmarks(model, test_set, cfg.batch_size), test_gt, cfg, H, W);
    auto baseline = score_landmarks(fixed_grid_features(train_gt.size(0), K), train_gt,
                                    fixed_grid_features(test_gt.size(0), K), test_gt, cfg, H, W);
    report.baseline_error = baseline.mean_error;
    return report;
}

}  // namespace partdisent

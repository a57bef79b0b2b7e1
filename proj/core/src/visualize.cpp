#include "partdisent/visualize.hpp"

#include <fstream>
#include <sstream>

#include "partdisent/errors.hpp"

namespace partdisent {

namespace F = torch::nn::functional;

const std::array<std::array<float, 3>, 16>& part_palette() {
    static const std::array<std::array<float, 3>, 16> palette = {{
        {0.902F, 0.098F, 0.294F}, {0.235F, 0.706F, 0.294F}, {1.000F, 0.882F, 0.098F}, {0.263F, 0.388F, 0.847F},
        {0.961F, 0.510F, 0.192F}, {0.569F, 0.118F, 0.706F}, {0.259F, 0.831F, 0.957F}, {0.941F, 0.196F, 0.902F},
        {0.749F, 0.937F, 0.271F}, {0.980F, 0.745F, 0.831F}, {0.275F, 0.600F, 0.565F}, {0.863F, 0.745F, 1.000F},
        {0.604F, 0.388F, 0.141F}, {1.000F, 0.980F, 0.784F}, {0.502F, 0.000F, 0.000F}, {0.000F, 0.000F, 0.459F},
    }};
    return palette;
}

namespace {

torch::Tensor palette_tensor(int64_t k) {
    const auto& p = part_palette();
    auto t = torch::empty({k, 3});
    for (int64_t i = 0; i < k; ++i) {
        for (int c = 0; c < 3; ++c) t[i][c] = p[static_cast<size_t>(i % 16)][static_cast<size_t>(c)];
    }
    return t;
}

}  // namespace

torch::Tensor part_labels(const torch::Tensor& maps, int64_t height, int64_t width) {
    if (maps.dim() != 3) throw std::invalid_argument("part_labels expects K x h x w maps");
    auto labels = maps.argmax(0).to(torch::kFloat32).unsqueeze(0).unsqueeze(0);
    labels = F::interpolate(labels, F::InterpolateFuncOptions()
                                        .size(std::vector<int64_t>{height, width})
                                        .mode(torch::kNearest));
    return labels.squeeze(0).squeeze(0).to(torch::kLong);
}

torch::Tensor label_image(const torch::Tensor& labels) {
    const int64_t k = labels.numel() == 0 ? 1 : labels.max().item<int64_t>() + 1;
    return palette_tensor(k).index_select(0, labels.flatten()).reshape({labels.size(0), labels.size(1), 3})
        .permute({2, 0, 1})
        .contiguous();
}

torch::Tensor overlay_maps(const torch::Tensor& image, const torch::Tensor& maps, double alpha) {
    const int64_t H = image.size(1), W = image.size(2);
    auto m = maps.detach().to(torch::kFloat32);
    auto peak = m.flatten(1).amax(1).clamp_min(1e-12).view({-1, 1, 1});
    auto strength = (m / peak).amax(0).unsqueeze(0).unsqueeze(0);
    strength = F::interpolate(strength, F::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{H, W})
                                            .mode(torch::kBilinear)
                                            .align_corners(true))
                   .squeeze(0);
    auto colors = label_image(part_labels(m, H, W));
    auto a = strength * alpha;
    return ((1.0 - a) * image.to(torch::kFloat32) + a * colors).clamp(0.0, 1.0);
}

std::vector<MomentRow> moment_rows(const PartMoments& mom, const std::vector<std::string>& names) {
    auto mean = mom.mean.detach().to(torch::kFloat64).contiguous();
    auto cov = mom.cov.detach().to(torch::kFloat64).contiguous();
    const int64_t B = mean.size(0), K = mean.size(1);
    if (static_cast<int64_t>(names.size()) != B) throw std::invalid_argument("one name per image required");
    auto mu = mean.accessor<double, 3>();
    auto cv = cov.accessor<double, 4>();
    std::vector<MomentRow> rows;
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t k = 0; k < K; ++k) {
            rows.push_back({names[static_cast<size_t>(b)], k, mu[b][k][0], mu[b][k][1], cv[b][k][0][0],
                            cv[b][k][0][1], cv[b][k][1][1]});
        }
    }
    return rows;
}

void write_moments_csv(const std::filesystem::path& path, const std::vector<MomentRow>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    out << "image,part,mean_row,mean_col,cov_rr,cov_rc,cov_cc\n";
    for (const auto& r : rows) {
        out << r.image << ',' << r.part << ',' << r.mean_row << ',' << r.mean_col << ',' << r.cov_rr << ','
            << r.cov_rc << ',' << r.cov_cc << '\n';
    }
}

std::vector<MomentRow> read_moments_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);  // header
    std::vector<MomentRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> f;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 7) throw DataError("malformed moments row: " + line);
        rows.push_back({f[0], std::stoll(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                        std::stod(f[5]), std::stod(f[6])});
    }
    return rows;
}

}  // namespace partdisent

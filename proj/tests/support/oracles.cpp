#include "oracles.hpp"

#include <cmath>
#include <limits>

namespace oracle {

namespace {

constexpr double kEps = 1e-8;
constexpr double kFloor = 1e-6;

torch::Tensor as_double(const torch::Tensor& t) { return t.detach().to(torch::kFloat64).contiguous(); }

double tps_u(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }

}  // namespace

torch::Tensor normalize(const torch::Tensor& maps) {
    auto m = as_double(maps);
    auto out = torch::empty_like(m);
    auto a = m.accessor<double, 4>();
    auto o = out.accessor<double, 4>();
    for (int64_t b = 0; b < a.size(0); ++b) {
        for (int64_t k = 0; k < a.size(1); ++k) {
            double total = 0.0;
            for (int64_t i = 0; i < a.size(2); ++i)
                for (int64_t j = 0; j < a.size(3); ++j) total += a[b][k][i][j];
            for (int64_t i = 0; i < a.size(2); ++i)
                for (int64_t j = 0; j < a.size(3); ++j) o[b][k][i][j] = a[b][k][i][j] / (total + kEps);
        }
    }
    return out;
}

Moments moments(const torch::Tensor& maps, const torch::Tensor& grid) {
    auto p = normalize(maps);
    auto g = as_double(grid);
    auto pa = p.accessor<double, 4>();
    auto ga = g.accessor<double, 3>();
    const int64_t B = pa.size(0), K = pa.size(1), H = pa.size(2), W = pa.size(3);
    auto mean = torch::zeros({B, K, 2}, torch::kFloat64);
    auto cov = torch::zeros({B, K, 2, 2}, torch::kFloat64);
    auto ma = mean.accessor<double, 3>();
    auto ca = cov.accessor<double, 4>();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t k = 0; k < K; ++k) {
            double mr = 0.0, mc = 0.0;
            for (int64_t i = 0; i < H; ++i) {
                for (int64_t j = 0; j < W; ++j) {
                    mr += pa[b][k][i][j] * ga[i][j][0];
                    mc += pa[b][k][i][j] * ga[i][j][1];
                }
            }
            double s00 = 0.0, s01 = 0.0, s11 = 0.0;
            for (int64_t i = 0; i < H; ++i) {
                for (int64_t j = 0; j < W; ++j) {
                    const double dr = ga[i][j][0] - mr, dc = ga[i][j][1] - mc;
                    s00 += pa[b][k][i][j] * dr * dr;
                    s01 += pa[b][k][i][j] * dr * dc;
                    s11 += pa[b][k][i][j] * dc * dc;
                }
            }
            ma[b][k][0] = mr;
            ma[b][k][1] = mc;
            ca[b][k][0][0] = s00 + kFloor;
            ca[b][k][0][1] = s01;
            ca[b][k][1][0] = s01;
            ca[b][k][1][1] = s11 + kFloor;
        }
    }
    return {mean, cov};
}

torch::Tensor pool(const torch::Tensor& features, const torch::Tensor& maps) {
    auto f = as_double(features);
    auto m = as_double(maps);
    auto fa = f.accessor<double, 4>();
    auto mapa = m.accessor<double, 4>();
    const int64_t B = fa.size(0), N = fa.size(1), H = fa.size(2), W = fa.size(3), K = mapa.size(1);
    auto out = torch::zeros({B, K, N}, torch::kFloat64);
    auto o = out.accessor<double, 3>();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t k = 0; k < K; ++k) {
            double mass = 0.0;
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) mass += mapa[b][k][i][j];
            for (int64_t n = 0; n < N; ++n) {
                double acc = 0.0;
                for (int64_t i = 0; i < H; ++i)
                    for (int64_t j = 0; j < W; ++j) acc += fa[b][n][i][j] * mapa[b][k][i][j];
                o[b][k][n] = acc / (mass + kEps);
            }
        }
    }
    return out;
}

torch::Tensor project(const torch::Tensor& alpha, const torch::Tensor& approx) {
    auto al = as_double(alpha);
    auto ap = as_double(approx);
    auto aa = al.accessor<double, 3>();
    auto pa = ap.accessor<double, 4>();
    const int64_t B = aa.size(0), K = aa.size(1), N = aa.size(2), H = pa.size(2), W = pa.size(3);
    auto out = torch::zeros({B, N, H, W}, torch::kFloat64);
    auto o = out.accessor<double, 4>();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t i = 0; i < H; ++i) {
            for (int64_t j = 0; j < W; ++j) {
                double den = 1.0;
                for (int64_t k = 0; k < K; ++k) den += pa[b][k][i][j];
                for (int64_t n = 0; n < N; ++n) {
                    double num = 0.0;
                    for (int64_t k = 0; k < K; ++k) num += aa[b][k][n] * pa[b][k][i][j];
                    o[b][n][i][j] = num / den;
                }
            }
        }
    }
    return out;
}

torch::Tensor render(const torch::Tensor& mean, const torch::Tensor& cov, const torch::Tensor& grid) {
    auto mu = as_double(mean);
    auto cv = as_double(cov);
    auto g = as_double(grid);
    auto ma = mu.accessor<double, 3>();
    auto ca = cv.accessor<double, 4>();
    auto ga = g.accessor<double, 3>();
    const int64_t B = ma.size(0), K = ma.size(1), H = ga.size(0), W = ga.size(1);
    auto out = torch::zeros({B, K, H, W}, torch::kFloat64);
    auto o = out.accessor<double, 4>();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t k = 0; k < K; ++k) {
            Eigen::Matrix2d S;
            S << ca[b][k][0][0], ca[b][k][0][1], ca[b][k][1][0], ca[b][k][1][1];
            const Eigen::Matrix2d Si = S.inverse();
            for (int64_t i = 0; i < H; ++i) {
                for (int64_t j = 0; j < W; ++j) {
                    Eigen::Vector2d d(ga[i][j][0] - ma[b][k][0], ga[i][j][1] - ma[b][k][1]);
                    o[b][k][i][j] = 1.0 / (1.0 + d.dot(Si * d));
                }
            }
        }
    }
    return out;
}

torch::Tensor reconstruction(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& mask) {
    auto xa_t = as_double(x), xh_t = as_double(x_hat), m_t = as_double(mask);
    auto xa = xa_t.accessor<double, 4>();
    auto xh = xh_t.accessor<double, 4>();
    auto ma = m_t.accessor<double, 4>();
    double total = 0.0;
    const int64_t B = xa.size(0), C = xa.size(1), H = xa.size(2), W = xa.size(3);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
                double l1 = 0.0;
                for (int64_t c = 0; c < C; ++c) l1 += std::abs(xa[b][c][i][j] - xh[b][c][i][j]);
                total += ma[b][0][i][j] * l1;
            }
    return torch::tensor(total / static_cast<double>(B * H * W), torch::kFloat64);
}

double equivariance(const Moments& a, const Moments& b, double lambda_mu, double lambda_sigma) {
    auto am = as_double(a.mean), bm = as_double(b.mean), ac = as_double(a.cov), bc = as_double(b.cov);
    auto ama = am.accessor<double, 3>(), bma = bm.accessor<double, 3>();
    auto aca = ac.accessor<double, 4>(), bca = bc.accessor<double, 4>();
    double total = 0.0;
    for (int64_t s = 0; s < ama.size(0); ++s) {
        for (int64_t k = 0; k < ama.size(1); ++k) {
            const double dr = ama[s][k][0] - bma[s][k][0], dc = ama[s][k][1] - bma[s][k][1];
            double l1 = 0.0;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) l1 += std::abs(aca[s][k][i][j] - bca[s][k][i][j]);
            total += lambda_mu * std::sqrt(dr * dr + dc * dc) + lambda_sigma * l1;
        }
    }
    return total / static_cast<double>(ama.size(0));
}

torch::Tensor soft_mask(const torch::Tensor& mean, double lambda, const torch::Tensor& grid) {
    auto mu = as_double(mean);
    auto g = as_double(grid);
    auto ma = mu.accessor<double, 3>();
    auto ga = g.accessor<double, 3>();
    const int64_t B = ma.size(0), K = ma.size(1), H = ga.size(0), W = ga.size(1);
    auto out = torch::zeros({B, 1, H, W}, torch::kFloat64);
    auto o = out.accessor<double, 4>();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
                double s = 0.0;
                for (int64_t k = 0; k < K; ++k) {
                    const double dr = ga[i][j][0] - ma[b][k][0], dc = ga[i][j][1] - ma[b][k][1];
                    s += 1.0 / (1.0 + std::sqrt(dr * dr + dc * dc) / lambda);
                }
                o[b][0][i][j] = std::min(s, 1.0);
            }
    return out;
}

torch::Tensor tps_points(const partdisent::TpsTransform& t, const torch::Tensor& points) {
    auto cp_t = as_double(t.control_points), off_t = as_double(t.offsets), aff_t = as_double(t.affine);
    auto pts_t = as_double(points);
    auto cp = cp_t.accessor<double, 2>();
    auto off = off_t.accessor<double, 2>();
    auto aff = aff_t.accessor<double, 2>();
    auto pts = pts_t.accessor<double, 2>();
    const int64_t P = cp.size(0);

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(P + 3, P + 3);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(P + 3, 2);
    for (int64_t i = 0; i < P; ++i) {
        for (int64_t j = 0; j < P; ++j) {
            const double dr = cp[i][0] - cp[j][0], dc = cp[i][1] - cp[j][1];
            L(i, j) = tps_u(dr * dr + dc * dc);
        }
        L(i, P) = L(P, i) = 1.0;
        L(i, P + 1) = L(P + 1, i) = cp[i][0];
        L(i, P + 2) = L(P + 2, i) = cp[i][1];
        rhs(i, 0) = off[i][0];
        rhs(i, 1) = off[i][1];
    }
    const Eigen::MatrixXd coeff = L.fullPivLu().solve(rhs);

    auto out = torch::zeros({pts.size(0), 2}, torch::kFloat64);
    auto o = out.accessor<double, 2>();
    for (int64_t n = 0; n < pts.size(0); ++n) {
        const double r = pts[n][0], c = pts[n][1];
        for (int d = 0; d < 2; ++d) {
            double v = aff[d][0] * r + aff[d][1] * c + aff[d][2];
            v += coeff(P, d) + coeff(P + 1, d) * r + coeff(P + 2, d) * c;
            for (int64_t p = 0; p < P; ++p) {
                const double dr = r - cp[p][0], dc = c - cp[p][1];
                v += coeff(p, d) * tps_u(dr * dr + dc * dc);
            }
            o[n][d] = v;
        }
    }
    return out;
}

torch::Tensor bilinear_warp(const torch::Tensor& img, const torch::Tensor& grid) {
    auto im = as_double(img);
    auto g = as_double(grid);
    auto ia = im.accessor<double, 3>();
    auto ga = g.accessor<double, 3>();
    const int64_t C = ia.size(0), H = ia.size(1), W = ia.size(2), Ho = ga.size(0), Wo = ga.size(1);
    auto out = torch::zeros({C, Ho, Wo}, torch::kFloat64);
    auto o = out.accessor<double, 3>();
    for (int64_t i = 0; i < Ho; ++i) {
        for (int64_t j = 0; j < Wo; ++j) {
            double y = (ga[i][j][0] + 1.0) * 0.5 * static_cast<double>(H - 1);
            double x = (ga[i][j][1] + 1.0) * 0.5 * static_cast<double>(W - 1);
            y = std::clamp(y, 0.0, static_cast<double>(H - 1));
            x = std::clamp(x, 0.0, static_cast<double>(W - 1));
            const auto y0 = static_cast<int64_t>(std::floor(y)), x0 = static_cast<int64_t>(std::floor(x));
            const int64_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
            const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
            for (int64_t c = 0; c < C; ++c) {
                o[c][i][j] = (1 - fy) * ((1 - fx) * ia[c][y0][x0] + fx * ia[c][y0][x1]) +
                             fy * ((1 - fx) * ia[c][y1][x0] + fx * ia[c][y1][x1]);
            }
        }
    }
    return out;
}

double gradient_error(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& f,
                      std::vector<torch::Tensor> inputs, double h) {
    for (auto& t : inputs) t = t.detach().to(torch::kFloat64).clone().requires_grad_(true);
    auto y = f(inputs);
    auto grads = torch::autograd::grad({y}, inputs, {}, false, false, /*allow_unused=*/true);

    double num_sq = 0.0, diff_sq = 0.0;
    torch::NoGradGuard guard;
    for (size_t i = 0; i < inputs.size(); ++i) {
        auto x = inputs[i];
        auto flat = x.view({-1});
        auto analytic = grads[i].defined() ? grads[i].reshape({-1}) : torch::zeros_like(flat);
        for (int64_t e = 0; e < flat.numel(); ++e) {
            const double orig = flat[e].item<double>();
            flat[e] = orig + h;
            const double up = f(inputs).item<double>();
            flat[e] = orig - h;
            const double down = f(inputs).item<double>();
            flat[e] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[e].item<double>();
            num_sq += numeric * numeric;
            diff_sq += (a - numeric) * (a - numeric);
        }
    }
    if (num_sq == 0.0) return std::sqrt(diff_sq);
    return std::sqrt(diff_sq / num_sq);
}

Eigen::MatrixXd gd_least_squares(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, int iters, double lr) {
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(X.cols(), Y.cols());
    const double n = static_cast<double>(X.rows());
    for (int it = 0; it < iters; ++it) {
        W -= lr * (2.0 / n) * X.transpose() * (X * W - Y);
    }
    return W;
}

torch::Tensor pixelwise_equivariance(const torch::Tensor& maps_warped_input, const torch::Tensor& maps,
                                     const torch::Tensor& warped_grid) {
    auto resampled = partdisent::warp_image(maps, partdisent::CoordGrid{warped_grid});
    return (maps_warped_input - resampled).pow(2).mean();
}

torch::Tensor random_maps(int64_t b, int64_t k, int64_t h, int64_t w, torch::Dtype dtype) {
    return (torch::rand({b, k, h, w}, torch::TensorOptions().dtype(dtype)) * 0.95 + 0.05);
}

std::array<double, 3> region_mean(const torch::Tensor& img, const torch::Tensor& labels, int64_t label) {
    auto im = as_double(img);
    auto lb = labels.to(torch::kLong).contiguous();
    auto ia = im.accessor<double, 3>();
    auto la = lb.accessor<int64_t, 2>();
    std::array<double, 3> sum{0, 0, 0};
    int64_t n = 0;
    for (int64_t i = 0; i < la.size(0); ++i)
        for (int64_t j = 0; j < la.size(1); ++j)
            if (la[i][j] == label) {
                for (int c = 0; c < 3; ++c) sum[c] += ia[c][i][j];
                ++n;
            }
    if (n == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan, nan};
    }
    for (auto& s : sum) s /= static_cast<double>(n);
    return sum;
}

}  // namespace oracle

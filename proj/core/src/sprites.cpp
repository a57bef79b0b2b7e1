#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "partdisent/data.hpp"

namespace partdisent {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Pose {
    double root_x = 0.0, root_y = 0.0;
    double rotation = 0.0;
    std::vector<double> lengths;
    std::vector<double> joint_angles;  // relative angle of each segment to its parent
};

struct Palette {
    std::vector<std::array<double, 3>> parts;  // segments then head
    std::array<double, 3> background{};
};

std::vector<std::array<double, 2>> joints_of(const Pose& p) {
    std::vector<std::array<double, 2>> j{{p.root_x, p.root_y}};
    double angle = -std::numbers::pi / 2.0 + p.rotation;  // pointing up
    for (size_t s = 0; s < p.lengths.size(); ++s) {
        angle += p.joint_angles[s];
        const auto& prev = j.back();
        j.push_back({prev[0] + p.lengths[s] * std::cos(angle), prev[1] + p.lengths[s] * std::sin(angle)});
    }
    return j;
}

double segment_distance(double px, double py, const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double vx = b[0] - a[0], vy = b[1] - a[1];
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - a[0]) * vx + (py - a[1]) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a[0] + t * vx), dy = py - (a[1] + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

bool fits(const std::vector<std::array<double, 2>>& joints, const SpriteConfig& cfg) {
    const double lo = cfg.margin + std::max(cfg.head_radius, cfg.thickness / 2.0);
    const double hi = static_cast<double>(cfg.resolution - 1) - lo;
    return std::all_of(joints.begin(), joints.end(), [&](const auto& j) {
        return j[0] >= lo && j[0] <= hi && j[1] >= lo && j[1] <= hi;
    });
}

Pose sample_pose(const SpriteConfig& cfg, SeededRng& rng) {
    Pose p;
    const double res = static_cast<double>(cfg.resolution);
    for (int attempt = 0;; ++attempt) {
        p.rotation = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * kDeg;
        p.lengths.assign(cfg.num_segments, 0.0);
        p.joint_angles.assign(cfg.num_segments, 0.0);
        for (int64_t s = 0; s < cfg.num_segments; ++s) {
            p.lengths[s] = rng.uniform(cfg.min_length, cfg.max_length);
            if (s > 0) p.joint_angles[s] = rng.uniform(-cfg.max_joint_angle_deg, cfg.max_joint_angle_deg) * kDeg;
        }
        // place the figure so that its bounding box centre is uniform in the free area
        p.root_x = 0.0;
        p.root_y = 0.0;
        auto j = joints_of(p);
        double minx = 1e9, maxx = -1e9, miny = 1e9, maxy = -1e9;
        for (const auto& q : j) {
            minx = std::min(minx, q[0]);
            maxx = std::max(maxx, q[0]);
            miny = std::min(miny, q[1]);
            maxy = std::max(maxy, q[1]);
        }
        const double lo = cfg.margin + std::max(cfg.head_radius, cfg.thickness / 2.0);
        const double hi = res - 1.0 - lo;
        const double free_x = (hi - lo) - (maxx - minx);
        const double free_y = (hi - lo) - (maxy - miny);
        if (free_x >= 0 && free_y >= 0) {
            p.root_x = lo - minx + rng.uniform(0.0, free_x);
            p.root_y = lo - miny + rng.uniform(0.0, free_y);
            if (fits(joints_of(p), cfg)) return p;
        }
        if (attempt > 1000) {
            // figure larger than the canvas: centre it
            p.root_x = res / 2.0 - (minx + maxx) / 2.0;
            p.root_y = res / 2.0 - (miny + maxy) / 2.0;
            return p;
        }
    }
}

Palette sample_palette(const SpriteConfig& cfg, SeededRng& rng) {
    Palette pal;
    pal.parts.resize(cfg.num_parts());
    for (auto& c : pal.parts) {
        for (auto& v : c) v = rng.uniform(cfg.min_color, cfg.max_color);
    }
    for (auto& v : pal.background) v = rng.uniform(cfg.min_background, cfg.max_background);
    return pal;
}

Sample render(const Pose& pose, const Palette& pal, const SpriteConfig& cfg) {
    const int64_t R = cfg.resolution;
    auto img = torch::empty({3, R, R}, torch::kFloat32);
    auto labels = torch::zeros({R, R}, torch::kLong);
    auto ia = img.accessor<float, 3>();
    auto la = labels.accessor<int64_t, 2>();
    const auto joints = joints_of(pose);
    const int64_t S = cfg.num_segments;
    const double half = cfg.thickness / 2.0;

    for (int64_t y = 0; y < R; ++y) {
        for (int64_t x = 0; x < R; ++x) {
            const double px = static_cast<double>(x), py = static_cast<double>(y);
            int64_t label = 0;
            for (int64_t s = 0; s < S; ++s) {
                if (segment_distance(px, py, joints[s], joints[s + 1]) <= half) label = s + 1;
            }
            const double hx = px - joints[S][0], hy = py - joints[S][1];
            if (std::sqrt(hx * hx + hy * hy) <= cfg.head_radius) label = S + 1;
            la[y][x] = label;
            const auto& color = label == 0 ? pal.background : pal.parts[label - 1];
            for (int c = 0; c < 3; ++c) ia[c][y][x] = static_cast<float>(color[c]);
        }
    }

    auto lm = torch::empty({S + 1, 2}, torch::kFloat64);
    auto lma = lm.accessor<double, 2>();
    for (int64_t j = 0; j <= S; ++j) {
        lma[j][0] = joints[j][0];
        lma[j][1] = joints[j][1];
    }
    Sample s;
    s.image = img;
    s.landmarks = lm;
    s.part_labels = labels;
    return s;
}

}  // namespace

Dataset generate_sprites(const SpriteConfig& cfg, SeededRng& rng) {
    if (cfg.num_segments < 1) throw std::invalid_argument("generate_sprites: need at least one segment");
    Dataset data;
    data.samples.reserve(cfg.count);
    const int64_t per_seq = std::max<int64_t>(cfg.frames_per_sequence, 1);
    Pose pose;
    Palette pal;
    for (int64_t i = 0; i < cfg.count; ++i) {
        const int64_t frame = i % per_seq;
        if (frame == 0) {
            pose = sample_pose(cfg, rng);
            pal = sample_palette(cfg, rng);
        } else {
            // small articulation change between consecutive frames
            Pose next = pose;
            const double step = cfg.frame_angle_step_deg * kDeg;
            const double lim = cfg.max_joint_angle_deg * kDeg;
            for (int64_t s = 1; s < cfg.num_segments; ++s) {
                next.joint_angles[s] = std::clamp(next.joint_angles[s] + rng.uniform(-step, step), -lim, lim);
            }
            if (fits(joints_of(next), cfg)) pose = next;
        }
        Sample s = render(pose, pal, cfg);
        s.name = "sprite_" + std::to_string(i);
        if (per_seq > 1) {
            s.sequence_id = "seq_" + std::to_string(i / per_seq);
            s.frame_index = frame;
        }
        data.samples.push_back(std::move(s));
    }
    data.index_sequences();
    return data;
}

}  // namespace partdisent

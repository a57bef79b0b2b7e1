#include "partdisent/config.hpp"

#include <fstream>
#include <map>

#include "partdisent/errors.hpp"

namespace partdisent {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(NormalizationMode m) {
    switch (m) {
        case NormalizationMode::InterOcular: return "inter_ocular";
        case NormalizationMode::EdgeLength: return "edge_length";
        case NormalizationMode::Diagonal: return "diagonal";
        case NormalizationMode::PixelRadius: return "pixel_radius";
    }
    return "edge_length";
}

NormalizationMode normalization_mode_from_string(const std::string& s) {
    if (s == "inter_ocular") return NormalizationMode::InterOcular;
    if (s == "edge_length") return NormalizationMode::EdgeLength;
    if (s == "diagonal") return NormalizationMode::Diagonal;
    if (s == "pixel_radius") return NormalizationMode::PixelRadius;
    throw ConfigError("unknown normalization mode: " + s);
}

namespace {

json to_json(const ModelConfig& m) {
    return {{"num_parts", m.num_parts},
            {"image_height", m.image_height},
            {"image_width", m.image_width},
            {"map_size", m.map_size},
            {"width", m.width},
            {"shape_min_res", m.shape_min_res},
            {"appearance_min_res", m.appearance_min_res},
            {"appearance_dim", m.appearance_dim},
            {"decoder_width", m.decoder_width},
            {"decoder_min_width", m.decoder_min_width},
            {"bottleneck_min_res", m.bottleneck_min_res},
            {"bottleneck_max_res", m.bottleneck_max_res},
            {"covariance_mode", m.covariance_mode == CovarianceMode::Isotropic ? "isotropic" : "full"},
            {"kappa", m.kappa},
            {"cov_scale", m.cov_scale},
            {"patch_size", m.patch_size},
            {"discriminator_width", m.discriminator_width}};
}

void from_json(const json& j, ModelConfig& m) {
    j.at("num_parts").get_to(m.num_parts);
    j.at("image_height").get_to(m.image_height);
    j.at("image_width").get_to(m.image_width);
    j.at("map_size").get_to(m.map_size);
    j.at("width").get_to(m.width);
    j.at("shape_min_res").get_to(m.shape_min_res);
    j.at("appearance_min_res").get_to(m.appearance_min_res);
    j.at("appearance_dim").get_to(m.appearance_dim);
    j.at("decoder_width").get_to(m.decoder_width);
    j.at("decoder_min_width").get_to(m.decoder_min_width);
    j.at("bottleneck_min_res").get_to(m.bottleneck_min_res);
    j.at("bottleneck_max_res").get_to(m.bottleneck_max_res);
    const auto mode = j.at("covariance_mode").get<std::string>();
    if (mode == "isotropic") {
        m.covariance_mode = CovarianceMode::Isotropic;
    } else if (mode == "full") {
        m.covariance_mode = CovarianceMode::Full;
    } else {
        throw ConfigError("model.covariance_mode must be 'isotropic' or 'full', got '" + mode + "'");
    }
    j.at("kappa").get_to(m.kappa);
    j.at("cov_scale").get_to(m.cov_scale);
    j.at("patch_size").get_to(m.patch_size);
    j.at("discriminator_width").get_to(m.discriminator_width);
}

json to_json(const SpriteConfig& s) {
    return {{"count", s.count},
            {"resolution", s.resolution},
            {"num_segments", s.num_segments},
            {"min_length", s.min_length},
            {"max_length", s.max_length},
            {"thickness", s.thickness},
            {"head_radius", s.head_radius},
            {"max_rotation_deg", s.max_rotation_deg},
            {"max_joint_angle_deg", s.max_joint_angle_deg},
            {"min_color", s.min_color},
            {"max_color", s.max_color},
            {"min_background", s.min_background},
            {"max_background", s.max_background},
            {"margin", s.margin},
            {"frames_per_sequence", s.frames_per_sequence},
            {"frame_angle_step_deg", s.frame_angle_step_deg}};
}

void from_json(const json& j, SpriteConfig& s) {
    j.at("count").get_to(s.count);
    j.at("resolution").get_to(s.resolution);
    j.at("num_segments").get_to(s.num_segments);
    j.at("min_length").get_to(s.min_length);
    j.at("max_length").get_to(s.max_length);
    j.at("thickness").get_to(s.thickness);
    j.at("head_radius").get_to(s.head_radius);
    j.at("max_rotation_deg").get_to(s.max_rotation_deg);
    j.at("max_joint_angle_deg").get_to(s.max_joint_angle_deg);
    j.at("min_color").get_to(s.min_color);
    j.at("max_color").get_to(s.max_color);
    j.at("min_background").get_to(s.min_background);
    j.at("max_background").get_to(s.max_background);
    j.at("margin").get_to(s.margin);
    j.at("frames_per_sequence").get_to(s.frames_per_sequence);
    j.at("frame_angle_step_deg").get_to(s.frame_angle_step_deg);
}

json to_json(const PairConfig& p) {
    return {{"tps",
             {{"control_grid", p.tps.control_grid},
              {"offset_std", p.tps.offset_std},
              {"max_rotation_deg", p.tps.max_rotation_deg},
              {"min_scale", p.tps.min_scale},
              {"max_scale", p.tps.max_scale},
              {"max_translation", p.tps.max_translation}}},
            {"appearance",
             {{"max_brightness", p.appearance.max_brightness},
              {"min_contrast", p.appearance.min_contrast},
              {"max_contrast", p.appearance.max_contrast},
              {"max_hue", p.appearance.max_hue}}},
            {"p_frame", p.p_frame}};
}

void from_json(const json& j, PairConfig& p) {
    const auto& t = j.at("tps");
    t.at("control_grid").get_to(p.tps.control_grid);
    t.at("offset_std").get_to(p.tps.offset_std);
    t.at("max_rotation_deg").get_to(p.tps.max_rotation_deg);
    t.at("min_scale").get_to(p.tps.min_scale);
    t.at("max_scale").get_to(p.tps.max_scale);
    t.at("max_translation").get_to(p.tps.max_translation);
    const auto& a = j.at("appearance");
    a.at("max_brightness").get_to(p.appearance.max_brightness);
    a.at("min_contrast").get_to(p.appearance.min_contrast);
    a.at("max_contrast").get_to(p.appearance.max_contrast);
    a.at("max_hue").get_to(p.appearance.max_hue);
    j.at("p_frame").get_to(p.p_frame);
}

json to_json(const EvalConfig& e) {
    return {{"mode", to_string(e.mode)},
            {"pck_thresholds_px", e.pck_thresholds_px},
            {"pck_alphas", e.pck_alphas},
            {"left_eye", e.left_eye},
            {"right_eye", e.right_eye},
            {"ridge", e.ridge},
            {"batch_size", e.batch_size}};
}

void from_json(const json& j, EvalConfig& e) {
    e.mode = normalization_mode_from_string(j.at("mode").get<std::string>());
    j.at("pck_thresholds_px").get_to(e.pck_thresholds_px);
    j.at("pck_alphas").get_to(e.pck_alphas);
    j.at("left_eye").get_to(e.left_eye);
    j.at("right_eye").get_to(e.right_eye);
    j.at("ridge").get_to(e.ridge);
    j.at("batch_size").get_to(e.batch_size);
}

/// Merges patch into base in place, rejecting keys the base does not know.
void overlay(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw ConfigError("config section '" + path + "' must be an object");
    for (const auto& [key, value] : patch.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key: " + full);
        auto& slot = base[key];
        if (slot.is_object()) {
            overlay(slot, value, full);
        } else if (slot.is_number() && !value.is_number()) {
            throw ConfigError("config key " + full + " expects a number");
        } else if (slot.is_boolean() && !value.is_boolean()) {
            throw ConfigError("config key " + full + " expects true/false");
        } else if (slot.is_string() && !value.is_string()) {
            throw ConfigError("config key " + full + " expects a string");
        } else if (slot.is_array() && !value.is_array()) {
            throw ConfigError("config key " + full + " expects a list");
        } else {
            slot = value;
        }
    }
}

RunConfig full_scale(const std::string& name, int64_t parts, int64_t resolution, double lr, bool adversarial,
                     const std::string& kind, NormalizationMode mode) {
    RunConfig c;
    c.name = name;
    c.model.num_parts = parts;
    c.model.image_height = c.model.image_width = resolution;
    c.learning_rate = lr;
    c.adversarial = adversarial;
    c.data.kind = kind;
    c.eval.mode = mode;
    c.steps = 100000;
    c.checkpoint_every = 5000;
    c.log_every = 50;
    return c;
}

}  // namespace

json to_json(const RunConfig& c) {
    return {{"name", c.name},
            {"seed", c.seed},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"clip_grad_norm", c.clip_grad_norm},
            {"adversarial", c.adversarial},
            {"checkpoint_every", c.checkpoint_every},
            {"log_every", c.log_every},
            {"equivariance_warmup", c.equivariance_warmup},
            {"equivariance_ramp", c.equivariance_ramp},
            {"model", to_json(c.model)},
            {"weights",
             {{"lambda_mu", c.weights.lambda_mu},
              {"lambda_sigma", c.weights.lambda_sigma},
              {"lambda_scal", c.weights.lambda_scal},
              {"lambda_adv", c.weights.lambda_adv}}},
            {"pairs", to_json(c.pairs)},
            {"data",
             {{"kind", c.data.kind},
              {"root", c.data.root},
              {"eval_root", c.data.eval_root},
              {"manifest", c.data.manifest},
              {"sprites", to_json(c.data.sprites)},
              {"test_count", c.data.test_count}}},
            {"eval", to_json(c.eval)}};
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    try {
        j.at("name").get_to(c.name);
        j.at("seed").get_to(c.seed);
        j.at("steps").get_to(c.steps);
        j.at("batch_size").get_to(c.batch_size);
        j.at("learning_rate").get_to(c.learning_rate);
        j.at("adam_beta1").get_to(c.adam_beta1);
        j.at("adam_beta2").get_to(c.adam_beta2);
        j.at("clip_grad_norm").get_to(c.clip_grad_norm);
        j.at("adversarial").get_to(c.adversarial);
        j.at("checkpoint_every").get_to(c.checkpoint_every);
        j.at("log_every").get_to(c.log_every);
        j.at("equivariance_warmup").get_to(c.equivariance_warmup);
        j.at("equivariance_ramp").get_to(c.equivariance_ramp);
        from_json(j.at("model"), c.model);
        const auto& w = j.at("weights");
        w.at("lambda_mu").get_to(c.weights.lambda_mu);
        w.at("lambda_sigma").get_to(c.weights.lambda_sigma);
        w.at("lambda_scal").get_to(c.weights.lambda_scal);
        w.at("lambda_adv").get_to(c.weights.lambda_adv);
        from_json(j.at("pairs"), c.pairs);
        const auto& d = j.at("data");
        d.at("kind").get_to(c.data.kind);
        d.at("root").get_to(c.data.root);
        d.at("eval_root").get_to(c.data.eval_root);
        d.at("manifest").get_to(c.data.manifest);
        from_json(d.at("sprites"), c.data.sprites);
        d.at("test_count").get_to(c.data.test_count);
        from_json(j.at("eval"), c.eval);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
}

RunConfig apply_json(const RunConfig& base, const json& patch) {
    RunConfig start = base;
    json p = patch;
    if (p.is_object() && p.contains("preset")) {
        start = preset(p.at("preset").get<std::string>());
        p.erase("preset");
    }
    json merged = to_json(start);
    overlay(merged, p, "");
    auto cfg = config_from_json(merged);
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    model.validate();
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (steps < 0) fail("steps must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (learning_rate < 0.0) fail("learning_rate must be >= 0");
    if (checkpoint_every < 1 || log_every < 1) fail("checkpoint_every and log_every must be >= 1");
    if (equivariance_warmup < 0 || equivariance_ramp < 0) fail("equivariance_warmup and equivariance_ramp must be >= 0");
    if (weights.lambda_mu < 0 || weights.lambda_sigma < 0 || weights.lambda_adv < 0) {
        fail("loss weights must be >= 0");
    }
    if (!(weights.lambda_scal > 0)) fail("weights.lambda_scal must be > 0");
    if (data.kind != "sprites" && data.kind != "folder" && data.kind != "video") {
        fail("data.kind must be sprites, folder or video");
    }
    if (data.kind == "sprites" && data.sprites.resolution != model.image_height) {
        fail("data.sprites.resolution must equal model.image_height");
    }
    if (pairs.p_frame < 0.0 || pairs.p_frame > 1.0) fail("pairs.p_frame must be in [0, 1]");
    if (eval.mode == NormalizationMode::InterOcular && (eval.left_eye < 0 || eval.right_eye < 0)) {
        fail("eval.left_eye and eval.right_eye are required for inter_ocular normalization");
    }
}

std::vector<std::string> preset_names() {
    return {"cathead",        "cathead20",      "celeba",      "human36m", "penn", "dogsrun", "cub",
            "bbc_regression", "bbc_synthesis", "deepfashion", "sprites"};
}

RunConfig preset(const std::string& name) {
    using M = NormalizationMode;
    RunConfig c;
    if (name == "cathead") {
        c = full_scale(name, 10, 128, 1e-3, false, "folder", M::InterOcular);
    } else if (name == "cathead20") {
        c = full_scale(name, 20, 128, 1e-3, false, "folder", M::InterOcular);
    } else if (name == "celeba") {
        c = full_scale(name, 10, 128, 1e-3, false, "folder", M::InterOcular);
    } else if (name == "human36m") {
        c = full_scale(name, 16, 128, 2e-4, false, "video", M::EdgeLength);
    } else if (name == "penn") {
        c = full_scale(name, 16, 128, 2e-4, false, "video", M::EdgeLength);
    } else if (name == "dogsrun") {
        c = full_scale(name, 12, 128, 1e-3, false, "video", M::EdgeLength);
    } else if (name == "cub") {
        c = full_scale(name, 10, 128, 1e-3, false, "folder", M::EdgeLength);
    } else if (name == "bbc_regression") {
        c = full_scale(name, 30, 128, 1e-3, false, "video", M::PixelRadius);
    } else if (name == "bbc_synthesis") {
        c = full_scale(name, 40, 256, 1e-3, true, "video", M::PixelRadius);
    } else if (name == "deepfashion") {
        c = full_scale(name, 16, 256, 1e-3, true, "folder", M::Diagonal);
        c.eval.pck_alphas = {0.025, 0.05, 0.075, 0.1};
        // pose-transfer runs use the full-covariance approximation
        c.model.covariance_mode = CovarianceMode::Full;
    } else if (name == "sprites") {
        c.name = "sprites";
        c.steps = 6000;
        c.batch_size = 8;
        c.learning_rate = 1e-3;
        c.checkpoint_every = 1000;
        c.log_every = 10;
        c.clip_grad_norm = 1.0;
        c.equivariance_warmup = 500;
        c.equivariance_ramp = 1000;
        c.model.num_parts = 4;
        c.model.image_height = c.model.image_width = 64;
        c.model.map_size = 32;
        c.model.width = 32;
        c.model.shape_min_res = 4;
        c.model.appearance_min_res = 16;
        c.model.appearance_dim = 32;
        c.model.decoder_width = 64;
        c.model.decoder_min_width = 16;
        c.model.discriminator_width = 16;
        c.data.kind = "sprites";
        c.data.sprites = SpriteConfig{};
        // a plain background and a bold figure: all four parts are left for
        // the body, and every segment is large enough to claim one
        c.data.sprites.min_background = c.data.sprites.max_background = 0.0;
        c.data.sprites.thickness = 8.0;
        c.data.sprites.head_radius = 6.0;
        c.data.sprites.min_length = 12.0;
        c.data.sprites.max_length = 14.0;
        c.data.test_count = 500;
        c.eval.mode = M::EdgeLength;
        c.eval.pck_thresholds_px = {2.0, 4.0, 6.0};
    } else {
        std::string names;
        for (const auto& n : preset_names()) names += " " + n;
        throw ConfigError("unknown preset '" + name + "'; available:" + names);
    }
    if (c.eval.mode == M::InterOcular) {
        // 5-point face layout: left eye, right eye, nose, mouth corners
        c.eval.left_eye = 0;
        c.eval.right_eye = 1;
    }
    return c;
}

RunConfig load_config(const std::string& spec) {
    const fs::path path(spec);
    fs::path file = path;
    if (!fs::exists(file) && fs::exists(fs::path(spec + ".json"))) file = spec + ".json";
    if (fs::exists(file)) {
        std::ifstream in(file);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("cannot parse " + file.string() + ": " + e.what());
        }
        return apply_json(RunConfig{}, j);
    }
    std::string name = spec;
    if (path.has_parent_path() && path.parent_path().filename() == "presets") name = path.filename().string();
    auto cfg = preset(name);
    cfg.validate();
    return cfg;
}

void save_config(const fs::path& path, const RunConfig& cfg) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << to_json(cfg).dump(2) << '\n';
    if (!out) throw DataError("cannot write config: " + path.string());
}

}  // namespace partdisent

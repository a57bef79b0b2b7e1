#include "partdisent/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "partdisent/config.hpp"
#include "partdisent/errors.hpp"
#include "partdisent/evaluation.hpp"
#include "partdisent/image_io.hpp"
#include "partdisent/trainer.hpp"
#include "partdisent/visualize.hpp"

namespace partdisent::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config = "sprites";
    std::optional<uint64_t> seed;
    std::optional<int64_t> steps;
    std::string parts;
    std::string out;
    bool overwrite = false;
};

fs::path output_root() {
    const char* env = std::getenv(kOutputRootEnv);
    return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path resolve_out(const std::string& out, const std::string& fallback_leaf) {
    return out.empty() ? output_root() / fallback_leaf : fs::path(out);
}

/// Claims `dir` for a command that owns the whole directory.
void claim_directory(const fs::path& dir, bool overwrite) {
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!overwrite) {
            throw ConfigError("output directory " + dir.string() + " is not empty; pass --overwrite");
        }
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

void claim_file(const fs::path& file, bool overwrite) {
    if (fs::exists(file) && !overwrite) {
        throw ConfigError(file.string() + " exists; pass --overwrite");
    }
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

torch::Tensor load_model_image(const fs::path& path, const ModelConfig& mc) {
    if (mc.image_height != mc.image_width) throw ConfigError("image loading expects a square model resolution");
    return center_crop_resize(load_image(path), mc.image_height);
}

std::vector<fs::path> expand_images(const std::vector<std::string>& inputs) {
    static const std::vector<std::string> exts{".png", ".jpg", ".jpeg", ".bmp"};
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(in)) {
                auto ext = e.path().extension().string();
                std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
                if (e.is_regular_file() && std::find(exts.begin(), exts.end(), ext) != exts.end()) {
                    found.push_back(e.path());
                }
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.emplace_back(in);
        }
    }
    return files;
}

std::vector<int64_t> parse_part_list(const std::string& spec, int64_t num_parts) {
    std::vector<int64_t> parts;
    if (spec == "all") {
        for (int64_t k = 0; k < num_parts; ++k) parts.push_back(k);
        return parts;
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
        if (item.empty()) continue;
        int64_t v = 0;
        try {
            size_t used = 0;
            v = std::stoll(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw std::out_of_range("invalid part index '" + item + "'");
        }
        parts.push_back(v);
    }
    return parts;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg = load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.steps) cfg.steps = *c.steps;
    if (!c.parts.empty()) {
        try {
            cfg.model.num_parts = std::stoll(c.parts);
        } catch (const std::exception&) {
            throw ConfigError("--parts expects a part count, got '" + c.parts + "'");
        }
    }
    cfg.validate();
    return cfg;
}

void print_report(std::ostream& out, const MetricReport& r) {
    out << "mean error: " << r.mean_error << (r.mode == NormalizationMode::PixelRadius ? " px" : " %") << " ("
        << to_string(r.mode) << ", " << r.mean_error_px << " px)";
    if (r.baseline_error) out << ", fixed-grid baseline: " << *r.baseline_error;
    out << '\n';
    for (const auto& p : r.pck) out << "PCK@" << p.label << ": " << p.percent << " %\n";
    if (r.rank_deficient) out << "note: landmark design matrix is rank deficient\n";
}

// --- commands ---------------------------------------------------------------------

int cmd_train(const Common& c, const std::string& resume, std::ostream& out, std::ostream& err) {
    RunConfig cfg = resolve_config(c);
    if (!resume.empty()) {
        // the architecture and data come from the checkpoint
        auto saved = read_checkpoint_config(resume);
        saved.steps = cfg.steps;
        cfg = saved;
    }
    const fs::path dir = resolve_out(c.out, cfg.name);
    if (resume.empty()) {
        claim_directory(dir, c.overwrite);
    } else {
        fs::create_directories(dir);  // continuing a run appends to its directory
    }

    auto warn = [&](const std::string& msg) { err << "warning: " << msg << '\n'; };
    auto data = load_run_data(cfg, warn);
    out << "training " << cfg.name << " for " << cfg.steps << " steps on " << data.train.size() << " images -> "
        << dir.string() << '\n';

    FitOptions opts;
    opts.out_dir = dir;
    if (!resume.empty()) opts.resume_from = fs::path(resume);
    const int64_t every = std::max<int64_t>(1, cfg.steps / 20);
    opts.on_step = [&](const LossReport& r) {
        if (r.step % every == 0 || r.step == cfg.steps) {
            out << "step " << r.step << " rec " << r.reconstruction << " equiv " << r.equivariance;
            if (cfg.adversarial) out << " adv_g " << r.adversarial_g << " adv_d " << r.adversarial_d;
            out << '\n';
        }
    };
    std::optional<MetricReport> report;
    opts.on_finish = [&](TrainState& st) {
        if (data.eval_train.has_landmarks() && data.eval_test.has_landmarks() &&
            static_cast<int64_t>(data.eval_train.size()) >= 2 * cfg.model.num_parts) {
            report = evaluate_run(st.model, data.eval_test, data.eval_train, cfg.eval);
        }
    };
    auto result = fit(cfg, data.train, opts);
    out << "checkpoint: " << result.final_checkpoint.string() << '\n';
    if (report) {
        write_json(dir / "metrics.json", report->to_json());
        report->write_csv(dir / "metrics.csv");
        print_report(out, *report);
    }
    return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& json_path, const std::string& csv_path,
             bool overwrite, std::ostream& out, std::ostream& err) {
    auto st = load_checkpoint(checkpoint);
    const auto& cfg = st->config;
    const fs::path base = fs::path(checkpoint).parent_path();
    const fs::path jp = json_path.empty() ? base / "metrics.json" : fs::path(json_path);
    const fs::path cp = csv_path.empty() ? jp.parent_path() / (jp.stem().string() + ".csv") : fs::path(csv_path);
    claim_file(jp, overwrite);
    claim_file(cp, overwrite);

    auto data = load_run_data(cfg, [&](const std::string& m) { err << "warning: " << m << '\n'; });
    auto report = evaluate_run(st->model, data.eval_test, data.eval_train, cfg.eval);
    write_json(jp, report.to_json());
    report.write_csv(cp);
    save_config(jp.parent_path() / "config.json", cfg);
    print_report(out, report);
    out << "report: " << jp.string() << '\n';
    return kOk;
}

int cmd_swap(const std::string& checkpoint, const std::string& shape_path, const std::string& app_path,
             const std::string& parts_spec, const std::string& out_dir, bool overwrite, std::ostream& out) {
    auto st = load_checkpoint(checkpoint);
    auto& model = st->model;
    const auto& mc = model.config;
    const auto parts = parse_part_list(parts_spec, mc.num_parts);
    for (auto p : parts) {
        if (p < 0 || p >= mc.num_parts) {
            throw std::out_of_range("part index " + std::to_string(p) + " outside the valid range 0.." +
                                    std::to_string(mc.num_parts - 1));
        }
    }
    const fs::path dir = resolve_out(out_dir, st->config.name + "/swap");
    claim_directory(dir, overwrite);

    auto shape = load_model_image(shape_path, mc).unsqueeze(0);
    auto app = load_model_image(app_path, mc).unsqueeze(0);
    auto generated = swap(model, shape, app, parts);
    auto maps = infer(model, shape).maps.values[0];
    save_image(dir / "swap.png", generated[0]);
    save_image(dir / "overlay.png", overlay_maps(generated[0], maps));
    save_config(dir / "config.json", st->config);
    out << "wrote " << (dir / "swap.png").string() << '\n';
    return kOk;
}

int cmd_synthesize(const Common& c, std::optional<int64_t> count, std::optional<int64_t> frames,
                   std::ostream& out) {
    RunConfig cfg = resolve_config(c);
    if (count) cfg.data.sprites.count = *count;
    if (frames) cfg.data.sprites.frames_per_sequence = *frames;
    cfg.data.kind = "sprites";
    const fs::path dir = resolve_out(c.out, cfg.name + "_data");
    claim_directory(dir, c.overwrite);

    auto data = load_run_data(cfg);
    write_image_folder(dir / "train", data.train);
    write_image_folder(dir / "test", data.eval_test);

    // a config that trains on the written folders
    RunConfig folder_cfg = cfg;
    folder_cfg.data.kind = "folder";
    folder_cfg.data.root = fs::absolute(dir).string();
    save_config(dir / "config.json", folder_cfg);
    out << "wrote " << data.train.size() << " training and " << data.eval_test.size() << " test sprites to "
        << dir.string() << '\n';
    return kOk;
}

int cmd_export(const std::string& checkpoint, const std::vector<std::string>& inputs, const std::string& out_dir,
               bool overwrite, std::ostream& out) {
    auto st = load_checkpoint(checkpoint);
    auto& model = st->model;
    const auto files = expand_images(inputs);
    if (files.empty()) throw DataError("no input images");
    const fs::path dir = resolve_out(out_dir, st->config.name + "/activations");
    claim_directory(dir, overwrite);

    std::vector<MomentRow> rows;
    for (const auto& f : files) {
        auto img = load_model_image(f, model.config);
        auto r = infer(model, img.unsqueeze(0));
        save_image(dir / (f.stem().string() + "_overlay.png"), overlay_maps(img, r.maps.values[0]));
        auto part_rows = moment_rows(r.moments, {f.filename().string()});
        rows.insert(rows.end(), part_rows.begin(), part_rows.end());
    }
    write_moments_csv(dir / "moments.csv", rows);
    save_config(dir / "config.json", st->config);
    out << "exported " << files.size() << " images to " << dir.string() << '\n';
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Unsupervised part-based shape/appearance disentangling"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) {
            sub->add_option("--config", common.config, "config file or preset name")->capture_default_str();
            sub->add_option("--seed", common.seed, "random seed");
            sub->add_option("--steps", common.steps, "training steps");
            sub->add_option("--parts", common.parts, "number of parts");
        }
        sub->add_option("--out", common.out, "output directory");
        sub->add_flag("--overwrite", common.overwrite, "replace existing outputs");
    };

    std::string resume;
    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, true);
    train->add_option("--resume", resume, "checkpoint to continue from");

    std::string checkpoint, json_path, csv_path;
    auto* eval = app.add_subcommand("eval", "landmark regression metrics of a checkpoint");
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--json", json_path, "report path (default: next to the checkpoint)");
    eval->add_option("--csv", csv_path, "per-landmark table path");
    eval->add_flag("--overwrite", common.overwrite);

    std::string shape_path, app_path, swap_parts = "all";
    auto* swp = app.add_subcommand("swap", "transfer part appearances between two images");
    swp->add_option("--checkpoint", checkpoint)->required();
    swp->add_option("--shape", shape_path)->required()->check(CLI::ExistingFile);
    swp->add_option("--appearance", app_path)->required()->check(CLI::ExistingFile);
    swp->add_option("--parts", swap_parts, "comma-separated part indices, 'all' or ''")->capture_default_str();
    swp->add_option("--out", common.out, "output directory");
    swp->add_flag("--overwrite", common.overwrite);

    std::optional<int64_t> count, frames;
    auto* syn = app.add_subcommand("synthesize-sprites", "write the synthetic sprite dataset to disk");
    add_common(syn, true);
    syn->add_option("--count", count, "training images");
    syn->add_option("--frames", frames, "frames per sequence");

    std::vector<std::string> images;
    auto* exp = app.add_subcommand("export-activations", "part activation overlays and moments");
    exp->add_option("--checkpoint", checkpoint)->required();
    exp->add_option("--images", images, "image files or directories")->required();
    exp->add_option("--out", common.out, "output directory");
    exp->add_flag("--overwrite", common.overwrite);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*train) return cmd_train(common, resume, out, err);
        if (*eval) return cmd_eval(checkpoint, json_path, csv_path, common.overwrite, out, err);
        if (*swp) return cmd_swap(checkpoint, shape_path, app_path, swap_parts, common.out, common.overwrite, out);
        if (*syn) return cmd_synthesize(common, count, frames, out);
        if (*exp) return cmd_export(checkpoint, images, common.out, common.overwrite, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::out_of_range& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const NumericError& e) {
        err << "numeric error in " << e.component() << ": " << e.what() << '\n';
        return kNumericError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kConfigError;
}

}  // namespace partdisent::cli

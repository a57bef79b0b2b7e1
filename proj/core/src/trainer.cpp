#include "partdisent/trainer.hpp"

#include <exception>
#include <fstream>
#include <thread>

#include "partdisent/bounded_queue.hpp"
#include "partdisent/errors.hpp"
#include "partdisent/objectives.hpp"

namespace partdisent {

namespace fs = std::filesystem;
using nlohmann::json;

json LossReport::to_json() const {
    return {{"step", step},
            {"reconstruction", reconstruction},
            {"equivariance", equivariance},
            {"adversarial_g", adversarial_g},
            {"adversarial_d", adversarial_d},
            {"total", total}};
}

TrainState::TrainState(const RunConfig& cfg) : config(cfg), model(cfg.model, cfg.seed) {
    auto opts = torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.adam_beta1, cfg.adam_beta2});
    optimizer = std::make_unique<torch::optim::Adam>(model.generator_parameters(), opts);
    disc_optimizer = std::make_unique<torch::optim::Adam>(model.discriminator_parameters(), opts);
}

// --- batches -------------------------------------------------------------------

PairBatch PairBatch::stack(const std::vector<TrainingPair>& pairs) {
    PairBatch b;
    std::vector<torch::Tensor> s, a, t;
    std::vector<float> has;
    int64_t grid = 5;
    for (const auto& p : pairs) {
        if (p.transform_record) grid = static_cast<int64_t>(std::lround(std::sqrt(p.transform_record->offsets.size(0))));
    }
    for (const auto& p : pairs) {
        s.push_back(p.shape_input);
        a.push_back(p.appearance_input);
        t.push_back(p.target);
        b.transforms.push_back(p.transform_record ? *p.transform_record : TpsTransform::identity(grid));
        has.push_back(p.transform_record ? 1.0F : 0.0F);
    }
    b.shape_input = torch::stack(s);
    b.appearance_input = torch::stack(a);
    b.target = torch::stack(t);
    b.has_transform = torch::tensor(has);
    return b;
}

PairBatch make_batch(const RunConfig& cfg, const Dataset& data, int64_t step) {
    if (data.empty()) throw DataError("training set is empty");
    const SeededRng base(cfg.seed);
    auto pick_rng = base.derive({0xBA7C4ULL, static_cast<uint64_t>(step)});
    std::vector<TrainingPair> pairs;
    pairs.reserve(cfg.batch_size);
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
        const auto idx = static_cast<size_t>(pick_rng.uniform_int(0, static_cast<int64_t>(data.size()) - 1));
        auto rng = base.derive({0x9A1EULL, static_cast<uint64_t>(step), static_cast<uint64_t>(b)});
        const auto& sample = data.samples[idx];
        if (sample.sequence_id && !data.sequences.empty()) {
            pairs.push_back(make_pair_video(sample, data, cfg.pairs, rng));
        } else {
            pairs.push_back(make_pair_image(sample, cfg.pairs, rng));
        }
    }
    return PairBatch::stack(pairs);
}

// --- step ----------------------------------------------------------------------

namespace {

struct Forward {
    torch::Tensor rec, equiv, x_hat;
    PartMoments shape_moments;  // moments of sigma(a(x))
};

Forward forward(TrainState& st, const PairBatch& b) {
    auto& m = st.model;
    const auto& mc = m.config;
    const auto& w = st.config.weights;
    auto map_grid = make_identity_grid(mc.map_size, mc.map_size);
    auto img_grid = make_identity_grid(mc.image_height, mc.image_width);

    // appearance stream on x o s
    auto enc_s = shape_encode(m, b.appearance_input);
    auto features = appearance_encode(m, enc_s.stem, normalize_maps(enc_s.maps));
    auto alpha = pool_appearance(features, enc_s.maps);

    // shape stream on a(x)
    auto enc_a = shape_encode(m, b.shape_input);
    auto mom_a = compute_moments(enc_a.maps, map_grid);
    auto approx = render_approx_maps(decoder_moments(mom_a, mc.covariance_mode, mc.kappa, mc.cov_scale), map_grid);
    auto fx = project_appearance(alpha, approx);
    auto x_hat = decode(m, approx, fx);

    Forward out;
    out.x_hat = x_hat;
    out.shape_moments = mom_a;
    auto mask = soft_mask(mom_a.detach(), w.lambda_scal, img_grid);
    out.rec = reconstruction_loss(b.target, x_hat, mask);

    auto mom_s = compute_moments(enc_s.maps, map_grid);
    auto mom_warped = warped_map_moments(enc_a.maps, b.transforms, map_grid);
    out.equiv = equivariance_loss(mom_s, mom_warped, w, b.has_transform);
    return out;
}

struct PatchSet {
    torch::Tensor real, fake, cond;
};

PatchSet adversarial_patches(const ModelState& m, const PairBatch& b, const Forward& f) {
    const auto& mc = m.config;
    auto img_grid = make_identity_grid(mc.image_height, mc.image_width);
    auto mom = f.shape_moments.detach();
    auto approx_img =
        render_approx_maps(decoder_moments(mom, mc.covariance_mode, mc.kappa, mc.cov_scale), img_grid).values;
    return {extract_patches(b.target, mom.mean, mc.patch_size),
            extract_patches(f.x_hat, mom.mean, mc.patch_size),
            extract_patches(approx_img, mom.mean, mc.patch_size)};
}

}  // namespace

double equivariance_schedule(const RunConfig& cfg, int64_t step) {
    if (step <= cfg.equivariance_warmup) return 0.0;
    if (cfg.equivariance_ramp <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(step - cfg.equivariance_warmup) /
                             static_cast<double>(cfg.equivariance_ramp));
}

LossReport train_step(TrainState& st, const PairBatch& batch) {
    st.model.train(true);
    auto f = forward(st, batch);

    std::optional<torch::Tensor> adv_g;
    PatchSet patches;
    if (st.config.adversarial) {
        patches = adversarial_patches(st.model, batch, f);
        adv_g = [&] {
            auto fake = discriminate(st.model, patches.fake, patches.cond);
            return adversarial_losses(fake.detach(), fake).generator;
        }();
    }
    const double ramp = equivariance_schedule(st.config, st.model.step + 1);
    auto total = total_loss(f.rec, f.equiv * ramp, adv_g, st.config.weights);

    st.optimizer->zero_grad();
    total.backward();
    if (st.config.clip_grad_norm > 0.0) {
        torch::nn::utils::clip_grad_norm_(st.model.generator_parameters(), st.config.clip_grad_norm);
    }
    st.optimizer->step();

    LossReport r;
    if (st.config.adversarial) {
        st.disc_optimizer->zero_grad();
        auto real = discriminate(st.model, patches.real, patches.cond);
        auto fake = discriminate(st.model, patches.fake.detach(), patches.cond);
        auto d_loss = adversarial_losses(real, fake).discriminator;
        if (!std::isfinite(d_loss.item<double>())) {
            throw NumericError("discriminator", "discriminator loss is not finite");
        }
        d_loss.backward();
        st.disc_optimizer->step();
        r.adversarial_g = adv_g->item<double>();
        r.adversarial_d = d_loss.item<double>();
    }

    st.model.step += 1;
    r.step = st.model.step;
    r.reconstruction = f.rec.item<double>();
    r.equivariance = f.equiv.item<double>();
    r.total = total.item<double>();
    return r;
}

LossReport evaluate_losses(TrainState& st, const PairBatch& batch) {
    torch::NoGradGuard guard;
    st.model.train(false);
    auto f = forward(st, batch);
    LossReport r;
    r.step = st.model.step;
    r.reconstruction = f.rec.item<double>();
    r.equivariance = f.equiv.item<double>();
    if (st.config.adversarial) {
        auto p = adversarial_patches(st.model, batch, f);
        auto losses = adversarial_losses(discriminate(st.model, p.real, p.cond),
                                         discriminate(st.model, p.fake, p.cond));
        r.adversarial_g = losses.generator.item<double>();
        r.adversarial_d = losses.discriminator.item<double>();
    }
    r.total = r.reconstruction + equivariance_schedule(st.config, st.model.step + 1) * r.equivariance +
              (st.config.adversarial ? st.config.weights.lambda_adv * r.adversarial_g : 0.0);
    return r;
}

// --- checkpoints -------------------------------------------------------------

void save_checkpoint(const TrainState& st, const fs::path& path) {
    torch::serialize::OutputArchive ar;
    ar.write("schema_version", c10::IValue(kCheckpointSchemaVersion));
    ar.write("config", c10::IValue(to_json(st.config).dump()));
    ar.write("step", c10::IValue(st.model.step));
    auto put = [&](const std::string& key, const auto& saver) {
        torch::serialize::OutputArchive sub;
        saver(sub);
        ar.write(key, sub);
    };
    put("shape_encoder", [&](auto& a) { st.model.shape_encoder->save(a); });
    put("appearance_encoder", [&](auto& a) { st.model.appearance_encoder->save(a); });
    put("decoder", [&](auto& a) { st.model.decoder->save(a); });
    put("discriminator", [&](auto& a) { st.model.discriminator->save(a); });
    put("optimizer", [&](auto& a) { st.optimizer->save(a); });
    put("disc_optimizer", [&](auto& a) { st.disc_optimizer->save(a); });

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    try {
        ar.save_to(tmp.string());
        fs::rename(tmp, path);
    } catch (const std::exception& e) {
        throw DataError("cannot write checkpoint " + path.string() + ": " + e.what());
    }
}

namespace {

torch::serialize::InputArchive open_archive(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive ar;
    try {
        ar.load_from(path.string());
    } catch (const std::exception& e) {
        throw DataError("cannot read checkpoint " + path.string() + ": " + e.what());
    }
    c10::IValue version;
    if (!ar.try_read("schema_version", version) || version.toInt() != kCheckpointSchemaVersion) {
        throw DataError("unsupported checkpoint schema in " + path.string());
    }
    return ar;
}

RunConfig archive_config(torch::serialize::InputArchive& ar) {
    c10::IValue cfg;
    ar.read("config", cfg);
    return config_from_json(json::parse(cfg.toStringRef()));
}

}  // namespace

RunConfig read_checkpoint_config(const fs::path& path) {
    auto ar = open_archive(path);
    return archive_config(ar);
}

std::unique_ptr<TrainState> load_checkpoint(const fs::path& path) {
    auto ar = open_archive(path);
    auto st = std::make_unique<TrainState>(archive_config(ar));
    c10::IValue step;
    ar.read("step", step);
    st->model.step = step.toInt();
    auto get = [&](const std::string& key, const auto& loader) {
        torch::serialize::InputArchive sub;
        ar.read(key, sub);
        loader(sub);
    };
    get("shape_encoder", [&](auto& a) { st->model.shape_encoder->load(a); });
    get("appearance_encoder", [&](auto& a) { st->model.appearance_encoder->load(a); });
    get("decoder", [&](auto& a) { st->model.decoder->load(a); });
    get("discriminator", [&](auto& a) { st->model.discriminator->load(a); });
    get("optimizer", [&](auto& a) { st->optimizer->load(a); });
    get("disc_optimizer", [&](auto& a) { st->disc_optimizer->load(a); });
    return st;
}

fs::path checkpoint_path(const fs::path& out_dir, int64_t step) {
    return out_dir / ("ckpt_" + std::to_string(step));
}

// --- data ----------------------------------------------------------------------

RunData load_run_data(const RunConfig& cfg, const std::function<void(const std::string&)>& warn) {
    RunData d;
    const SeededRng base(cfg.seed);
    const auto& dc = cfg.data;
    if (dc.kind == "sprites") {
        auto train_rng = base.derive({0x5791ULL, 1});
        d.train = generate_sprites(dc.sprites, train_rng);
        d.eval_train = d.train;
        auto test_cfg = dc.sprites;
        test_cfg.count = dc.test_count;
        test_cfg.frames_per_sequence = 1;
        auto test_rng = base.derive({0x5791ULL, 2});
        d.eval_test = generate_sprites(test_cfg, test_rng);
        return d;
    }

    FolderOptions opts;
    opts.resolution = cfg.model.image_height;
    if (!dc.manifest.empty()) opts.manifest = dc.manifest;
    opts.warn = warn;
    if (dc.root.empty()) throw ConfigError("data.root is required for data.kind = " + dc.kind);
    const fs::path root = dc.root;
    if (!fs::is_directory(root)) throw DataError("data root does not exist: " + dc.root);
    const fs::path eval_root = dc.eval_root.empty() ? root : fs::path(dc.eval_root);

    if (dc.kind == "folder") {
        d.train = load_image_folder(root, "train", opts);
    } else if (dc.kind == "video") {
        d.train = load_video_folder(root, opts);
    } else {
        throw ConfigError("unknown data.kind: " + dc.kind);
    }

    auto eval_split = [&](const std::string& split) -> Dataset {
        if (!fs::is_directory(eval_root / split)) return {};
        if (dc.kind == "folder" && eval_root == root && split == "train") return d.train;
        return load_image_folder(eval_root, split, opts);
    };
    d.eval_train = eval_split("train");
    d.eval_test = eval_split("test");
    return d;
}

// --- fit -----------------------------------------------------------------------

FitResult fit(const RunConfig& cfg, const Dataset& train, const FitOptions& opts) {
    cfg.validate();
    if (train.empty()) throw DataError("training set is empty");
    fs::create_directories(opts.out_dir);

    std::unique_ptr<TrainState> st;
    if (opts.resume_from) {
        st = load_checkpoint(*opts.resume_from);
        // keep the restored weights, adopt the requested schedule
        st->config.steps = cfg.steps;
        st->config.checkpoint_every = cfg.checkpoint_every;
        st->config.log_every = cfg.log_every;
    } else {
        st = std::make_unique<TrainState>(cfg);
    }
    const RunConfig& run = st->config;
    save_config(opts.out_dir / "config.json", run);

    FitResult result;
    result.log_path = opts.out_dir / "log.jsonl";
    std::ofstream log(result.log_path, opts.resume_from ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot write " + result.log_path.string());

    const int64_t start = st->step();
    if (start >= run.steps) {
        result.final_checkpoint = checkpoint_path(opts.out_dir, start);
        save_checkpoint(*st, result.final_checkpoint);
        if (opts.on_finish) opts.on_finish(*st);
        return result;
    }

    // batches are produced ahead of time on a worker thread
    BoundedQueue<PairBatch> queue(std::max<size_t>(1, opts.prefetch));
    std::exception_ptr producer_error;
    std::thread producer([&] {
        try {
            for (int64_t t = start + 1; t <= run.steps; ++t) {
                if (!queue.push(make_batch(run, train, t))) return;
            }
        } catch (...) {
            producer_error = std::current_exception();
        }
        queue.close();
    });

    try {
        for (int64_t t = start + 1; t <= run.steps; ++t) {
            auto batch = queue.pop();
            if (!batch) break;
            auto report = train_step(*st, *batch);
            result.reports.push_back(report);
            if (run.log_every > 0 && (t % run.log_every == 0 || t == run.steps)) {
                log << report.to_json().dump() << '\n';
                log.flush();
            }
            if (opts.on_step) opts.on_step(report);
            if (run.checkpoint_every > 0 && t % run.checkpoint_every == 0 && t != run.steps) {
                save_checkpoint(*st, checkpoint_path(opts.out_dir, t));
            }
        }
    } catch (...) {
        queue.close();
        producer.join();
        throw;
    }
    queue.close();
    producer.join();
    if (producer_error) std::rethrow_exception(producer_error);

    result.final_checkpoint = checkpoint_path(opts.out_dir, st->step());
    save_checkpoint(*st, result.final_checkpoint);
    if (opts.on_finish) opts.on_finish(*st);
    return result;
}

// --- inference -------------------------------------------------------------------

namespace {

constexpr int64_t kInferenceChunk = 32;

void check_images(const ModelConfig& mc, const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != mc.image_height ||
        images.size(3) != mc.image_width) {
        throw std::invalid_argument("expected B x 3 x " + std::to_string(mc.image_height) + " x " +
                                    std::to_string(mc.image_width) + " images");
    }
}

}  // namespace

InferenceResult infer(ModelState& model, const torch::Tensor& images) {
    check_images(model.config, images);
    torch::NoGradGuard guard;
    model.train(false);
    const auto& mc = model.config;
    auto grid = make_identity_grid(mc.map_size, mc.map_size);

    std::vector<torch::Tensor> maps, means, covs, alphas, recs;
    for (int64_t lo = 0; lo < images.size(0); lo += kInferenceChunk) {
        auto x = images.slice(0, lo, std::min(images.size(0), lo + kInferenceChunk));
        auto enc = shape_encode(model, x);
        auto features = appearance_encode(model, enc.stem, normalize_maps(enc.maps));
        auto alpha = pool_appearance(features, enc.maps);
        auto mom = compute_moments(enc.maps, grid);
        auto approx = render_approx_maps(decoder_moments(mom, mc.covariance_mode, mc.kappa, mc.cov_scale), grid);
        maps.push_back(enc.maps.values);
        means.push_back(mom.mean);
        covs.push_back(mom.cov);
        alphas.push_back(alpha.features);
        recs.push_back(decode(model, approx, project_appearance(alpha, approx)).clamp(0.0, 1.0));
    }
    InferenceResult r;
    r.maps = {torch::cat(maps)};
    r.moments = {torch::cat(means), torch::cat(covs)};
    r.appearances = {torch::cat(alphas)};
    r.reconstruction = torch::cat(recs);
    return r;
}

torch::Tensor swap(ModelState& model, const torch::Tensor& shape_src, const torch::Tensor& app_src,
                   const std::vector<int64_t>& parts) {
    const auto& mc = model.config;
    check_images(mc, shape_src);
    check_images(mc, app_src);
    if (shape_src.size(0) != app_src.size(0)) {
        throw std::invalid_argument("swap: shape and appearance batches differ in size");
    }
    for (auto p : parts) {
        if (p < 0 || p >= mc.num_parts) {
            throw std::out_of_range("part index " + std::to_string(p) + " outside [0, " +
                                    std::to_string(mc.num_parts) + ")");
        }
    }
    auto shape = infer(model, shape_src);
    auto app = infer(model, app_src);

    torch::NoGradGuard guard;
    auto alpha = shape.appearances.features.clone();
    for (auto p : parts) alpha.select(1, p).copy_(app.appearances.features.select(1, p));

    auto grid = make_identity_grid(mc.map_size, mc.map_size);
    auto approx =
        render_approx_maps(decoder_moments(shape.moments, mc.covariance_mode, mc.kappa, mc.cov_scale), grid);
    return decode(model, approx, project_appearance({alpha}, approx)).clamp(0.0, 1.0);
}

}  // namespace partdisent

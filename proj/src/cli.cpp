#include "suplid/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "suplid/config.hpp"
#include "suplid/experiment.hpp"
#include "suplid/export_contract.hpp"
#include "suplid/parallel.hpp"
#include "suplid/synth.hpp"
#include "suplid/tensorio.hpp"

namespace suplid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolName = "suplid";
constexpr int kManifestVersion = 1;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

json file_entry(const fs::path& path) {
    const std::string bytes = io::read_file(path);
    return {{"path", path.string()}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}};
}

// Audit record written next to every output.
class RunManifest {
public:
    RunManifest(std::string command, const Config& config) : command_(std::move(command)), config_(config) {}

    void input(const fs::path& p) { inputs_.push_back(file_entry(p)); }
    void output(const fs::path& p) { outputs_.push_back(file_entry(p)); }
    void timing(const std::string& name, double ms) { timings_[name] = ms; }
    json& options() { return options_; }

    void write(const fs::path& path) const {
        const json j = {
            {"tool", kToolName},
            {"manifest_version", kManifestVersion},
            {"command", command_},
            {"config", to_json(config_)},
            {"config_hash", hex64(config_hash(config_))},
            {"options", options_.is_null() ? json::object() : options_},
            {"inputs", inputs_},
            {"outputs", outputs_},
            {"timings_ms", timings_},
            {"threads", num_threads()},
        };
        io::write_file_atomic(path, j.dump(2) + "\n");
    }

private:
    std::string command_;
    Config config_;
    json options_;
    json inputs_ = json::array();
    json outputs_ = json::array();
    json timings_ = json::object();
};

fs::path manifest_beside(const fs::path& out) {
    fs::path p = out;
    p += ".manifest.json";
    return p;
}

bool has_extension(const fs::path& p, std::string_view ext) { return p.extension() == ext; }

// Sorted stems of regular files in `dir` with extension `ext`.
std::vector<std::string> list_stems(const fs::path& dir, std::string_view ext) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: '" + dir.string() + "'");
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && has_extension(entry.path(), ext)) stems.push_back(entry.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw IoError("no *" + std::string(ext) + " files in '" + dir.string() + "'");
    return stems;
}

fs::path find_by_stem(const fs::path& dir, const std::string& stem, std::initializer_list<std::string_view> exts,
                      std::string_view what) {
    std::string tried;
    for (auto ext : exts) {
        fs::path p = dir / (stem + std::string(ext));
        if (fs::is_regular_file(p)) return p;
        tried += (tried.empty() ? "" : ", ") + p.string();
    }
    throw IoError("no " + std::string(what) + " for '" + stem + "' (tried " + tried + ")");
}

Tensor load_rgb(const fs::path& p) {
    if (has_extension(p, ".slt")) {
        Tensor t = io::load_tensor(p);
        t.expect(DType::u8, {0, 0, 3}, p.string());
        return t;
    }
    return io::load_image(p);
}

Tensor load_f32(const fs::path& p, std::string_view what) {
    Tensor t = io::load_tensor(p);
    t.expect(DType::f32, {0, 0, 0}, std::string(what) + " '" + p.string() + "'");
    return t;
}

// Flags shared by subcommands that take hyperparameters. Unset flags leave
// the config (file or defaults) untouched.
struct ConfigFlags {
    std::string config_path;
    std::optional<std::size_t> k, m, pps, iterations, feature_dim;
    std::optional<double> compactness, purity, rectify_floor;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy, metric;

    void add_to(CLI::App& app, bool coreset_flags) {
        app.add_option("--config", config_path, "Config JSON or a run manifest")->check(CLI::ExistingFile);
        app.add_option("--k", k, "Neighbor count for LID");
        app.add_option("--pixels-per-sp", pps, "Pixels per superpixel");
        app.add_option("--compactness", compactness, "SLIC compactness");
        app.add_option("--slic-iterations", iterations, "SLIC iterations");
        app.add_option("--feature-dim", feature_dim, "Expected embedding dimension");
        app.add_option("--rectify-floor", rectify_floor, "Rectification floor");
        if (coreset_flags) {
            app.add_option("--m", m, "Coreset size per class");
            app.add_option("--purity", purity, "Purity threshold");
            app.add_option("--seed", seed, "Seed for the random strategy");
            app.add_option("--strategy", strategy, "lid|random|energy|diverse");
            app.add_option("--metric", metric, "euclidean|cosine");
        }
    }

    Config resolve() const {
        Config c = config_path.empty() ? Config{} : load_config(config_path);
        if (k) c.k = *k;
        if (m) c.m = *m;
        if (pps) c.pixels_per_superpixel = *pps;
        if (iterations) c.slic_iterations = *iterations;
        if (feature_dim) c.feature_dim = *feature_dim;
        if (compactness) c.compactness = *compactness;
        if (purity) c.purity_threshold = *purity;
        if (rectify_floor) c.rectify_floor = *rectify_floor;
        if (seed) c.seed = *seed;
        if (strategy) c.coreset_strategy = coreset::parse_strategy(*strategy);
        if (metric) c.lid_metric = lid::parse_metric(*metric);
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------- convert

struct ConvertArgs {
    std::string in, out, info;
};

int cmd_convert(const ConvertArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path in = a.info.empty() ? fs::path(a.in) : fs::path(a.info);
    Tensor t;
    if (has_extension(in, ".ppm")) t = io::load_image(in);
    else if (has_extension(in, ".pgm")) t = io::load_mask(in);
    else if (has_extension(in, ".slt")) t = io::load_tensor(in);
    else throw ValidationError("convert: unsupported input extension '" + in.extension().string() + "'");

    if (!a.info.empty()) {
        const json j = {{"path", in.string()},
                        {"dtype", dtype_name(t.dtype())},
                        {"shape", t.shape()},
                        {"payload_bytes", t.byte_size()}};
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    }
    if (a.out.empty()) throw ValidationError("convert: --out is required unless --info is given");

    const fs::path out = a.out;
    if (has_extension(out, ".slt")) io::save_tensor(t, out);
    else if (has_extension(out, ".ppm")) io::save_ppm(t, out);
    else if (has_extension(out, ".pgm")) io::save_pgm(t, out);
    else throw ValidationError("convert: unsupported output extension '" + out.extension().string() + "'");

    RunManifest man("convert", Config{});
    man.input(in);
    man.output(out);
    man.timing("total", elapsed_ms(t0));
    man.write(manifest_beside(out));
    return kExitOk;
}

// ------------------------------------------------------------ superpixels

struct SuperpixelArgs {
    std::string image, out;
    std::optional<std::size_t> num_superpixels;
    ConfigFlags cfg;
};

int cmd_superpixels(const SuperpixelArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    Config config = a.cfg.resolve();
    const Tensor image = load_rgb(a.image);
    if (a.num_superpixels) {
        if (*a.num_superpixels == 0) throw ValidationError("--num-superpixels must be positive");
        const std::size_t area = image.dim(0) * image.dim(1);
        config.pixels_per_superpixel = std::max<std::size_t>(1, area / *a.num_superpixels);
        const std::size_t got = slic::requested_superpixels(image.dim(0), image.dim(1), config.pixels_per_superpixel);
        if (got != *a.num_superpixels)
            warn("--num-superpixels " + std::to_string(*a.num_superpixels) + " maps to pixels_per_superpixel " +
                 std::to_string(config.pixels_per_superpixel) + ", which requests " + std::to_string(got));
    }
    const auto partition = slic::slic_segment(image, config.slic());
    const fs::path out = a.out;
    io::save_tensor(partition.labels, out);

    RunManifest man("superpixels", config);
    man.options() = {{"num_superpixels", partition.num_superpixels}};
    man.input(a.image);
    man.output(out);
    man.timing("total", elapsed_ms(t0));
    man.write(manifest_beside(out));
    return kExitOk;
}

// ---------------------------------------------------------- build-coreset

struct BuildArgs {
    std::string features_dir, labels_dir, images_dir, logits_dir, out;
    ConfigFlags cfg;
};

json calibration_json(const pipeline::Calibration& cal) {
    json j = json::object();
    for (std::size_t i = 0; i < pipeline::kNumConfidenceMethods; ++i) {
        if (cal.min_confidence[i])
            j[std::string(scores::confidence_name(static_cast<scores::ConfidenceMethod>(i)))] = *cal.min_confidence[i];
    }
    return j;
}

int cmd_build_coreset(const BuildArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const Config config = a.cfg.resolve();
    const auto stems = list_stems(a.features_dir, ".slt");
    const bool with_logits = !a.logits_dir.empty();

    std::vector<fs::path> inputs;
    struct Paths {
        fs::path features, image, labels, logits;
    };
    std::vector<Paths> paths;
    for (const auto& s : stems) {
        Paths p;
        p.features = fs::path(a.features_dir) / (s + ".slt");
        p.image = find_by_stem(a.images_dir, s, {".ppm", ".slt"}, "image");
        p.labels = find_by_stem(a.labels_dir, s, {".pgm", ".slt"}, "label mask");
        if (with_logits) p.logits = find_by_stem(a.logits_dir, s, {".slt"}, "logit map");
        paths.push_back(p);
    }

    const pipeline::SampleLoader loader = [&](std::size_t i, bool logits_only) {
        pipeline::TrainingSample sample;
        if (with_logits) sample.logits = load_f32(paths[i].logits, "logit map");
        if (logits_only) return sample;
        sample.image = load_rgb(paths[i].image);
        sample.features = load_f32(paths[i].features, "feature map");
        sample.labels = io::load_mask(paths[i].labels);
        return sample;
    };
    check_feature_dim(config, load_f32(paths[0].features, "feature map").dim(2), paths[0].features.string());

    const auto t_pass = std::chrono::steady_clock::now();
    const auto pass = pipeline::run_training_pass(paths.size(), loader, config.slic());
    const double pass_ms = elapsed_ms(t_pass);

    const auto t_build = std::chrono::steady_clock::now();
    auto params = config.coreset();
    params.num_classes = pass.num_classes;
    auto build = coreset::build_coreset_detailed(pass.records, params);
    if (pass.templates) build.coreset.kl_templates = pass.templates->templates;
    const double build_ms = elapsed_ms(t_build);

    std::ostringstream buf;
    coreset::save_coreset(build.coreset, buf);
    const fs::path out = a.out;
    io::write_file_atomic(out, buf.str());

    // Map flattened record positions back to (image stem, superpixel id).
    std::vector<std::pair<std::size_t, std::size_t>> flat;
    for (std::size_t img = 0; img < pass.records.size(); ++img) {
        for (const auto& r : pass.records[img]) flat.emplace_back(img, r.superpixel);
    }
    json sources = json::array();
    for (auto idx : build.source_index) sources.push_back({stems[flat[idx].first], flat[idx].second});

    fs::path sidecar = out;
    sidecar += ".json";
    const json side = {
        {"strategy", coreset::strategy_name(build.coreset.strategy)},
        {"metric", lid::metric_name(config.lid_metric)},
        {"k_used", build.coreset.k_used},
        {"m", config.m},
        {"num_classes", build.coreset.num_classes},
        {"rows", build.coreset.rows()},
        {"dim", build.coreset.dim()},
        {"calibration", calibration_json(pass.calibration)},
        {"sources", sources},
    };
    io::write_file_atomic(sidecar, side.dump(2) + "\n");

    RunManifest man("build-coreset", config);
    for (const auto& p : paths) {
        man.input(p.features);
        man.input(p.image);
        man.input(p.labels);
        if (with_logits) man.input(p.logits);
    }
    man.output(out);
    man.output(sidecar);
    man.timing("training_pass", pass_ms);
    man.timing("selection", build_ms);
    man.timing("total", elapsed_ms(t0));
    man.write(manifest_beside(out));
    return kExitOk;
}

// ------------------------------------------------------------------ score

struct ScoreArgs {
    std::string features, logits, image, out;
    std::string features_dir, logits_dir, images_dir, out_dir;
    std::string coreset_path, sidecar, method = "suplid", mask_out, export_sidecar;
    std::optional<std::string> confidence, guidance;
    std::optional<double> threshold;
    ConfigFlags cfg;
};

pipeline::Calibration read_calibration(const fs::path& sidecar) {
    pipeline::Calibration cal;
    json j;
    try {
        j = json::parse(io::read_file(sidecar));
    } catch (const json::parse_error& e) {
        throw FormatError(sidecar.string() + ": invalid JSON: " + e.what());
    }
    if (!j.contains("calibration") || !j["calibration"].is_object())
        throw FormatError(sidecar.string() + ": missing 'calibration' object");
    for (const auto& [name, value] : j["calibration"].items()) {
        if (!value.is_number()) throw FormatError(sidecar.string() + ": calibration '" + name + "' is not a number");
        cal.min_confidence[static_cast<std::size_t>(scores::parse_confidence(name))] = value.get<double>();
    }
    return cal;
}

int cmd_score(const ScoreArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    Config config = a.cfg.resolve();
    bool use_confidence = true;
    if (a.confidence) {
        if (*a.confidence == "none") use_confidence = false;
        else config.confidence_method = scores::parse_confidence(*a.confidence);
    }
    if (a.guidance) config.guidance_method = scores::parse_guidance(*a.guidance);
    config.validate();

    const bool dir_mode = !a.features_dir.empty();
    if (dir_mode && (a.logits_dir.empty() || a.images_dir.empty() || a.out_dir.empty()))
        throw ValidationError("score: --features-dir needs --logits-dir, --images-dir and --out-dir");
    if (!dir_mode && (a.features.empty() || a.logits.empty() || a.image.empty() || a.out.empty()))
        throw ValidationError("score: give --features, --logits, --image and --out (or the *-dir forms)");
    if (a.threshold.has_value() != !a.mask_out.empty())
        throw ValidationError("score: --threshold and --mask-out must be given together");
    if (dir_mode && !a.mask_out.empty()) throw ValidationError("score: --mask-out is single-image only");

    std::ifstream cs_in(a.coreset_path, std::ios::binary);
    if (!cs_in) throw IoError("cannot open coreset '" + a.coreset_path + "'");
    const auto cs = coreset::load_coreset(cs_in);
    check_feature_dim(config, cs.dim(), a.coreset_path);

    fs::path sidecar = a.sidecar;
    if (sidecar.empty()) {
        sidecar = a.coreset_path;
        sidecar += ".json";
    }
    pipeline::Calibration calibration;
    const bool have_sidecar = fs::is_regular_file(sidecar);
    if (have_sidecar) calibration = read_calibration(sidecar);
    else if (!a.sidecar.empty()) throw IoError("cannot open sidecar '" + sidecar.string() + "'");
    const auto cal_min = calibration.get(config.confidence_method);
    if (use_confidence && !cal_min)
        warn("no calibration minimum for " + std::string(scores::confidence_name(config.confidence_method)) +
             "; rectifying against 0");

    pipeline::ScoringPlan plan;
    plan.method = pipeline::parse_method(a.method);
    plan.use_confidence = use_confidence;
    plan.fusion = config.fusion(cal_min.value_or(0.0));
    plan.slic = config.slic();

    struct Job {
        fs::path features, logits, image, out;
    };
    std::vector<Job> jobs;
    if (dir_mode) {
        for (const auto& s : list_stems(a.features_dir, ".slt")) {
            jobs.push_back({fs::path(a.features_dir) / (s + ".slt"),
                            find_by_stem(a.logits_dir, s, {".slt"}, "logit map"),
                            find_by_stem(a.images_dir, s, {".ppm", ".slt"}, "image"), fs::path(a.out_dir) / (s + ".slt")});
        }
    } else {
        jobs.push_back({a.features, a.logits, a.image, a.out});
    }

    std::optional<ExportShapes> shapes;
    if (!a.export_sidecar.empty()) shapes = load_export_sidecar(a.export_sidecar);

    std::vector<std::size_t> superpixels(jobs.size(), 0);
    const auto t_score = std::chrono::steady_clock::now();
    const auto score_one = [&](std::size_t i) {
        const Tensor image = load_rgb(jobs[i].image);
        const Tensor features = load_f32(jobs[i].features, "feature map");
        const Tensor logits = load_f32(jobs[i].logits, "logit map");
        if (shapes) check_export_shapes(*shapes, features, logits);
        auto result = pipeline::score_image(image, features, logits, cs, plan);
        if (result.partition) superpixels[i] = result.partition->num_superpixels;
        io::save_tensor(result.per_pixel, jobs[i].out);
        if (a.threshold) io::save_tensor(scores::threshold_map(result.per_pixel, *a.threshold), a.mask_out);
    };
    if (jobs.size() == 1) {
        score_one(0);
    } else {
        parallel_for(jobs.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) score_one(i);
        });
    }
    const double score_ms = elapsed_ms(t_score);

    RunManifest man("score", config);
    man.options() = {{"method", a.method},
                     {"use_confidence", use_confidence},
                     {"calibration_min", plan.fusion.calibration_min},
                     {"superpixels", superpixels}};
    if (a.threshold) man.options()["threshold"] = *a.threshold;
    man.input(a.coreset_path);
    if (have_sidecar) man.input(sidecar);
    if (shapes) man.input(a.export_sidecar);
    for (const auto& j : jobs) {
        man.input(j.features);
        man.input(j.logits);
        man.input(j.image);
        man.output(j.out);
    }
    if (!a.mask_out.empty()) man.output(a.mask_out);
    man.timing("scoring", score_ms);
    man.timing("total", elapsed_ms(t0));
    man.write(dir_mode ? fs::path(a.out_dir) / "manifest.json" : manifest_beside(a.out));
    return kExitOk;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
    std::string scores_dir, masks_dir, out;
    bool per_image = false;
};

json report_json(const eval::EvalReport& r) {
    return {{"auroc", r.auroc},       {"aupr", r.aupr},   {"fpr_at_95tpr", r.fpr_at_95tpr},
            {"best_f1", r.best_f1},   {"n_ood", r.n_ood}, {"n_id", r.n_id},
            {"n_ignored", r.n_ignored}};
}

int cmd_eval(const EvalArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto stems = list_stems(a.scores_dir, ".slt");
    std::vector<Tensor> maps(stems.size()), masks(stems.size());
    std::vector<fs::path> score_paths, mask_paths;
    for (const auto& s : stems) {
        score_paths.push_back(fs::path(a.scores_dir) / (s + ".slt"));
        mask_paths.push_back(find_by_stem(a.masks_dir, s, {".pgm", ".slt"}, "OOD mask"));
    }
    parallel_for(stems.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            maps[i] = io::load_tensor(score_paths[i]);
            masks[i] = io::load_mask(mask_paths[i]);
        }
    });

    json report = report_json(eval::evaluate(maps, masks));
    report["n_images"] = stems.size();
    report["best_f1_kind"] = "pixel";
    if (a.per_image) {
        json rows = json::array();
        for (std::size_t i = 0; i < stems.size(); ++i) {
            json row = {{"image", stems[i]}};
            try {
                row.update(report_json(eval::evaluate(std::span(maps).subspan(i, 1), std::span(masks).subspan(i, 1))));
            } catch (const ValidationError& e) {
                row["error"] = e.what();
            }
            rows.push_back(row);
        }
        report["per_image"] = rows;
    }
    const fs::path out = a.out;
    io::write_file_atomic(out, report.dump(2) + "\n");

    RunManifest man("eval", Config{});
    man.options() = {{"per_image", a.per_image}};
    for (std::size_t i = 0; i < stems.size(); ++i) {
        man.input(score_paths[i]);
        man.input(mask_paths[i]);
    }
    man.output(out);
    man.timing("total", elapsed_ms(t0));
    man.write(manifest_beside(out));
    return kExitOk;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
    std::string spec, out_dir;
};

struct SynthPlan {
    synth::SynthSpec spec;
    std::size_t train_scenes = 4;
    std::size_t test_scenes = 2;
};

SynthPlan parse_synth_plan(const json& j) {
    if (!j.is_object()) throw ValidationError("synth spec: expected a JSON object");
    SynthPlan p;
    auto& s = p.spec;
    const auto uint = [](const json& v, const std::string& key) -> std::uint64_t {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            throw ValidationError("synth spec: '" + key + "' must be a non-negative integer");
        return v.get<std::uint64_t>();
    };
    const auto real = [](const json& v, const std::string& key) {
        if (!v.is_number()) throw ValidationError("synth spec: '" + key + "' must be a number");
        return v.get<double>();
    };
    for (const auto& [key, v] : j.items()) {
        if (key == "num_classes") s.num_classes = uint(v, key);
        else if (key == "intrinsic_dims") {
            s.intrinsic_dims.clear();
            if (v.is_array()) {
                for (const auto& e : v) s.intrinsic_dims.push_back(uint(e, key));
            } else {
                s.intrinsic_dims.push_back(uint(v, key));
            }
        } else if (key == "ambient_dim") s.ambient_dim = uint(v, key);
        else if (key == "cluster_separation") s.cluster_separation = real(v, key);
        else if (key == "noise_sigma") s.noise_sigma = real(v, key);
        else if (key == "height") s.height = uint(v, key);
        else if (key == "width") s.width = uint(v, key);
        else if (key == "feature_stride") s.feature_stride = uint(v, key);
        else if (key == "ood_kind") {
            if (!v.is_string()) throw ValidationError("synth spec: 'ood_kind' must be a string");
            s.ood_kind = synth::parse_ood_kind(v.get<std::string>());
        } else if (key == "blob_size") s.blob_size = uint(v, key);
        else if (key == "logit_scale") s.logit_scale = real(v, key);
        else if (key == "logit_noise") s.logit_noise = real(v, key);
        else if (key == "high_dim_sigma") s.high_dim_sigma = real(v, key);
        else if (key == "seed") s.seed = uint(v, key);
        else if (key == "train_scenes") p.train_scenes = uint(v, key);
        else if (key == "test_scenes") p.test_scenes = uint(v, key);
        else throw ValidationError("synth spec: unknown key '" + key + "'");
    }
    s.validate();
    if (p.train_scenes == 0 || p.test_scenes == 0) throw ValidationError("synth spec: scene counts must be >= 1");
    return p;
}

// Scene index offset separating test scenes from training scenes.
constexpr std::uint64_t kTestSceneBase = 1'000'000;

int cmd_synth(const SynthArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    json spec_json;
    try {
        spec_json = json::parse(io::read_file(a.spec));
    } catch (const json::parse_error& e) {
        throw FormatError(a.spec + ": invalid JSON: " + e.what());
    }
    const SynthPlan plan = parse_synth_plan(spec_json);
    const fs::path root = a.out_dir;

    struct Item {
        fs::path dir;
        std::uint64_t scene;
        std::string stem;
        bool train;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < plan.train_scenes; ++i)
        items.push_back({root / "train", i, "scene_" + std::to_string(i), true});
    for (std::size_t i = 0; i < plan.test_scenes; ++i)
        items.push_back({root / "test", kTestSceneBase + i, "scene_" + std::to_string(i), false});

    std::vector<std::vector<fs::path>> written(items.size());
    std::vector<double> accuracy(items.size());
    parallel_for(items.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto spec = plan.spec;
            spec.scene_index = items[i].scene;
            const auto scene = synth::make_scene(spec);
            accuracy[i] = scene.id_accuracy;
            const auto& d = items[i].dir;
            const auto& s = items[i].stem;
            std::vector<fs::path> files = {d / "images" / (s + ".ppm"), d / "features" / (s + ".slt"),
                                           d / "logits" / (s + ".slt"),
                                           d / (items[i].train ? "labels" : "masks") / (s + ".pgm")};
            io::save_ppm(scene.image, files[0]);
            io::save_tensor(scene.features, files[1]);
            io::save_tensor(scene.logits, files[2]);
            io::save_pgm(items[i].train ? scene.train_labels : scene.ood_mask, files[3]);
            written[i] = files;
        }
    });

    RunManifest man("synth", Config{});
    man.options() = {{"spec", spec_json}, {"id_accuracy", accuracy}};
    man.input(a.spec);
    for (const auto& files : written) {
        for (const auto& f : files) man.output(f);
    }
    man.timing("total", elapsed_ms(t0));
    man.write(root / "manifest.json");
    return kExitOk;
}

// ----------------------------------------------------------------- ablate

struct AblateArgs {
    std::string train_dir, test_dir, out;
    std::vector<std::string> confidences, guidances, strategies;
    ConfigFlags cfg;
};

int cmd_ablate(const AblateArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const Config config = a.cfg.resolve();
    const fs::path train = a.train_dir, test = a.test_dir;

    std::vector<experiment::Variant> variants;
    if (a.confidences.empty() && a.guidances.empty() && a.strategies.empty()) {
        variants = experiment::component_variants();
    } else {
        std::vector<scores::ConfidenceMethod> cs;
        std::vector<scores::GuidanceMethod> gs;
        std::vector<coreset::Strategy> ss;
        for (const auto& c : a.confidences) cs.push_back(scores::parse_confidence(c));
        for (const auto& g : a.guidances) gs.push_back(scores::parse_guidance(g));
        for (const auto& s : a.strategies) ss.push_back(coreset::parse_strategy(s));
        if (cs.empty()) cs.push_back(config.confidence_method);
        if (gs.empty()) gs.push_back(config.guidance_method);
        if (ss.empty()) ss.push_back(config.coreset_strategy);
        variants = experiment::grid_variants(cs, gs, ss);
    }

    const auto train_stems = list_stems(train / "features", ".slt");
    const pipeline::SampleLoader loader = [&](std::size_t i, bool logits_only) {
        const auto& s = train_stems[i];
        pipeline::TrainingSample sample;
        sample.logits = load_f32(find_by_stem(train / "logits", s, {".slt"}, "logit map"), "logit map");
        if (logits_only) return sample;
        sample.image = load_rgb(find_by_stem(train / "images", s, {".ppm", ".slt"}, "image"));
        sample.features = load_f32(train / "features" / (s + ".slt"), "feature map");
        sample.labels = io::load_mask(find_by_stem(train / "labels", s, {".pgm", ".slt"}, "label mask"));
        return sample;
    };
    const auto pass = pipeline::run_training_pass(train_stems.size(), loader, config.slic());

    const auto test_stems = list_stems(test / "features", ".slt");
    const experiment::TestLoader test_loader = [&](std::size_t i) {
        const auto& s = test_stems[i];
        experiment::TestSample t;
        t.image = load_rgb(find_by_stem(test / "images", s, {".ppm", ".slt"}, "image"));
        t.features = load_f32(test / "features" / (s + ".slt"), "feature map");
        t.logits = load_f32(find_by_stem(test / "logits", s, {".slt"}, "logit map"), "logit map");
        t.mask = io::load_mask(find_by_stem(test / "masks", s, {".pgm", ".slt"}, "OOD mask"));
        return t;
    };
    const auto results = experiment::run_variants(pass, test_stems.size(), test_loader, config, variants);

    std::ostringstream csv;
    csv.precision(10);
    csv << "variant,method,use_confidence,confidence,guidance,strategy,auroc,aupr,fpr_at_95tpr,best_f1,n_ood,n_id\n";
    for (const auto& r : results) {
        const auto& v = r.variant;
        csv << v.name << ',' << pipeline::method_name(v.method) << ',' << (v.use_confidence ? "true" : "false") << ','
            << scores::confidence_name(v.confidence) << ',' << scores::guidance_name(v.guidance) << ','
            << coreset::strategy_name(v.strategy) << ',' << r.report.auroc << ',' << r.report.aupr << ','
            << r.report.fpr_at_95tpr << ',' << r.report.best_f1 << ',' << r.report.n_ood << ',' << r.report.n_id
            << '\n';
    }
    const fs::path out = a.out;
    io::write_file_atomic(out, csv.str());

    RunManifest man("ablate", config);
    json names = json::array();
    for (const auto& v : variants) names.push_back(v.name);
    man.options() = {{"variants", names}, {"calibration", calibration_json(pass.calibration)}};
    man.output(out);
    man.timing("total", elapsed_ms(t0));
    man.write(manifest_beside(out));
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Superpixel LID out-of-distribution scoring", "suplid"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "suplid 1.0.0");

    ConvertArgs convert;
    auto* c_convert = app.add_subcommand("convert", "Convert between PPM/PGM and SLTF, or print a header");
    c_convert->add_option("--in", convert.in, "Input .ppm, .pgm or .slt");
    c_convert->add_option("--out", convert.out, "Output .ppm, .pgm or .slt");
    c_convert->add_option("--info", convert.info, "Print dtype and shape of a file");

    SuperpixelArgs sp;
    auto* c_sp = app.add_subcommand("superpixels", "Segment an image into SLIC superpixels");
    c_sp->add_option("--image", sp.image, "Input .ppm or u8 [H,W,3] .slt")->required();
    c_sp->add_option("--out", sp.out, "Output i32 [H,W] label map (.slt)")->required();
    auto* nsp = c_sp->add_option("--num-superpixels", sp.num_superpixels, "Requested superpixel count");
    sp.cfg.add_to(*c_sp, false);
    nsp->excludes(c_sp->get_option("--pixels-per-sp"));

    BuildArgs build;
    auto* c_build = app.add_subcommand("build-coreset", "Build an LID coreset from training tensors");
    c_build->add_option("--features-dir", build.features_dir, "Feature maps (<stem>.slt)")->required();
    c_build->add_option("--labels-dir", build.labels_dir, "Label masks (<stem>.pgm|.slt)")->required();
    c_build->add_option("--images-dir", build.images_dir, "Images (<stem>.ppm|.slt)")->required();
    c_build->add_option("--logits-dir", build.logits_dir, "Logit maps (<stem>.slt); enables calibration");
    c_build->add_option("--out", build.out, "Output coreset (.slc)")->required();
    build.cfg.add_to(*c_build, true);

    ScoreArgs score;
    auto* c_score = app.add_subcommand("score", "Score images against a coreset");
    c_score->add_option("--features", score.features, "Feature map (.slt)");
    c_score->add_option("--logits", score.logits, "Logit map (.slt)");
    c_score->add_option("--image", score.image, "Image (.ppm|.slt)");
    c_score->add_option("--out", score.out, "Output f32 [H,W] score map (.slt)");
    c_score->add_option("--features-dir", score.features_dir, "Directory form of --features");
    c_score->add_option("--logits-dir", score.logits_dir, "Directory form of --logits");
    c_score->add_option("--images-dir", score.images_dir, "Directory form of --image");
    c_score->add_option("--out-dir", score.out_dir, "Directory for <stem>.slt score maps");
    c_score->add_option("--coreset", score.coreset_path, "Coreset (.slc)")->required();
    c_score->add_option("--sidecar", score.sidecar, "Coreset sidecar JSON (default <coreset>.json)");
    c_score->add_option("--confidence", score.confidence, "msp|maxlogit|energy|entropy|kl_match|none");
    c_score->add_option("--guidance", score.guidance, "weighted_lid|unweighted_lid|knn_distance|none");
    c_score->add_option("--export-sidecar", score.export_sidecar, "Exporter JSON with D, K, H, W, Hf, Wf")
        ->check(CLI::ExistingFile);
    c_score->add_option("--method", score.method, "suplid|pixel|knn|nnguide");
    c_score->add_option("--threshold", score.threshold, "Threshold for the OOD mask");
    c_score->add_option("--mask-out", score.mask_out, "Output u8 [H,W] OOD mask (.slt)");
    score.cfg.add_to(*c_score, false);

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Pixel-level AUROC, AUPR, FPR@95TPR and best F1");
    c_eval->add_option("--scores-dir", ev.scores_dir, "Score maps (<stem>.slt)")->required();
    c_eval->add_option("--masks-dir", ev.masks_dir, "OOD masks (<stem>.pgm|.slt)")->required();
    c_eval->add_option("--out", ev.out, "Report JSON")->required();
    c_eval->add_flag("--per-image", ev.per_image, "Add per-image metrics");

    SynthArgs sy;
    auto* c_synth = app.add_subcommand("synth", "Generate synthetic train/test fixtures");
    c_synth->add_option("--spec", sy.spec, "Synth spec JSON")->required()->check(CLI::ExistingFile);
    c_synth->add_option("--out-dir", sy.out_dir, "Output root")->required();

    AblateArgs ab;
    auto* c_ablate = app.add_subcommand("ablate", "Run an ablation table over a fixture set");
    c_ablate->add_option("--train-dir", ab.train_dir, "Root with images/ features/ logits/ labels/")->required();
    c_ablate->add_option("--test-dir", ab.test_dir, "Root with images/ features/ logits/ masks/")->required();
    c_ablate->add_option("--out", ab.out, "Output CSV")->required();
    c_ablate->add_option("--confidence", ab.confidences, "Confidence methods (grid mode)")->delimiter(',');
    c_ablate->add_option("--guidance", ab.guidances, "Guidance methods (grid mode)")->delimiter(',');
    c_ablate->add_option("--strategy", ab.strategies, "Coreset strategies (grid mode)")->delimiter(',');
    ab.cfg.add_to(*c_ablate, false);
    c_ablate->add_option("--m", ab.cfg.m, "Coreset size per class");
    c_ablate->add_option("--seed", ab.cfg.seed, "Seed for the random strategy");

    std::vector<const char*> argv;
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        std::cout << "suplid 1.0.0\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (c_convert->parsed()) {
            if (convert.info.empty() && convert.in.empty())
                throw ValidationError("convert: --in or --info is required");
            return cmd_convert(convert);
        }
        if (c_sp->parsed()) return cmd_superpixels(sp);
        if (c_build->parsed()) return cmd_build_coreset(build);
        if (c_score->parsed()) return cmd_score(score);
        if (c_eval->parsed()) return cmd_eval(ev);
        if (c_synth->parsed()) return cmd_synth(sy);
        if (c_ablate->parsed()) return cmd_ablate(ab);
        throw InvariantError("no subcommand dispatched");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const InvariantError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace suplid::cli

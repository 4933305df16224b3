#include "suplid/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "suplid/parallel.hpp"

namespace suplid::pipeline {

namespace {

void check_finite(const Tensor& t, std::string_view what) {
    for (float v : t.data<float>()) {
        if (!std::isfinite(v)) throw ValidationError(std::string(what) + " contains non-finite values");
    }
}

constexpr std::array<scores::ConfidenceMethod, kNumConfidenceMethods> kAllMethods = {
    scores::ConfidenceMethod::msp, scores::ConfidenceMethod::maxlogit, scores::ConfidenceMethod::energy,
    scores::ConfidenceMethod::entropy, scores::ConfidenceMethod::kl_match};

}  // namespace

Method parse_method(std::string_view name) {
    if (name == "suplid") return Method::suplid;
    if (name == "pixel") return Method::pixel;
    if (name == "knn") return Method::knn;
    if (name == "nnguide") return Method::nnguide;
    throw ValidationError("unknown scoring method '" + std::string(name) + "' (expected suplid|pixel|knn|nnguide)");
}

std::string_view method_name(Method method) {
    switch (method) {
        case Method::suplid: return "suplid";
        case Method::pixel: return "pixel";
        case Method::knn: return "knn";
        case Method::nnguide: return "nnguide";
    }
    return "?";
}

void check_inputs(const Tensor& image, const Tensor& features, const Tensor* logits) {
    image.expect(DType::u8, {0, 0, 3}, "image");
    const std::size_t h = image.dim(0), w = image.dim(1);
    features.expect(DType::f32, {0, 0, 0}, "feature map");
    if (features.dim(0) > h || features.dim(1) > w)
        throw ValidationError("feature map " + shape_string(features.shape()) + " is finer than image [" +
                              std::to_string(h) + "," + std::to_string(w) + "]");
    check_finite(features, "feature map");
    if (logits) {
        logits->expect(DType::f32, {h, w, 0}, "logit map (must match image resolution)");
        if (logits->dim(2) < 2) throw ValidationError("logit map needs K >= 2 classes");
        check_finite(*logits, "logit map");
    }
}

TrainingPass run_training_pass(std::size_t count, const SampleLoader& load, const slic::SlicParams& slic) {
    slic.validate();
    if (count == 0) throw ValidationError("training pass: no training images");
    TrainingPass pass;

    // Templates first: kl_match calibration needs them.
    bool have_logits = false;
    {
        scores::KlTemplateBuilder builder;
        for (std::size_t i = 0; i < count; ++i) {
            auto sample = load(i, true);
            if (i == 0) have_logits = sample.logits.has_value();
            if (sample.logits.has_value() != have_logits)
                throw ValidationError("training pass: logits must be present for all images or none");
            if (sample.logits) builder.add(*sample.logits);
        }
        if (have_logits) {
            pass.templates = builder.finish();
            pass.num_classes = pass.templates->num_classes();
        }
    }

    using MinArray = std::array<double, kNumConfidenceMethods>;
    std::vector<MinArray> image_min(count);
    pass.records.resize(count);
    parallel_for(count, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto sample = load(i, false);
            check_inputs(sample.image, sample.features, sample.logits ? &*sample.logits : nullptr);
            sample.labels.expect(DType::u8, {sample.image.dim(0), sample.image.dim(1)}, "training label mask");
            if (pass.num_classes > 0) {
                for (auto v : sample.labels.data<std::uint8_t>()) {
                    if (v != coreset::kIgnoreLabel && v >= pass.num_classes)
                        throw ValidationError("training mask " + std::to_string(i) + " has class " +
                                              std::to_string(v) + " >= K=" + std::to_string(pass.num_classes));
                }
            }

            const auto partition = slic::slic_segment(sample.image, slic);
            auto records = coreset::superpixel_embed(sample.features, partition, &sample.labels);

            image_min[i].fill(std::numeric_limits<double>::infinity());
            if (sample.logits) {
                for (auto method : kAllMethods) {
                    const auto conf = scores::aggregate_confidence(
                        scores::confidence_from_logits(*sample.logits, method, &*pass.templates), partition);
                    // Minimum over labeled superpixels only.
                    double& mn = image_min[i][static_cast<std::size_t>(method)];
                    for (auto& rec : records) {
                        mn = std::min(mn, conf[rec.superpixel]);
                        if (method == scores::ConfidenceMethod::energy) rec.confidence = conf[rec.superpixel];
                    }
                }
            }
            pass.records[i] = std::move(records);
        }
    });

    if (have_logits) {
        for (auto method : kAllMethods) {
            const auto idx = static_cast<std::size_t>(method);
            double mn = std::numeric_limits<double>::infinity();
            for (const auto& m : image_min) mn = std::min(mn, m[idx]);
            pass.calibration.min_confidence[idx] = mn;
        }
    }
    return pass;
}

ScoreResult score_image(const Tensor& image, const Tensor& features, const Tensor& logits,
                        const coreset::Coreset& cs, const ScoringPlan& plan) {
    plan.fusion.validate();
    check_inputs(image, features, &logits);
    if (features.dim(2) != cs.dim())
        throw ValidationError("feature dimension " + std::to_string(features.dim(2)) +
                              " does not match coreset dimension " + std::to_string(cs.dim()));

    scores::KlTemplates templates;
    const scores::KlTemplates* tpl = nullptr;
    if (plan.use_confidence && plan.fusion.confidence_method == scores::ConfidenceMethod::kl_match) {
        if (!cs.kl_templates) throw ValidationError("kl_match confidence needs a coreset built with logits");
        templates.templates = *cs.kl_templates;
        tpl = &templates;
    }

    ScoreResult result;
    if (plan.method == Method::pixel) {
        result.per_pixel = scores::confidence_from_logits(logits, plan.fusion.confidence_method, tpl);
        return result;
    }

    auto partition = slic::slic_segment(image, plan.slic);
    const auto records = coreset::superpixel_embed(features, partition);
    Matrix embeddings(records.size(), cs.dim());
    for (std::size_t i = 0; i < records.size(); ++i)
        std::copy(records[i].embedding.begin(), records[i].embedding.end(), embeddings.row(i).begin());

    std::vector<double> conf;
    if (plan.use_confidence) {
        conf = scores::rectify(
            scores::aggregate_confidence(
                scores::confidence_from_logits(logits, plan.fusion.confidence_method, tpl), partition),
            plan.fusion);
    } else {
        conf.assign(partition.num_superpixels, 1.0);
    }

    switch (plan.method) {
        case Method::suplid: {
            const auto guidance = scores::guidance_score(embeddings, cs, plan.fusion.guidance_method,
                                                         plan.fusion.k_guidance, plan.fusion.rectify_floor);
            result.per_superpixel = scores::fuse(conf, guidance);
            break;
        }
        case Method::knn:
            result.per_superpixel = scores::knn_baseline(embeddings, cs, plan.fusion.k_guidance);
            break;
        case Method::nnguide:
            result.per_superpixel = scores::nnguide_baseline(conf, embeddings, cs, plan.fusion.k_guidance);
            break;
        case Method::pixel: break;
    }
    result.per_pixel = scores::broadcast_to_pixels(result.per_superpixel, partition);
    result.partition = std::move(partition);
    return result;
}

}  // namespace suplid::pipeline
